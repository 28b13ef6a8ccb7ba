"""Config parsing and the command-line surface (exit codes, file contracts)."""

import subprocess
import sys

import pytest

from bdsde.cli import main
from bdsde.config import build_experiment, parse_config


BASE_CONFIG = """\
# convergence experiment
case=additive_g
g0=0.7
meshes=4,8,16,32
M=64
K=64
quad_order=8
space_nodes=201
T=1.0
x0=1.0
seed=12
"""


def write_config(tmp_path, text=BASE_CONFIG, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_values_and_comments(self):
        raw = parse_config(BASE_CONFIG)
        assert raw["case"] == "additive_g"
        assert raw["meshes"] == (4, 8, 16, 32)
        assert raw["g0"] == 0.7
        assert raw["seed"] == 12

    def test_case_params_collected(self):
        exp = build_experiment(parse_config(BASE_CONFIG))
        assert exp.params == {"g0": 0.7}
        assert exp.outer == 64 and exp.inner == 64

    def test_overrides_win(self):
        exp = build_experiment(parse_config(BASE_CONFIG), seed=99, threads=2)
        assert exp.seed == 99 and exp.threads == 2

    def test_rejects_garbage_line(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_config("not a pair\n")

    def test_bool_keys(self):
        raw = parse_config("timings=on\ncase=identity\n")
        assert build_experiment(raw).timings is True


class TestCliCommands:
    def test_validate_passes_for_builtin_case(self, tmp_path, capsys):
        code = main(["validate", "--config", write_config(tmp_path)])
        out = capsys.readouterr().out
        assert code == 0
        assert "overall: PASS" in out

    def test_unknown_case_is_validation_failure(self, tmp_path):
        cfg = write_config(tmp_path, "case=unobtainium\nmeshes=4\n")
        assert main(["validate", "--config", cfg]) == 1

    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["validate", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_unwritable_out_is_io_error(self, tmp_path):
        cfg = write_config(tmp_path, "case=identity\nmeshes=4\nM=4\nK=4\n")
        out = str(tmp_path / "missing_dir" / "x.csv")
        assert main(["solve", "--config", cfg, "--out", out]) == 2

    def test_solve_writes_scheme_values(self, tmp_path):
        cfg = write_config(tmp_path, "case=identity\nn=6\nmeshes=6\n")
        out = tmp_path / "solve.csv"
        assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "i,t,Y,Z"
        assert len(lines) == 1 + 7
        last = lines[-1].split(",")
        assert int(last[0]) == 6 and float(last[1]) == 1.0

    def test_forward_rate_csv(self, tmp_path):
        cfg = write_config(tmp_path, "case=identity\nmeshes=8,16,32\npaths=500\nmu=0.2\nnu=0.3\n")
        out = tmp_path / "fr.csv"
        assert main(["forward-rate", "--config", cfg, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "mesh,n,errX,errX_se"
        assert len(lines) == 1 + 3 + 1
        assert lines[-1].startswith("# slope=")

    def test_regularity_table(self, tmp_path):
        cfg = write_config(
            tmp_path, "case=quadratic_phi\nmeshes=5,10\ncount=300\nfine_factor=8\n"
        )
        out = tmp_path / "reg.csv"
        assert main(["regularity", "--config", cfg, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "n,mesh,statistic,statistic_se,corollary,corollary_se"
        assert len(lines) == 1 + 2 + 1

    def test_converge_writes_report(self, tmp_path):
        cfg = write_config(
            tmp_path, "case=identity\nmeshes=4,8,16\nM=4\nK=4\nseed=5\n"
        )
        out = tmp_path / "conv.csv"
        assert main(["converge", "--config", cfg, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "mesh,n,errY,errY_se,errZ,errZ_se,wall_ms"
        assert len(lines) == 1 + 3 + 1

    def test_converge_rerun_byte_identical(self, tmp_path):
        cfg = write_config(
            tmp_path, "case=additive_g\ng0=0.7\nmeshes=4,8,16\nM=4\nK=4\nseed=5\n"
        )
        out1, out2 = tmp_path / "c1.csv", tmp_path / "c2.csv"
        assert main(["converge", "--config", cfg, "--out", str(out1)]) == 0
        assert main(["converge", "--config", cfg, "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_converge_stdout_fallback(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "case=identity\nmeshes=4,8,16\nM=4\nK=4\n")
        assert main(["converge", "--config", cfg]) == 0
        assert "slopeY=" in capsys.readouterr().out

    def test_seed_override_changes_output(self, tmp_path):
        cfg = write_config(tmp_path, "case=identity\nn=4\nmeshes=4\nseed=1\n")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["solve", "--config", cfg, "--out", str(a)])
        main(["solve", "--config", cfg, "--seed", "2", "--out", str(b)])
        assert a.read_text() != b.read_text()


def test_entry_point_subprocess(tmp_path):
    cfg = tmp_path / "e.cfg"
    cfg.write_text("case=identity\nmeshes=4\nM=4\nK=4\n")
    proc = subprocess.run(
        [sys.executable, "-m", "bdsde.cli", "validate", "--config", str(cfg)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "overall: PASS" in proc.stdout
