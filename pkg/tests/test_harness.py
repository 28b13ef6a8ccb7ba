"""Error metrics, rate fitting, report emission, experiment invariants."""

import numpy as np
import pytest

from bdsde.harness import (
    EXACT,
    EXACTNESS_FLOOR,
    ErrorReport,
    ExperimentConfig,
    MeshErrors,
    emit_report,
    fit_rate,
    forward_rate,
    run_convergence,
)
from bdsde.model import build_uniform_grid
from bdsde.oracle import closed_form
from bdsde.rng import sample_increments


class TestFitRate:
    def test_exact_proportionality(self):
        slope = fit_rate([(0.1, 0.1), (0.05, 0.05), (0.025, 0.025)])
        assert slope == pytest.approx(1.0)

    def test_quadratic_decay(self):
        slope = fit_rate([(0.1, 0.01), (0.05, 0.0025), (0.025, 0.000625)])
        assert slope == pytest.approx(2.0)

    def test_floor_returns_exact_flag(self):
        assert fit_rate([(0.1, 1e-14), (0.05, 1e-14), (0.025, 1e-14)]) == EXACT

    def test_rejects_few_points(self):
        with pytest.raises(ValueError):
            fit_rate([(0.1, 0.1), (0.05, 0.05)])

    def test_rejects_negative_errors(self):
        with pytest.raises(ValueError):
            fit_rate([(0.1, 0.1), (0.05, -0.05), (0.025, 0.025)])

    def test_mixed_floor_points_excluded(self):
        slope = fit_rate([(0.1, 0.1), (0.05, 0.05), (0.025, 1e-15), (0.2, 0.2)])
        assert slope == pytest.approx(1.0)


class TestEmitReport:
    def make_report(self, rows=3):
        mesh_rows = tuple(
            MeshErrors(0.25 / 2**k, 4 * 2**k, 1e-3 / 2**k, 1e-5, 2e-3 / 2**k, 2e-5, 0.0)
            for k in range(rows)
        )
        slope = 1.0 if rows >= 3 else None
        return ErrorReport(mesh_rows, slope, slope, seed=7)

    def test_header_contract(self, tmp_path):
        path = tmp_path / "report.csv"
        emit_report(self.make_report(), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "mesh,n,errY,errY_se,errZ,errZ_se,wall_ms"
        assert len(lines) == 1 + 3 + 1
        assert lines[-1].startswith("# slopeY=1.0 slopeZ=1.0 seed=7")

    def test_empty_report_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        emit_report(ErrorReport((), None, None, seed=0), path)
        assert path.read_text() == "mesh,n,errY,errY_se,errZ,errZ_se,wall_ms\n"

    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_report(self.make_report(), a)
        emit_report(self.make_report(), b)
        assert a.read_bytes() == b.read_bytes()

    def test_exact_flag_written(self, tmp_path):
        report = ErrorReport(self.make_report().rows, EXACT, EXACT, seed=1)
        path = tmp_path / "r.csv"
        emit_report(report, path)
        assert "slopeY=exact slopeZ=exact" in path.read_text()


class TestExperimentConfig:
    def test_rejects_empty_meshes(self):
        with pytest.raises(ValueError):
            ExperimentConfig(meshes=())

    def test_rejects_zero_counts(self):
        with pytest.raises(ValueError):
            ExperimentConfig(outer=0)

    def test_refuses_insufficient_samples(self):
        config = ExperimentConfig(outer=3, inner=4, meshes=(4, 8, 16))
        with pytest.raises(ValueError, match="16 samples"):
            run_convergence(config)


class TestRunConvergence:
    def test_identity_exact_all_meshes(self):
        config = ExperimentConfig(
            case="identity", meshes=(4, 8), outer=8, inner=8, seed=3, space_width=12.0
        )
        report = run_convergence(config)
        for row in report.rows:
            assert row.errY < 1e-10
            assert row.errZ < 1e-10

    def test_determinism(self):
        config = ExperimentConfig(case="additive_g", params={"g0": 0.7},
                                  meshes=(4, 8, 16), outer=4, inner=4, seed=9)
        r1 = run_convergence(config)
        r2 = run_convergence(config)
        assert r1 == r2

    def test_threaded_matches_serial(self):
        base = dict(case="linear_f", params={"c": 0.5}, meshes=(4, 8, 16),
                    outer=6, inner=4, seed=2)
        serial = run_convergence(ExperimentConfig(**base, threads=1))
        threaded = run_convergence(ExperimentConfig(**base, threads=4))
        for a, b in zip(serial.rows, threaded.rows):
            assert a.errY == b.errY and a.errZ == b.errZ

    def test_additive_g_below_exactness_floor(self):
        # affine data: the sweep is exact, so errors sit at rounding level
        # and mesh monotonicity is vacuous below the floor
        config = ExperimentConfig(case="additive_g", params={"g0": 0.7},
                                  meshes=(4, 8, 16, 32), outer=8, inner=8, seed=1)
        report = run_convergence(config)
        for row in report.rows:
            assert row.errY < EXACTNESS_FLOOR
            assert row.errZ < EXACTNESS_FLOOR
        assert report.slopeY == EXACT and report.slopeZ == EXACT

    def test_wall_time_zero_when_timings_off(self):
        config = ExperimentConfig(case="identity", meshes=(4, 8, 16), outer=4, inner=4)
        report = run_convergence(config)
        assert all(r.wall_ms == 0.0 for r in report.rows)

    def test_wall_time_measured_when_enabled(self):
        config = ExperimentConfig(case="identity", meshes=(4,), outer=4, inner=4,
                                  timings=True)
        report = run_convergence(config)
        assert report.rows[0].wall_ms > 0.0


class TestTheoremRateForm:
    def test_exponential_g_first_order_band_and_bounded_ratio(self):
        # the backward-driver family is the one whose discretization error is
        # dominated by the backward integral, so the proven first-order decay
        # of the squared errors is actually visible (nondegenerate) here
        config = ExperimentConfig(
            case="exponential_g", params={"beta": 0.5},
            meshes=(4, 8, 16, 32), outer=256, inner=8, seed=0,
        )
        report = run_convergence(config)
        assert 0.7 <= report.slopeY <= 1.4
        assert 0.7 <= report.slopeZ <= 1.4
        ratios = [(r.errY + r.errZ) / r.mesh for r in report.rows]
        assert max(ratios) / min(ratios) < 3.0


class TestYIncrementScaling:
    @pytest.mark.parametrize("case_name", ["identity", "quadratic_phi"])
    def test_mean_square_increment_first_order_in_lag(self, case_name):
        # E|Y_t - Y_s|^2 should scale linearly in |t - s| at small lags
        case = closed_form(case_name)
        grid = build_uniform_grid(512, 1.0)
        count = 20_000
        dW = sample_increments(grid, 21, count, 1, "W")[:, :, 0]
        X = case.x0 + np.concatenate(
            [np.zeros((count, 1)), np.cumsum(dW, axis=1)], axis=1
        )
        times = grid.times
        s_idx = 128  # s = 0.25
        points = []
        for lag_idx in (32, 64, 128, 256):  # lags 1/16 .. 1/2
            t_idx = s_idx + lag_idx
            ys = case.y(times[s_idx], X[:, s_idx], 0.0)
            yt = case.y(times[t_idx], X[:, t_idx], 0.0)
            lag = float(times[t_idx] - times[s_idx])
            points.append((lag, float(np.mean((yt - ys) ** 2))))
        from bdsde.harness import fit_rate

        slope = fit_rate(points)
        assert 0.8 <= slope <= 1.3


class TestForwardRate:
    def test_report_structure_and_slope(self):
        report = forward_rate(meshes=(8, 16, 32, 64), paths=4000, seed=3)
        assert len(report.rows) == 4
        assert 0.8 <= report.slope <= 1.3
        meshes = [row[0] for row in report.rows]
        assert meshes == sorted(meshes, reverse=True)
