"""Command-line interface.

Subcommands: ``validate`` (assumption checks), ``forward-rate`` (strong
Euler rate experiment), ``solve`` (single-mesh scheme values along one
path), ``converge`` (full error report), ``regularity`` (Z oscillation
statistics).  Exit codes: 0 success, 1 validation failure, 2 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from . import config as cfg
from .condexp import gauss_hermite, spatial_axis
from .forward import simulate_forward
from .harness import emit_report, forward_rate, report_lines, run_convergence, fmt_value
from .model import build_uniform_grid, validate_problem
from .oracle import z_l2_regularity
from .rng import sample_bundles
from .backward import evaluate_scheme, solve_backward

__all__ = ["main"]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="key=value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdsde")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("validate", "forward-rate", "solve", "converge", "regularity"):
        _add_common(sub.add_parser(name))
    return parser


def _write_lines(lines, out_path) -> None:
    text = "\n".join(lines) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)


def _cmd_validate(raw, exp) -> int:
    case = cfg.case_from_config(exp)
    n = int(raw.get("n", exp.meshes[0]))
    grid = build_uniform_grid(n, exp.horizon)
    report = validate_problem(case.problem, grid)
    print(report)
    return 0 if report.overall else 1


def _cmd_forward_rate(raw, exp, out) -> int:
    report = forward_rate(
        mu=float(raw.get("mu", 0.2)),
        nu=float(raw.get("nu", 0.3)),
        x0=exp.x0,
        horizon=exp.horizon,
        meshes=exp.meshes,
        paths=int(raw.get("paths", 10_000)),
        seed=exp.seed,
    )
    lines = ["mesh,n,errX,errX_se"]
    for mesh, n, err, se in report.rows:
        lines.append(f"{fmt_value(mesh)},{n},{fmt_value(err)},{fmt_value(se)}")
    lines.append(f"# slope={fmt_value(report.slope)} seed={report.seed}")
    _write_lines(lines, out)
    return 0


def _cmd_solve(raw, exp, out) -> int:
    case = cfg.case_from_config(exp)
    n = int(raw.get("n", exp.meshes[0]))
    grid = build_uniform_grid(n, exp.horizon)
    rule = gauss_hermite(exp.quad_order)
    axis = spatial_axis(
        exp.x0, exp.space_scale, exp.horizon, exp.space_nodes, exp.space_width
    )
    bundle = next(sample_bundles(grid, exp.seed, 1, case.problem.dim))
    solution = solve_backward(case.problem, grid, bundle.dB, axis, rule)
    traj = simulate_forward(case.problem, grid, bundle)
    ev = evaluate_scheme(solution, traj)
    lines = ["i,t,Y,Z"]
    for i in range(n + 1):
        lines.append(
            f"{i},{fmt_value(grid.times[i])},{fmt_value(ev.Y[i])},{fmt_value(ev.Z[i])}"
        )
    _write_lines(lines, out)
    return 0


def _cmd_converge(raw, exp, out) -> int:
    report = run_convergence(exp)
    if out is None:
        _write_lines(report_lines(report), None)
    else:
        emit_report(report, out)
    return 0


def _cmd_regularity(raw, exp, out) -> int:
    case = cfg.case_from_config(exp)
    fine_factor = int(raw.get("fine_factor", 16))
    count = int(raw.get("count", 10_000))
    lines = ["n,mesh,statistic,statistic_se,corollary,corollary_se"]
    for n in exp.meshes:
        grid = build_uniform_grid(int(n), exp.horizon)
        res = z_l2_regularity(case, grid, fine_factor, count, exp.seed)
        lines.append(
            f"{n},{fmt_value(grid.mesh)},{fmt_value(res.statistic)},{fmt_value(res.statistic_se)},"
            f"{fmt_value(res.corollary)},{fmt_value(res.corollary_se)}"
        )
    lines.append(f"# seed={exp.seed}")
    _write_lines(lines, out)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        raw = cfg.load_config(args.config)
        exp = cfg.build_experiment(raw, seed=args.seed, threads=args.threads)
        if args.command == "validate":
            return _cmd_validate(raw, exp)
        if args.command == "forward-rate":
            return _cmd_forward_rate(raw, exp, args.out)
        if args.command == "solve":
            return _cmd_solve(raw, exp, args.out)
        if args.command == "converge":
            return _cmd_converge(raw, exp, args.out)
        if args.command == "regularity":
            return _cmd_regularity(raw, exp, args.out)
        raise AssertionError(f"unhandled command {args.command}")
    except OSError as exc:
        print(f"bdsde: I/O error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"bdsde: invalid configuration: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
