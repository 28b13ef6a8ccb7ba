"""Convergence experiments: error metrics, rate fitting, report files.

The central experiment measures, per mesh, the scheme's grid-time errors
against a closed-form reference on common random paths:

    errY = max_i E |Y_{t_i} - Y^pi_{t_i}|^2
    errZ = E sum_{i<n} dt_{i+1} |Z_{t_i} - Zpi1_{t_i}|^2

The Z metric uses the grid-time values of the scheme's Z approximation held
piecewise-constant on the following interval; the in-between values are not
produced by the recursion, and the oscillation bound on the true Z controls
the substitution error at the same order as the target rate.

Sampling is split into M outer B-paths (one backward sweep each, the
dominant cost) times K inner W-paths that reuse the sweep.  Standard errors
come from the B-path replicate means, the slow mixing dimension: the scheme
value at any grid time depends on the whole tail of the B-path.

Reports are deterministic for a fixed config: streams are counter-based,
reduction order is fixed (ascending path index) regardless of thread count,
and wall-clock measurement is opt-in so rerunning a config reproduces the
output byte for byte.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .condexp import gauss_hermite, spatial_axis
from .forward import exact_forward_many, geometric_problem, simulate_forward_many
from .model import build_uniform_grid
from .oracle import ClosedFormCase, calibrate_sign, closed_form
from .rng import sample_increments
from .backward import evaluate_scheme_many, solve_backward

Array = np.ndarray

EXACT = "exact"
# errors at or below this floor are artifacts of finite precision, not of
# the discretization; rate fits exclude them
EXACTNESS_FLOOR = 1e-12

__all__ = [
    "EXACT",
    "EXACTNESS_FLOOR",
    "ExperimentConfig",
    "experiment_case",
    "MeshErrors",
    "ErrorReport",
    "run_convergence",
    "fit_rate",
    "emit_report",
    "ForwardRateReport",
    "forward_rate",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs of one convergence experiment."""

    case: str = "identity"
    params: dict = field(default_factory=dict)
    meshes: tuple[int, ...] = (4, 8, 16, 32)
    outer: int = 64  # B-paths (one backward sweep each)
    inner: int = 64  # W-paths per B-path
    quad_order: int = 8
    space_nodes: int = 201
    space_width: float = 6.0
    space_scale: float = 1.0
    horizon: float = 1.0
    x0: float = 1.0
    seed: int = 0
    threads: int = 1
    timings: bool = False

    def __post_init__(self) -> None:
        if not self.meshes:
            raise ValueError("mesh list must not be empty")
        if any(int(n) != n or n < 1 for n in self.meshes):
            raise ValueError("mesh entries must be positive integers")
        if self.outer < 1 or self.inner < 1 or self.threads < 1:
            raise ValueError("counts must be >= 1")
        if self.space_nodes < 2:
            raise ValueError("space_nodes must be >= 2")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "meshes", tuple(int(n) for n in self.meshes))


@dataclass(frozen=True)
class MeshErrors:
    mesh: float
    n: int
    errY: float
    errY_se: float
    errZ: float
    errZ_se: float
    wall_ms: float


@dataclass(frozen=True)
class ErrorReport:
    rows: tuple[MeshErrors, ...]
    slopeY: float | str | None
    slopeZ: float | str | None
    seed: int


def experiment_case(config: ExperimentConfig) -> ClosedFormCase:
    """Built-in problem named by the config, sign-calibrated when needed."""
    params = dict(config.params)
    params["x0"] = config.x0
    params["T"] = config.horizon
    case = closed_form(config.case, params)
    if case.needs_sign_calibration:
        case = calibrate_sign(case, seed=config.seed ^ 0x5157)
    return case


def _mesh_errors(case: ClosedFormCase, config: ExperimentConfig, n: int) -> MeshErrors:
    grid = build_uniform_grid(n, config.horizon)
    rule = gauss_hermite(config.quad_order)
    axis = spatial_axis(
        config.x0,
        config.space_scale,
        config.horizon,
        config.space_nodes,
        config.space_width,
    )
    problem = case.problem
    times = grid.times
    deltas = grid.deltas
    M, K = config.outer, config.inner

    def one_b_path(j: int) -> tuple[Array, float]:
        dB = sample_increments(grid, config.seed, 1, 1, "B", j)[0, :, 0]
        sol = solve_backward(problem, grid, dB, axis, rule)
        dW = sample_increments(grid, config.seed, K, 1, "W", j * K)
        states = simulate_forward_many(problem, grid, dW)[:, :, 0]
        Y, Z = evaluate_scheme_many(sol, states)

        tail = np.empty(n + 1)
        tail[n] = 0.0
        tail[:n] = dB[::-1].cumsum()[::-1]
        Y_ref = case.y(times[None, :], states, tail[None, :])
        Z_ref = case.z(times[None, :], states, tail[None, :])

        y_sq = np.mean((Y_ref - Y) ** 2, axis=0)  # per grid index, K-mean
        z_sq = np.mean((Z_ref - Z) ** 2, axis=0)
        z_stat = float(np.sum(deltas * z_sq[:-1]))
        return y_sq, z_stat

    t0 = time.perf_counter()
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(one_b_path, range(M)))
    else:
        results = [one_b_path(j) for j in range(M)]
    wall_ms = (time.perf_counter() - t0) * 1e3 if config.timings else 0.0

    y_means = np.stack([r[0] for r in results])  # (M, n+1)
    z_stats = np.array([r[1] for r in results])  # (M,)

    per_index = y_means.mean(axis=0)
    i_star = int(np.argmax(per_index))
    errY = float(per_index[i_star])
    errY_se = float(np.std(y_means[:, i_star], ddof=1) / np.sqrt(M)) if M > 1 else 0.0
    errZ = float(z_stats.mean())
    errZ_se = float(np.std(z_stats, ddof=1) / np.sqrt(M)) if M > 1 else 0.0
    return MeshErrors(grid.mesh, n, errY, errY_se, errZ, errZ_se, wall_ms)


def run_convergence(config: ExperimentConfig) -> ErrorReport:
    """Run the mesh sweep for one case and fit the log-log error slopes."""
    if config.outer * config.inner < 16:
        raise ValueError("need at least 16 samples (outer * inner) per mesh")
    case = experiment_case(config)
    rows = tuple(_mesh_errors(case, config, n) for n in config.meshes)
    slopeY = slopeZ = None
    if len(rows) >= 3:
        slopeY = fit_rate([(r.mesh, r.errY) for r in rows])
        slopeZ = fit_rate([(r.mesh, r.errZ) for r in rows])
    return ErrorReport(rows, slopeY, slopeZ, config.seed)


def fit_rate(points) -> float | str:
    """Least-squares slope of log(error) against log(mesh).

    Needs at least three (mesh, error) pairs.  Errors at or below the
    exactness floor (1e-12) are excluded; if fewer than two points survive
    the method is running at machine precision and the flag ``"exact"`` is
    returned instead of a slope.
    """
    pts = [(float(m), float(e)) for m, e in points]
    if len(pts) < 3:
        raise ValueError("rate fitting needs at least 3 points")
    if any(e < 0.0 or m <= 0.0 for m, e in pts):
        raise ValueError("meshes must be positive and errors nonnegative")
    usable = [(m, e) for m, e in pts if e > EXACTNESS_FLOOR]
    if len(usable) < 2:
        return EXACT
    logs = np.log([m for m, _ in usable]), np.log([e for _, e in usable])
    slope = np.polyfit(logs[0], logs[1], 1)[0]
    return float(slope)


def fmt_value(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, str):
        return value
    return repr(float(value))


def report_lines(report: ErrorReport) -> list[str]:
    """CSV lines of a report: header, data rows, trailing slope comment."""
    lines = ["mesh,n,errY,errY_se,errZ,errZ_se,wall_ms"]
    for r in report.rows:
        lines.append(
            f"{fmt_value(r.mesh)},{r.n},{fmt_value(r.errY)},{fmt_value(r.errY_se)},"
            f"{fmt_value(r.errZ)},{fmt_value(r.errZ_se)},{fmt_value(r.wall_ms)}"
        )
    if report.rows:
        lines.append(
            f"# slopeY={fmt_value(report.slopeY)} slopeZ={fmt_value(report.slopeZ)}"
            f" seed={report.seed}"
        )
    return lines


def emit_report(report: ErrorReport, path) -> None:
    """Write the CSV contract to a file.

    Output is a pure function of the report, so identical configs produce
    byte-identical files.
    """
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(report_lines(report)) + "\n")


@dataclass(frozen=True)
class ForwardRateReport:
    rows: tuple[tuple[float, int, float, float], ...]  # (mesh, n, errX, errX_se)
    slope: float | str | None
    seed: int


def forward_rate(
    mu: float = 0.2,
    nu: float = 0.3,
    x0: float = 1.0,
    horizon: float = 1.0,
    meshes=(8, 16, 32, 64),
    paths: int = 10_000,
    seed: int = 0,
) -> ForwardRateReport:
    """Strong Euler error of the geometric family against its exact solution.

    Per mesh: max over grid times of the mean-square gap between the Euler
    states and the exact solution driven by the same increments.  The fitted
    log-log slope estimates the strong convergence order (squared), expected
    close to one.
    """
    problem = geometric_problem(mu, nu, x0)
    rows = []
    for n in meshes:
        grid = build_uniform_grid(int(n), horizon)
        dW = sample_increments(grid, seed, paths, 1, "W")
        euler = simulate_forward_many(problem, grid, dW)[:, :, 0]
        exact = exact_forward_many(
            "geometric", {"mu": mu, "nu": nu, "x0": x0}, grid, dW
        )[:, :, 0]
        sq = (exact - euler) ** 2
        per_index = sq.mean(axis=0)
        i_star = int(np.argmax(per_index))
        err = float(per_index[i_star])
        se = float(np.std(sq[:, i_star], ddof=1) / np.sqrt(paths))
        rows.append((grid.mesh, int(n), err, se))
    slope = fit_rate([(m, e) for m, _, e, _ in rows]) if len(rows) >= 3 else None
    return ForwardRateReport(tuple(rows), slope, seed)
