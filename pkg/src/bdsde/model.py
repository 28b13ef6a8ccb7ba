"""Problem and time-grid definitions with standing-assumption validation.

The solver works on a pair (problem, grid):

* ``BDSDEProblem`` holds the coefficients of the forward diffusion
  ``dX = b(X) dt + sigma(X) dW`` and of the backward equation driven by the
  drivers ``f`` and ``g`` with terminal condition ``phi``.
* ``TimeGrid`` is a subdivision ``0 = t_0 < ... < t_n = T`` together with its
  mesh (largest step) and, optionally, a declared kappa-uniformity constant
  (``kappa * dt_i >= mesh`` for every interval).

Lipschitz constants and the contraction bound on ``dg/dz`` cannot be verified
exactly for black-box coefficients, so :func:`validate_problem` runs sampled
refutation checks on a deterministic low-discrepancy lattice: a failed check
disproves the declared constants, a passing one is advisory only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Array = np.ndarray

__all__ = [
    "TimeGrid",
    "LipschitzBounds",
    "BDSDEProblem",
    "CheckResult",
    "ValidationReport",
    "build_uniform_grid",
    "validate_kappa_uniform",
    "validate_problem",
]

# Relative slack for kappa-uniformity comparisons; protects exact-boundary
# cases such as kappa = mesh / min(dt) against last-ulp rounding.
_KAPPA_RTOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Subdivision of [0, T] with mesh and kappa-uniformity metadata.

    ``times`` must start at 0, end at the horizon and be strictly
    increasing.  ``kappa`` is the declared uniformity constant (``None``
    when the grid is not flagged kappa-uniform); when set it is checked
    at construction.
    """

    times: Array
    kappa: float | None = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("grid needs at least two time points")
        if times[0] != 0.0:
            raise ValueError("grid must start at t=0")
        if not np.all(np.diff(times) > 0.0):
            raise ValueError("grid times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        if self.kappa is not None:
            if self.kappa < 1.0:
                raise ValueError("kappa must be >= 1")
            if not validate_kappa_uniform(self, self.kappa):
                raise ValueError(
                    f"grid is not {self.kappa}-uniform (mesh {self.mesh})"
                )

    @property
    def n(self) -> int:
        """Number of intervals."""
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def deltas(self) -> Array:
        """Interval lengths dt_i = t_i - t_{i-1}, shape (n,)."""
        return np.diff(self.times)

    @property
    def mesh(self) -> float:
        """Largest time step |pi|."""
        return float(self.deltas.max())


def build_uniform_grid(n: int, horizon: float) -> TimeGrid:
    """Uniform subdivision of [0, horizon] into ``n`` intervals (kappa = 1)."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if not horizon > 0.0:
        raise ValueError("horizon must be positive")
    return TimeGrid(np.linspace(0.0, float(horizon), int(n) + 1), kappa=1.0)


def validate_kappa_uniform(grid: TimeGrid, kappa: float) -> bool:
    """True iff ``kappa * dt_i >= mesh`` for every interval of the grid."""
    if kappa < 1.0:
        raise ValueError("kappa must be >= 1")
    mesh = grid.mesh
    return bool(np.all(kappa * grid.deltas >= mesh * (1.0 - _KAPPA_RTOL)))


@dataclass(frozen=True)
class LipschitzBounds:
    """Declared regularity constants of the drivers.

    ``alpha`` is the coefficient of ``|z - z'|^2`` in the squared Lipschitz
    bound for ``g``; the convergence theory requires ``alpha * kappa < 1``.
    """

    L_f: float = 0.0
    L_g: float = 0.0
    alpha: float = 0.0

    def __post_init__(self) -> None:
        if self.L_f < 0.0 or self.L_g < 0.0:
            raise ValueError("Lipschitz constants must be nonnegative")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")


Drift = Callable[[Array], Array]
Diffusion = Callable[[Array], Array]
Driver = Callable[[float, Array, Array, Array], Array]
Terminal = Callable[[Array], Array]


@dataclass(frozen=True)
class BDSDEProblem:
    """Coefficient bundle for the forward/backward system.

    Calling conventions (all coefficients must broadcast over leading axes):

    * ``b(x)``: state ``(..., d) -> (..., d)``
    * ``sigma(x)``: state ``(..., d) -> (..., d, d)``
    * ``driver_f(t, x, y, z)`` and ``driver_g(t, x, y, z)``:
      scalar ``t``, state ``(..., d)``, ``y``/``z`` of shape ``(...)``,
      returning shape ``(...)``
    * ``phi(x)``: state ``(..., d) -> (...)``
    """

    dim: int
    b: Drift
    sigma: Diffusion
    driver_f: Driver
    driver_g: Driver
    phi: Terminal
    x0: Array
    lipschitz: LipschitzBounds = field(default_factory=LipschitzBounds)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.shape != (self.dim,):
            raise ValueError(f"x0 must have shape ({self.dim},)")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        lines = [
            f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}"
            for c in self.checks
        ]
        lines.append(f"overall: {'PASS' if self.overall else 'FAIL'}")
        return "\n".join(lines)


def _weyl_lattice(count: int, dims: int) -> Array:
    """Deterministic low-discrepancy points in [0, 1)^dims.

    Additive (Kronecker) lattice with sqrt-of-prime increments; reproducible
    and well spread for the small probe counts used here.
    """
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37]
    while len(primes) < dims:
        primes.append(primes[-1] + 2)  # crude but deterministic fallback
    alphas = np.sqrt(np.array(primes[:dims], dtype=float))
    k = np.arange(1, count + 1, dtype=float)[:, None]
    return np.mod(k * alphas[None, :], 1.0)


def _probe_points(
    problem: BDSDEProblem,
    horizon: float,
    count: int,
    bounds: tuple[float, float] | None,
) -> tuple[Array, Array, Array, Array]:
    """Lattice probes (t, x, y, z); x spans ``bounds`` around each x0 axis."""
    lo, hi = bounds if bounds is not None else (-4.0, 4.0)
    if not hi > lo:
        raise ValueError("probe bounds must satisfy hi > lo")
    d = problem.dim
    u = _weyl_lattice(count, d + 3)
    t = u[:, 0] * horizon
    x = problem.x0[None, :] + lo + (hi - lo) * u[:, 1 : d + 1]
    y = lo + (hi - lo) * u[:, d + 1]
    z = lo + (hi - lo) * u[:, d + 2]
    return t, x, y, z


def _finite(values: Array) -> bool:
    return bool(np.all(np.isfinite(values)))


def validate_problem(
    problem: BDSDEProblem,
    grid: TimeGrid,
    probe_count: int = 128,
    bounds: tuple[float, float] | None = None,
) -> ValidationReport:
    """Check the standing assumptions as far as sampling allows.

    Exact checks: ``alpha * kappa < 1`` for the grid's kappa (the smallest
    admissible one when the grid carries no declared value).  Sampled checks
    (advisory, refutation-only): finiteness of every coefficient on the probe
    lattice, a centered-difference estimate of ``sup |dg/dz| < 1``, and the
    squared Lipschitz-ratio bounds for ``f`` and ``g`` against the declared
    constants.
    """
    if probe_count < 1:
        raise ValueError("probe_count must be >= 1")
    checks: list[CheckResult] = []

    kappa = grid.kappa
    if kappa is None:
        kappa = grid.mesh / float(grid.deltas.min())
    ak = problem.lipschitz.alpha * kappa
    checks.append(
        CheckResult(
            "alpha_kappa",
            ak < 1.0,
            f"alpha*kappa = {ak:.6g} (needs < 1)",
        )
    )

    t, x, y, z = _probe_points(problem, grid.horizon, probe_count, bounds)

    # Finiteness of coefficient outputs on the lattice.
    bad_input = None
    finite_ok = True
    try:
        for name, vals in (
            ("b", problem.b(x)),
            ("sigma", problem.sigma(x)),
            ("phi", problem.phi(x)),
            ("f", _eval_driver(problem.driver_f, t, x, y, z)),
            ("g", _eval_driver(problem.driver_g, t, x, y, z)),
        ):
            flat = np.asarray(vals, dtype=float)
            if not _finite(flat):
                finite_ok = False
                idx = int(np.argmin(np.isfinite(flat.reshape(flat.shape[0], -1)).all(axis=1)))
                bad_input = (name, t[idx], x[idx], y[idx], z[idx])
                break
    except Exception as exc:  # coefficient raised: equally a failure
        finite_ok = False
        bad_input = ("exception", str(exc))
    checks.append(
        CheckResult(
            "finite_coefficients",
            finite_ok,
            "all coefficient outputs finite on probe lattice"
            if finite_ok
            else f"non-finite output: {bad_input}",
        )
    )

    if finite_ok:
        checks.append(_dg_dz_check(problem, t, x, y, z))
        checks.extend(_lipschitz_checks(problem, t, x, y, z))

    return ValidationReport(tuple(checks))


def _eval_driver(driver: Driver, t: Array, x: Array, y: Array, z: Array) -> Array:
    # drivers take a scalar t; evaluate probe-by-probe to honor the contract
    return np.array(
        [float(driver(float(t[i]), x[i], y[i], z[i])) for i in range(t.size)]
    )


def _dg_dz_check(problem, t, x, y, z) -> CheckResult:
    h = 1e-5
    g_plus = _eval_driver(problem.driver_g, t, x, y, z + h)
    g_minus = _eval_driver(problem.driver_g, t, x, y, z - h)
    est = float(np.max(np.abs(g_plus - g_minus) / (2.0 * h)))
    # strict contraction required; 1e-6 slack keeps a true derivative of 1
    # (e.g. g = z) from slipping under the bound through rounding
    passed = est < 1.0 - 1e-6
    return CheckResult(
        "dg_dz_bound",
        passed,
        f"sampled sup|dg/dz| estimate {est:.6g} (advisory, needs < 1)",
    )


def _lipschitz_checks(problem, t, x, y, z) -> list[CheckResult]:
    half = t.size // 2
    if half == 0:  # single probe: nothing to pair
        return [
            CheckResult("lipschitz_f", True, "advisory: too few probes to pair"),
            CheckResult("lipschitz_g", True, "advisory: too few probes to pair"),
        ]
    a = slice(0, half)
    b = slice(half, 2 * half)
    dt = np.abs(t[a] - t[b])
    dx2 = np.sum((x[a] - x[b]) ** 2, axis=-1)
    dy2 = (y[a] - y[b]) ** 2
    dz2 = (z[a] - z[b]) ** 2
    slack = 1.0 + 1e-9

    f1 = _eval_driver(problem.driver_f, t[a], x[a], y[a], z[a])
    f2 = _eval_driver(problem.driver_f, t[b], x[b], y[b], z[b])
    bound_f = problem.lipschitz.L_f * (dt + dx2 + dy2 + dz2)
    viol_f = (f1 - f2) ** 2 > bound_f * slack + 1e-15
    check_f = CheckResult(
        "lipschitz_f",
        not bool(viol_f.any()),
        f"{int(viol_f.sum())} of {half} sampled pairs violate the declared L_f"
        " bound (advisory)",
    )

    g1 = _eval_driver(problem.driver_g, t[a], x[a], y[a], z[a])
    g2 = _eval_driver(problem.driver_g, t[b], x[b], y[b], z[b])
    bound_g = (
        problem.lipschitz.L_g * (dt + dx2 + dy2) + problem.lipschitz.alpha * dz2
    )
    viol_g = (g1 - g2) ** 2 > bound_g * slack + 1e-15
    check_g = CheckResult(
        "lipschitz_g",
        not bool(viol_g.any()),
        f"{int(viol_g.sum())} of {half} sampled pairs violate the declared"
        " (L_g, alpha) bound (advisory)",
    )
    return [check_f, check_g]
