"""Backward induction for the (Y, Z) approximation with a frozen B-path.

For one realization of the backward-noise increments the conditional
expectations defining the scheme reduce to Gaussian integrals over the
single forward increment of each step.  The recursion computes, per time
layer i and spatial node x (one Euler substep x+ = x + b(x) dt + sigma(x) w,
integrating over w ~ N(0, dt)):

    U(w) = u_{i+1}(x+) + f(t_{i+1}, x+, u_{i+1}(x+), v_{i+1}(x+)) dt
    V(w) = g(t_{i+1}, x+, u_{i+1}(x+), v_{i+1}(x+))

    u_i(x) = E[U] + dB_{i+1} E[V]
    v_i(x) = (E[U w] + dB_{i+1} E[V w]) / dt

started from u_n = terminal condition, v_n = 0.  Evaluating the layers
along an Euler trajectory of the forward diffusion yields the grid-time
approximations (Y_i, Z_i); the Z value is the v-layer read, with Z_n = 0 by
definition.

Because the drivers depend on the path only through the current state, each
layer is a function of the current state alone; the implementation enforces
this structurally (a layer never sees earlier states).  With g identically
zero the dB factors multiply exact zeros, so the output is bit-identical
across B-paths and the scheme degenerates to a plain BSDE solver.

Layers are kept for all i (memory O(n * nodes)) so one backward sweep can
be reused across many forward paths.  Quadrature order and the spatial grid
are caller-supplied; multilinear interpolation plus Gauss-Hermite quadrature
make the whole sweep exact on affine data.

This solver is for scalar Y and Z (forward dimension 1); the grid-function
backend itself supports up to three dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .condexp import AxisSpec, GridFunction, QuadratureRule, interpolate
from .forward import ForwardTrajectory
from .model import BDSDEProblem, TimeGrid

Array = np.ndarray

__all__ = [
    "SchemeError",
    "BackwardLayer",
    "SchemeSolution",
    "SchemeEvaluation",
    "terminal_layer",
    "backward_step",
    "solve_backward",
    "evaluate_scheme",
    "evaluate_scheme_many",
    "dump_layers",
]


class SchemeError(RuntimeError):
    """Non-finite value produced by the backward recursion."""


@dataclass(frozen=True, eq=False)
class BackwardLayer:
    """One time layer: state functions u (value) and v (gradient proxy)."""

    index: int
    u: GridFunction
    v: GridFunction


@dataclass(frozen=True, eq=False)
class SchemeSolution:
    """All layers n..0 for one frozen B-path, indexed so layers[i].index == i."""

    layers: tuple[BackwardLayer, ...]
    frozen_dB: Array
    grid_ref: TimeGrid
    problem: BDSDEProblem

    def __post_init__(self) -> None:
        if len(self.layers) != self.grid_ref.n + 1:
            raise ValueError("need one layer per grid time")
        for i, layer in enumerate(self.layers):
            if layer.index != i:
                raise ValueError("layers must be ordered by time index")
        dB = np.asarray(self.frozen_dB, dtype=float)
        if dB.shape != (self.grid_ref.n,):
            raise ValueError("frozen_dB must have length n")
        dB.setflags(write=False)
        object.__setattr__(self, "frozen_dB", dB)


@dataclass(frozen=True, eq=False)
class SchemeEvaluation:
    """Scheme values along one forward trajectory; Y[n] is the terminal
    condition applied exactly and Z[n] = 0."""

    Y: Array
    Z: Array
    grid_ref: TimeGrid
    traj: ForwardTrajectory


def _require_dim1(problem: BDSDEProblem) -> None:
    if problem.dim != 1:
        raise NotImplementedError("backward solver supports dim=1 (scalar Y, Z)")


def terminal_layer(problem: BDSDEProblem, spatial: AxisSpec, index: int = 0) -> BackwardLayer:
    """Layer n: terminal condition sampled on the nodes, v identically 0."""
    _require_dim1(problem)
    u = GridFunction.sample(problem.phi, [spatial])
    v = GridFunction(u.axes, np.zeros_like(u.values))
    return BackwardLayer(index, u, v)


def backward_step(
    next_layer: BackwardLayer,
    dB_next: float,
    dt_next: float,
    t_next: float,
    problem: BDSDEProblem,
    rule: QuadratureRule,
) -> BackwardLayer:
    """Produce layer i from layer i+1.

    ``dB_next`` is the frozen backward increment over (t_i, t_{i+1}] and
    ``t_next`` the right endpoint at which the drivers are evaluated.
    """
    _require_dim1(problem)
    if not dt_next > 0.0:
        raise ValueError("dt_next must be positive")
    axis = next_layer.u.axes[0]
    x = next_layer.u.nodes(0)

    dw = np.sqrt(dt_next) * rule.nodes
    bx = np.asarray(problem.b(x[:, None]), dtype=float)[..., 0]
    sx = np.asarray(problem.sigma(x[:, None]), dtype=float)[..., 0, 0]
    x_plus = x[:, None] + bx[:, None] * dt_next + sx[:, None] * dw[None, :]

    hu = interpolate(next_layer.u, x_plus)
    hv = interpolate(next_layer.v, x_plus)
    xs = x_plus[..., None]  # state convention (..., d)
    hf = np.broadcast_to(
        np.asarray(problem.driver_f(t_next, xs, hu, hv), dtype=float), x_plus.shape
    )
    hg = np.broadcast_to(
        np.asarray(problem.driver_g(t_next, xs, hu, hv), dtype=float), x_plus.shape
    )

    integrand = hu + dt_next * hf
    for name, vals in (("f", hf), ("g", hg)):
        if not np.all(np.isfinite(vals)):
            node, qnode = np.argwhere(~np.isfinite(vals))[0]
            raise SchemeError(
                f"driver {name} non-finite at layer {next_layer.index - 1}, "
                f"node x={x[node]}, quadrature point {qnode}"
            )

    w = rule.weights
    u_vals = integrand @ w + dB_next * (hg @ w)
    v_vals = ((integrand * dw) @ w + dB_next * ((hg * dw) @ w)) / dt_next
    if not (np.all(np.isfinite(u_vals)) and np.all(np.isfinite(v_vals))):
        node = int(np.argwhere(~(np.isfinite(u_vals) & np.isfinite(v_vals)))[0])
        raise SchemeError(
            f"non-finite layer value at layer {next_layer.index - 1}, node x={x[node]}"
        )

    return BackwardLayer(
        next_layer.index - 1,
        GridFunction((axis,), u_vals),
        GridFunction((axis,), v_vals),
    )


def solve_backward(
    problem: BDSDEProblem,
    grid: TimeGrid,
    dB: Array,
    spatial: AxisSpec,
    rule: QuadratureRule,
) -> SchemeSolution:
    """Full backward sweep for one frozen B-path.

    ``dB[i]`` is the backward increment over (t_i, t_{i+1}] (length n).
    """
    _require_dim1(problem)
    dB = np.asarray(dB, dtype=float)
    n = grid.n
    if dB.shape != (n,):
        raise ValueError(f"dB must have length {n}")
    deltas = grid.deltas
    times = grid.times

    layers: list[BackwardLayer] = [terminal_layer(problem, spatial, index=n)]
    for i in range(n - 1, -1, -1):
        layers.append(
            backward_step(
                layers[-1],
                float(dB[i]),
                float(deltas[i]),
                float(times[i + 1]),
                problem,
                rule,
            )
        )
    layers.reverse()
    return SchemeSolution(tuple(layers), dB.copy(), grid, problem)


def _check_traj(solution: SchemeSolution, grid: TimeGrid) -> None:
    if not np.array_equal(solution.grid_ref.times, grid.times):
        raise ValueError("trajectory grid does not match solution grid")


def evaluate_scheme(solution: SchemeSolution, traj: ForwardTrajectory) -> SchemeEvaluation:
    """Read (Y, Z) along one Euler trajectory.

    The B-path frozen in the solution must be independent of the
    trajectory's W-path for the values to estimate the scheme.
    """
    _check_traj(solution, traj.grid_ref)
    states = traj.states[:, 0]
    Y, Z = evaluate_scheme_many(solution, states[None, :])
    return SchemeEvaluation(Y[0], Z[0], solution.grid_ref, traj)


def evaluate_scheme_many(solution: SchemeSolution, states: Array) -> tuple[Array, Array]:
    """Vectorized layer reads for a batch of trajectories.

    ``states`` has shape (paths, n+1) (scalar forward states); returns
    Y and Z arrays of the same shape.  The terminal value applies the
    terminal condition directly (no interpolation) and Z[:, n] = 0.
    """
    states = np.asarray(states, dtype=float)
    n = solution.grid_ref.n
    if states.ndim != 2 or states.shape[1] != n + 1:
        raise ValueError("states must have shape (paths, n+1)")
    Y = np.empty_like(states)
    Z = np.empty_like(states)
    for i in range(n):
        Y[:, i] = interpolate(solution.layers[i].u, states[:, i])
        Z[:, i] = interpolate(solution.layers[i].v, states[:, i])
    Y[:, n] = np.asarray(solution.problem.phi(states[:, n, None]), dtype=float)
    Z[:, n] = 0.0
    return Y, Z


def dump_layers(solution: SchemeSolution, path) -> None:
    """Debug dump, one line per node: x, u, v, layer index (not stable)."""
    with open(path, "w") as fh:
        fh.write("# x,u,v,layer\n")
        for layer in solution.layers:
            x = layer.u.nodes(0)
            for k in range(x.size):
                fh.write(
                    f"{float(x[k])!r},{float(layer.u.values[k])!r},"
                    f"{float(layer.v.values[k])!r},{layer.index}\n"
                )
