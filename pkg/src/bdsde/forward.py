"""Euler discretization of the forward diffusion and exact test solutions.

The Euler scheme freezes the coefficients at the left endpoint of each
interval:

    X_{t_{i+1}} = X_{t_i} + b(X_{t_i}) dt_{i+1} + sigma(X_{t_i}) dW_{i+1}.

Two coefficient families admit exact strong solutions driven by the same
increments and serve as oracles for the strong-rate tests:

* additive: constant ``b`` and ``sigma``, X_t = x0 + b t + sigma W_t
* geometric: ``b = mu x``, ``sigma = nu x`` (componentwise),
  X_t = x0 exp((mu - nu^2/2) t + nu W_t)

The geometric family violates global boundedness of the coefficient
derivatives but is used in forward tests only, exactly because its strong
solution is closed-form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BDSDEProblem, LipschitzBounds, TimeGrid
from .rng import PathBundle

Array = np.ndarray

__all__ = [
    "SimulationError",
    "ForwardTrajectory",
    "euler_step",
    "simulate_forward",
    "simulate_forward_many",
    "exact_forward",
    "exact_forward_many",
    "additive_problem",
    "geometric_problem",
]


class SimulationError(RuntimeError):
    """Non-finite coefficient output during forward simulation."""


@dataclass(frozen=True)
class ForwardTrajectory:
    """States of one path at the grid times, shape (n+1, d)."""

    grid_ref: TimeGrid
    states: Array

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] != self.grid_ref.n + 1:
            raise ValueError("states must have shape (n+1, d)")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @property
    def x0(self) -> Array:
        return self.states[0]


def euler_step(x: Array, t: float, dt: float, dW: Array, problem: BDSDEProblem) -> Array:
    """One Euler update ``x + b(x) dt + sigma(x) dW``.

    Broadcasts over leading axes of ``x``/``dW`` (trailing axis is the state
    dimension).  Raises :class:`SimulationError` if a coefficient returns a
    non-finite value, reporting the offending time and state.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    bx = np.asarray(problem.b(x), dtype=float)
    sx = np.asarray(problem.sigma(x), dtype=float)
    if not (np.all(np.isfinite(bx)) and np.all(np.isfinite(sx))):
        raise SimulationError(f"non-finite coefficient at t={t}, x={x}")
    return x + bx * dt + np.einsum("...ij,...j->...i", sx, np.asarray(dW, dtype=float))


def simulate_forward(
    problem: BDSDEProblem, grid: TimeGrid, bundle: PathBundle
) -> ForwardTrajectory:
    """Euler trajectory of one path driven by the bundle's dW increments."""
    _check_bundle(problem, grid, bundle)
    states = simulate_forward_many(problem, grid, bundle.dW[None, :, :])[0]
    return ForwardTrajectory(grid, states)


def simulate_forward_many(problem: BDSDEProblem, grid: TimeGrid, dW: Array) -> Array:
    """Euler trajectories for a batch of increment arrays.

    ``dW`` has shape (paths, n, d); returns states of shape (paths, n+1, d).
    """
    dW = np.asarray(dW, dtype=float)
    paths, n, d = dW.shape
    if n != grid.n or d != problem.dim:
        raise ValueError("increment array does not match grid/problem")
    deltas = grid.deltas
    times = grid.times
    states = np.empty((paths, n + 1, d))
    states[:, 0, :] = problem.x0
    x = np.broadcast_to(problem.x0, (paths, d)).copy()
    for i in range(n):
        x = euler_step(x, float(times[i]), float(deltas[i]), dW[:, i, :], problem)
        states[:, i + 1, :] = x
    return states


def _check_bundle(problem: BDSDEProblem, grid: TimeGrid, bundle: PathBundle) -> None:
    if bundle.grid_ref.n != grid.n or not np.array_equal(
        bundle.grid_ref.times, grid.times
    ):
        raise ValueError("bundle was generated on a different grid")
    if bundle.dim != problem.dim:
        raise ValueError("bundle dimension does not match problem")


def exact_forward(
    family: str, params: dict, grid: TimeGrid, bundle: PathBundle
) -> ForwardTrajectory:
    """Exact strong solution at grid times, driven by the bundle's dW."""
    states = exact_forward_many(family, params, grid, bundle.dW[None, :, :])[0]
    return ForwardTrajectory(grid, states)


def exact_forward_many(family: str, params: dict, grid: TimeGrid, dW: Array) -> Array:
    """Batched exact solutions; ``dW`` (paths, n, d) -> states (paths, n+1, d)."""
    dW = np.asarray(dW, dtype=float)
    paths, n, d = dW.shape
    if n != grid.n:
        raise ValueError("increment array does not match grid")
    t = grid.times
    W = np.zeros((paths, n + 1, d))
    W[:, 1:, :] = np.cumsum(dW, axis=1)
    x0 = np.atleast_1d(np.asarray(params["x0"], dtype=float))
    if x0.size == 1 and d > 1:
        x0 = np.full(d, x0[0])

    if family == "additive":
        b = np.atleast_1d(np.asarray(params.get("b", 0.0), dtype=float))
        if b.size == 1 and d > 1:
            b = np.full(d, b[0])
        sig = np.asarray(params.get("sigma", 1.0), dtype=float)
        if sig.ndim == 0:
            sig = float(sig) * np.eye(d)
        return (
            x0[None, None, :]
            + b[None, None, :] * t[None, :, None]
            + np.einsum("ij,pkj->pki", sig, W)
        )
    if family == "geometric":
        mu = float(params.get("mu", 0.0))
        nu = float(params.get("nu", 0.0))
        drift = (mu - 0.5 * nu * nu) * t[None, :, None]
        return x0[None, None, :] * np.exp(drift + nu * W)
    raise ValueError(f"unknown coefficient family: {family!r}")


def _zero_driver(t, x, y, z):
    return np.zeros(np.broadcast_shapes(np.shape(y), np.shape(z)))


def additive_problem(b0=0.0, sigma0=1.0, x0=0.0, dim: int = 1) -> BDSDEProblem:
    """Constant-coefficient diffusion with trivial drivers (forward tests)."""
    b_vec = np.full(dim, float(b0)) if np.ndim(b0) == 0 else np.asarray(b0, float)
    sig = float(sigma0) * np.eye(dim) if np.ndim(sigma0) == 0 else np.asarray(sigma0, float)
    return BDSDEProblem(
        dim=dim,
        b=lambda x: np.broadcast_to(b_vec, np.shape(x)).copy(),
        sigma=lambda x: np.broadcast_to(sig, np.shape(x)[:-1] + (dim, dim)).copy(),
        driver_f=_zero_driver,
        driver_g=_zero_driver,
        phi=lambda x: x[..., 0],
        x0=np.full(dim, float(x0)) if np.ndim(x0) == 0 else np.asarray(x0, float),
        lipschitz=LipschitzBounds(),
    )


def geometric_problem(mu: float, nu: float, x0=1.0, dim: int = 1) -> BDSDEProblem:
    """Componentwise geometric diffusion ``b = mu x``, ``sigma = nu diag(x)``."""

    def sigma(x):
        out = np.zeros(np.shape(x)[:-1] + (dim, dim))
        for k in range(dim):
            out[..., k, k] = nu * x[..., k]
        return out

    return BDSDEProblem(
        dim=dim,
        b=lambda x: mu * x,
        sigma=sigma,
        driver_f=_zero_driver,
        driver_g=_zero_driver,
        phi=lambda x: x[..., 0],
        x0=np.full(dim, float(x0)) if np.ndim(x0) == 0 else np.asarray(x0, float),
        lipschitz=LipschitzBounds(),
    )
