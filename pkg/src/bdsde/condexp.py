"""Conditional-expectation engine: Gaussian quadrature and grid functions.

The backward recursion needs expectations of the form ``E[h(dw)]`` and
``E[h(dw) * dw_k]`` with ``dw ~ N(0, dt I_d)``.  Both are realized by
Gauss-Hermite rules in probabilists' normalization (nodes/weights integrate
exactly against the standard normal density up to polynomial degree
``2 m - 1``), tensorized for ``d`` up to 3.

Backward layers are represented as :class:`GridFunction`: values on a
regular tensor grid, read back by multilinear interpolation with clamping
to the boundary value outside the domain.  Multilinear interpolation is
exact on affine data, which the exactness tests of the scheme rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray

__all__ = [
    "QuadratureRule",
    "gauss_hermite",
    "expect",
    "expect_weighted",
    "GridFunction",
    "interpolate",
    "spatial_axis",
]

MAX_ORDER = 64


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Hermite nodes/weights against the N(0,1) density."""

    order: int
    nodes: Array
    weights: Array

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != (self.order,) or weights.shape != (self.order,):
            raise ValueError("nodes/weights must have shape (order,)")
        if abs(weights.sum() - 1.0) > 1e-14:
            raise ValueError("weights must sum to 1")
        if abs(float(nodes @ weights)) > 1e-14:
            raise ValueError("nodes must be symmetric about 0")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)


def gauss_hermite(order: int) -> QuadratureRule:
    """Probabilists' Gauss-Hermite rule of the given order (1..64)."""
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in [1, {MAX_ORDER}]")
    x, w = np.polynomial.hermite.hermgauss(order)
    return QuadratureRule(order, x * math.sqrt(2.0), w / math.sqrt(math.pi))


def _tensor_rule(rule: QuadratureRule, dim: int) -> tuple[Array, Array]:
    """Tensor-product points (m^dim, dim) and weights (m^dim,)."""
    if dim == 1:
        return rule.nodes[:, None], rule.weights
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    weights = rule.weights
    for _ in range(dim - 1):
        weights = np.multiply.outer(weights, rule.weights)
    return points, weights.ravel()


def expect(
    rule: QuadratureRule,
    dt: float,
    h: Callable[[Array], Array],
    dim: int = 1,
) -> float:
    """Approximate ``E[h(dw)]`` with ``dw ~ N(0, dt I_dim)``.

    For ``dim == 1`` the integrand receives a flat array of sample points;
    for higher dimension an array of shape (count, dim).
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    points, weights = _tensor_rule(rule, dim)
    args = math.sqrt(dt) * (points[:, 0] if dim == 1 else points)
    vals = np.asarray(h(args), dtype=float)
    if vals.shape != weights.shape:
        raise ValueError("integrand must return one value per sample point")
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand returned non-finite values")
    return float(weights @ vals)


def expect_weighted(
    rule: QuadratureRule,
    dt: float,
    h: Callable[[Array], Array],
    component: int = 0,
    dim: int = 1,
) -> float:
    """Approximate ``E[h(dw) * dw_component]`` with ``dw ~ N(0, dt I_dim)``."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if not 0 <= component < dim:
        raise ValueError("component out of range")
    points, weights = _tensor_rule(rule, dim)
    scaled = math.sqrt(dt) * points
    args = scaled[:, 0] if dim == 1 else scaled
    vals = np.asarray(h(args), dtype=float)
    if vals.shape != weights.shape:
        raise ValueError("integrand must return one value per sample point")
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand returned non-finite values")
    return float(weights @ (vals * scaled[:, component]))


AxisSpec = tuple[float, float, int]


def spatial_axis(
    x0: float, scale: float, horizon: float, count: int = 201, width: float = 6.0
) -> AxisSpec:
    """Default spatial domain: ``width`` diffusion standard deviations.

    With width 6 the diffusion exits the box with probability below 1e-8
    for the scales tested, so clamped extrapolation stays a negligible
    perturbation of the backward recursion.
    """
    half = width * scale * math.sqrt(horizon)
    return (x0 - half, x0 + half, count)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values on a regular tensor grid over R^d (d <= 3), clamped outside.

    ``axes`` is one ``(lo, hi, count)`` triple per dimension; ``values`` has
    shape ``(count_1, ..., count_d)``.
    """

    axes: tuple[AxisSpec, ...]
    values: Array

    def __post_init__(self) -> None:
        axes = tuple((float(lo), float(hi), int(c)) for lo, hi, c in self.axes)
        if not 1 <= len(axes) <= 3:
            raise ValueError("GridFunction supports 1 to 3 dimensions")
        for lo, hi, c in axes:
            if c < 2:
                raise ValueError("each axis needs at least 2 nodes")
            if not hi > lo:
                raise ValueError("axis must satisfy hi > lo")
        values = np.asarray(self.values, dtype=float)
        if values.shape != tuple(c for _, _, c in axes):
            raise ValueError("values shape must match axis counts")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def nodes(self, axis: int = 0) -> Array:
        lo, hi, c = self.axes[axis]
        return np.linspace(lo, hi, c)

    @classmethod
    def sample(cls, fn: Callable[[Array], Array], axes: Sequence[AxisSpec]) -> "GridFunction":
        """Tabulate ``fn`` (state convention ``(..., d) -> (...)``) on the grid."""
        axes = tuple(axes)
        coords = [np.linspace(lo, hi, c) for lo, hi, c in axes]
        if len(axes) == 1:
            pts = coords[0][:, None]
        else:
            mesh = np.meshgrid(*coords, indexing="ij")
            pts = np.stack(mesh, axis=-1)
        return cls(axes, np.asarray(fn(pts), dtype=float))


def interpolate(f: GridFunction, x) -> Array:
    """Multilinear interpolation of ``f`` at query points.

    ``x`` is an array of shape ``(...,)`` for one-dimensional functions or
    ``(..., d)`` otherwise.  Queries outside the domain are clamped to the
    nearest boundary value, which keeps the backward recursion free of NaNs
    when quadrature points leave the box.
    """
    if f.dim == 1:
        q = np.asarray(x, dtype=float)
        return np.interp(q, f.nodes(0), f.values)

    q = np.asarray(x, dtype=float)
    if q.shape[-1] != f.dim:
        raise ValueError(f"query must have trailing dimension {f.dim}")
    batch = q.shape[:-1]
    q = q.reshape(-1, f.dim)

    idx = []
    frac = []
    for k, (lo, hi, c) in enumerate(f.axes):
        step = (hi - lo) / (c - 1)
        pos = np.clip((q[:, k] - lo) / step, 0.0, c - 1)
        i0 = np.minimum(pos.astype(np.intp), c - 2)
        idx.append(i0)
        frac.append(pos - i0)

    out = np.zeros(q.shape[0])
    for corner in range(1 << f.dim):
        w = np.ones(q.shape[0])
        pos = []
        for k in range(f.dim):
            if corner >> k & 1:
                w = w * frac[k]
                pos.append(idx[k] + 1)
            else:
                w = w * (1.0 - frac[k])
                pos.append(idx[k])
        out += w * f.values[tuple(pos)]
    return out.reshape(batch)
