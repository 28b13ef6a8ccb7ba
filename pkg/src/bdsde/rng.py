"""Reproducible Brownian increment generation for the two driving noises.

Each sample path carries two independent increment families: ``dW`` (the
forward noise, R^d-valued) and ``dB`` (the backward noise, scalar).  Streams
are counter-based (Philox): the 128-bit key encodes (seed, role) and the
counter position encodes (path_index, interval), so any path can be
materialized independently, in any order, bit-identically.

Gaussians come from inverse-CDF applied to open-interval uniforms built from
raw 64-bit draws, which keeps the monotone coupling between the uniform and
normal streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

from .model import TimeGrid, build_uniform_grid

Array = np.ndarray

__all__ = [
    "PathBundle",
    "sample_bundles",
    "sample_increments",
    "refine_bundle",
    "save_bundles",
    "load_bundles",
]

_MASK64 = (1 << 64) - 1
# role tags separate the substream families: forward noise, backward noise,
# and the two bridge-refinement families
_ROLE_TAGS = {"W": 0x57, "B": 0x42, "RW": 0x5257, "RB": 0x5242}
_MAGIC = b"BDSB"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PathBundle:
    """Increment arrays of one sample path on a grid.

    ``dW[i]`` and ``dB[i]`` are the increments over ``(t_i, t_{i+1}]``
    (0-based arrays of length n).  Regenerating with the same
    ``(seed, path_index)`` on the same grid is bit-identical.
    """

    grid_ref: TimeGrid
    dW: Array
    dB: Array
    seed: int
    path_index: int

    def __post_init__(self) -> None:
        n = self.grid_ref.n
        dW = np.asarray(self.dW, dtype=float)
        dB = np.asarray(self.dB, dtype=float)
        if dW.ndim != 2 or dW.shape[0] != n:
            raise ValueError(f"dW must have shape (n, d) with n={n}")
        if dB.shape != (n,):
            raise ValueError(f"dB must have shape ({n},)")
        dW.setflags(write=False)
        dB.setflags(write=False)
        object.__setattr__(self, "dW", dW)
        object.__setattr__(self, "dB", dB)

    @property
    def dim(self) -> int:
        return self.dW.shape[1]


def _splitmix64(v: int) -> int:
    v = (v + 0x9E3779B97F4A7C15) & _MASK64
    v = ((v ^ (v >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    v = ((v ^ (v >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (v ^ (v >> 31)) & _MASK64


def _philox_key(seed: int, role: str) -> int:
    lo = _splitmix64((seed & _MASK64) ^ _ROLE_TAGS[role])
    hi = _splitmix64(lo ^ 0xD1B54A32D192ED03)
    return lo | (hi << 64)


def _standard_normals(
    seed: int, role: str, start_path: int, count: int, per_path: int
) -> Array:
    """iid N(0,1) block, shape (count, per_path), addressed by path index.

    Each path owns a fixed span of Philox counter blocks (4 draws per
    block), so the array for path p never depends on which other paths are
    generated alongside it.
    """
    blocks = max(1, -(-per_path // 4))
    bitgen = Philox(key=_philox_key(seed, role))
    if start_path:
        bitgen.advance(start_path * blocks)
    raw = bitgen.random_raw(count * blocks * 4).reshape(count, blocks * 4)
    raw = raw[:, :per_path]
    # top 53 bits -> uniform strictly inside (0, 1); ndtri stays finite
    u = (raw >> np.uint64(11)) * 2.0**-53 + 2.0**-54
    return ndtri(u)


def sample_increments(
    grid: TimeGrid,
    seed: int,
    count: int,
    dim: int = 1,
    role: str = "W",
    start_index: int = 0,
) -> Array:
    """Batch of Brownian increments, shape (count, n, dim).

    Row p corresponds to path_index ``start_index + p`` and is identical to
    the matching array of :func:`sample_bundles`.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if role not in ("W", "B"):
        raise ValueError("role must be 'W' or 'B'")
    n = grid.n
    z = _standard_normals(seed, role, start_index, count, n * dim)
    z = z.reshape(count, n, dim)
    return z * np.sqrt(grid.deltas)[None, :, None]


def sample_bundles(
    grid: TimeGrid,
    seed: int,
    count: int,
    dim: int = 1,
    start_index: int = 0,
) -> Iterator[PathBundle]:
    """Yield ``count`` independent paths starting at ``start_index``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    for p in range(start_index, start_index + count):
        dW = sample_increments(grid, seed, 1, dim, "W", p)[0]
        dB = sample_increments(grid, seed, 1, 1, "B", p)[0, :, 0]
        yield PathBundle(grid, dW, dB, seed, p)


def _bridge_split(coarse_inc: Array, z: Array) -> Array:
    """Split coarse increments into conditioned fine increments.

    ``coarse_inc`` has shape (n, ...), ``z`` iid N(0, h/factor) draws of
    shape (n, factor, ...).  Each fine increment is I/factor plus a zero-sum
    Gaussian perturbation (the Brownian-bridge conditional law); the last
    element is closed against the block sum so the sums reproduce the coarse
    increments to rounding.
    """
    factor = z.shape[1]
    fine = coarse_inc[:, None, ...] / factor + (z - z.mean(axis=1, keepdims=True))
    fine[:, -1, ...] = coarse_inc - fine[:, :-1, ...].sum(axis=1)
    return fine


def refine_bundle(coarse: PathBundle, factor: int, seed: int) -> PathBundle:
    """Subdivide each interval of a uniform-grid bundle by ``factor``.

    The refined increments are Brownian-bridge conditioned on the coarse
    ones: per-interval block sums reproduce the coarse increments, and the
    refinement is deterministic in ``(seed, coarse.path_index)``.
    """
    if factor < 2 or int(factor) != factor:
        raise ValueError("factor must be an integer >= 2")
    grid = coarse.grid_ref
    deltas = grid.deltas
    if deltas.max() - deltas.min() > 1e-12 * deltas.max():
        raise ValueError("refine_bundle requires a uniform coarse grid")
    n, d = coarse.dW.shape
    factor = int(factor)
    fine_grid = build_uniform_grid(n * factor, grid.horizon)
    h_fine = grid.horizon / (n * factor)

    z_w = _standard_normals(seed, "RW", coarse.path_index, 1, n * factor * d)
    z_w = z_w.reshape(n, factor, d) * np.sqrt(h_fine)
    dW = _bridge_split(np.asarray(coarse.dW), z_w).reshape(n * factor, d)

    z_b = _standard_normals(seed, "RB", coarse.path_index, 1, n * factor)
    z_b = z_b.reshape(n, factor) * np.sqrt(h_fine)
    dB = _bridge_split(np.asarray(coarse.dB), z_b).reshape(n * factor)

    return PathBundle(fine_grid, dW, dB, seed, coarse.path_index)


def save_bundles(path, bundles: list[PathBundle]) -> None:
    """Binary dump: header (seed, n, d, count) + little-endian f64 payload."""
    if not bundles:
        raise ValueError("nothing to save")
    n, d = bundles[0].dW.shape
    seed = bundles[0].seed
    for b in bundles:
        if b.dW.shape != (n, d) or b.seed != seed:
            raise ValueError("bundles must share grid shape and seed")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        header = np.array([_FORMAT_VERSION, seed, n, d, len(bundles)], dtype="<i8")
        fh.write(header.tobytes())
        for b in bundles:
            fh.write(np.array([b.path_index], dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(b.dW, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b.dB, dtype="<f8").tobytes())


def load_bundles(path, grid: TimeGrid) -> list[PathBundle]:
    """Read a :func:`save_bundles` file back onto ``grid``."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a bundle file")
        version, seed, n, d, count = np.frombuffer(fh.read(40), dtype="<i8")
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        if n != grid.n:
            raise ValueError(f"{path}: file has n={n}, grid has n={grid.n}")
        out = []
        for _ in range(count):
            (pidx,) = np.frombuffer(fh.read(8), dtype="<i8")
            dW = np.frombuffer(fh.read(8 * n * d), dtype="<f8").reshape(n, d)
            dB = np.frombuffer(fh.read(8 * n), dtype="<f8")
            out.append(PathBundle(grid, dW.copy(), dB.copy(), int(seed), int(pidx)))
    return out
