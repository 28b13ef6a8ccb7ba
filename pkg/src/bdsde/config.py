"""Flat key-value config files for the command-line interface.

Format: one ``key=value`` pair per line, ``#`` comments and blank lines
ignored.  Lists are comma-separated (``meshes=4,8,16,32``).  Keys not
recognized as experiment settings are collected as numeric case parameters
(``g0=0.7``, ``c=0.5``, ``beta=0.5``).  Problems themselves are declared by
naming one of the built-in coefficient families via ``case=``; arbitrary
coefficients are a library-API concern.
"""

from __future__ import annotations

from .harness import ExperimentConfig, experiment_case
from .oracle import ClosedFormCase

__all__ = ["parse_config", "load_config", "build_experiment", "case_from_config"]

# keys consumed by the experiment/CLI layer; everything else is a case param
_RESERVED = {
    "case",
    "meshes",
    "M",
    "K",
    "quad_order",
    "space_nodes",
    "space_width",
    "space_scale",
    "T",
    "x0",
    "seed",
    "threads",
    "timings",
    "out",
    "paths",
    "mu",
    "nu",
    "fine_factor",
    "count",
    "n",
}

_BOOL = {"on": True, "true": True, "off": False, "false": False}


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return tuple(_parse_value(part) for part in text.split(",") if part.strip())
    if text.lower() in _BOOL:
        return _BOOL[text.lower()]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_config(text: str) -> dict:
    """Parse config text into a raw key -> value dict."""
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        raw[key.strip()] = _parse_value(value)
    return raw


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config(fh.read())


def _as_mesh_tuple(value) -> tuple[int, ...]:
    if isinstance(value, tuple):
        return tuple(int(v) for v in value)
    return (int(value),)


def case_from_config(exp: ExperimentConfig) -> ClosedFormCase:
    """Built-in problem named by the experiment config, ready to evaluate.

    Runs the sign calibration when the selected family requires it, seeded
    deterministically from the experiment seed.
    """
    return experiment_case(exp)


def build_experiment(raw: dict, **overrides) -> ExperimentConfig:
    """Assemble an :class:`ExperimentConfig` from raw config + CLI overrides."""
    merged = dict(raw)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    params = {
        k: float(v)
        for k, v in merged.items()
        if k not in _RESERVED and isinstance(v, (int, float)) and not isinstance(v, bool)
    }
    return ExperimentConfig(
        case=str(merged.get("case", "identity")),
        params=params,
        meshes=_as_mesh_tuple(merged.get("meshes", (4, 8, 16, 32))),
        outer=int(merged.get("M", 64)),
        inner=int(merged.get("K", 64)),
        quad_order=int(merged.get("quad_order", 8)),
        space_nodes=int(merged.get("space_nodes", 201)),
        space_width=float(merged.get("space_width", 6.0)),
        space_scale=float(merged.get("space_scale", 1.0)),
        horizon=float(merged.get("T", 1.0)),
        x0=float(merged.get("x0", 1.0)),
        seed=int(merged.get("seed", 0)),
        threads=int(merged.get("threads", 1)),
        timings=bool(merged.get("timings", False)),
    )
