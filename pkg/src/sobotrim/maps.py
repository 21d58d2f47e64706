"""Builtin maps for configs, tests and batteries.

Every builder returns a ``GridMap`` sampled on a given grid.  Random smooth
sphere maps are ``exp`` of a small random trigonometric tangent field at the
north pole, so they are smooth and stay inside one hemisphere.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParameterOutOfRange
from .grid_core import Grid, GridMap
from .manifolds import embed_funnel


def constant_map(grid: Grid, value) -> GridMap:
    return GridMap.constant(grid, np.asarray(value, dtype=float))


def identity_map(grid: Grid) -> GridMap:
    return GridMap(grid, grid.mesh().copy())


def vortex_map(grid: Grid, ambient: int | None = None, center=None) -> GridMap:
    """``(x - c) / |x - c|`` padded with zeros to ``ambient`` components.

    The singular node, if any, takes the value ``e_1``.
    """
    x = grid.mesh() - (0.0 if center is None else np.asarray(center, dtype=float))
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    e1 = np.zeros(grid.m)
    e1[0] = 1.0
    v = np.where(r > 0, x / np.where(r > 0, r, 1.0), e1)
    ambient = grid.m if ambient is None else int(ambient)
    if ambient > grid.m:
        v = np.concatenate([v, np.zeros(grid.shape + (ambient - grid.m,))], axis=-1)
    return GridMap(grid, v)


def random_field(grid: Grid, rng: np.random.Generator, dim: int, modes: int = 3, amplitude: float = 1.0):
    """Smooth random field ``Q^m -> R^dim`` with sup norm at most ``amplitude``."""
    x = grid.mesh()
    out = np.zeros(grid.shape + (dim,))
    total = 0.0
    for _ in range(modes):
        k = rng.uniform(-np.pi, np.pi, size=grid.m)
        phase = rng.uniform(0, 2 * np.pi)
        coef = rng.normal(size=dim)
        out += np.cos(x @ k + phase)[..., None] * coef
        total += float(np.linalg.norm(coef))
    return amplitude * out / max(total, 1e-300)


def smooth_sphere_map(grid: Grid, n: int, seed: int, amplitude: float = 1.2, modes: int = 3) -> GridMap:
    """``exp_north(v)`` for a random tangent field ``v`` with ``|v| <= amplitude``."""
    rng = np.random.default_rng(seed)
    v = random_field(grid, rng, n, modes, amplitude)
    r = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(r > 0, r, 1.0)
    return GridMap(grid, np.concatenate([np.sin(r) * v / safe, np.cos(r)], axis=-1))


def smooth_euclidean_map(grid: Grid, n: int, seed: int, amplitude: float = 1.0, modes: int = 3) -> GridMap:
    return GridMap(grid, random_field(grid, np.random.default_rng(seed), n, modes, amplitude))


def map_from_spec(spec: dict, grid: Grid, base: Path | None = None) -> GridMap:
    """Build a map from a config entry ``{"kind": ..., ...}``."""
    kind = spec.get("kind")
    if kind == "constant":
        return constant_map(grid, spec.get("value", [0.0, 0.0, 1.0]))
    if kind == "identity":
        return identity_map(grid)
    if kind == "vortex":
        return vortex_map(grid, spec.get("ambient"), spec.get("center"))
    if kind == "smooth_sphere":
        return smooth_sphere_map(grid, int(spec.get("n", 2)), int(spec.get("seed", 0)),
                                 float(spec.get("amplitude", 1.2)))
    if kind == "smooth_euclidean":
        return smooth_euclidean_map(grid, int(spec.get("n", 2)), int(spec.get("seed", 0)),
                                    float(spec.get("amplitude", 1.0)))
    if kind == "funnel":
        fm = embed_funnel(grid.m, float(spec.get("alpha", 0.4)), scale=float(spec.get("scale", 2.0)))
        return fm.sample(grid)
    if kind == "file":
        path = Path(spec["path"])
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.with_suffix(".json").exists():
            raise ParameterOutOfRange("map file not found", path=str(path))
        u = GridMap.load(path)
        if u.grid != grid:
            raise ParameterOutOfRange("map file grid differs from the configured grid", path=str(path))
        return u
    raise ParameterOutOfRange(f"unknown map kind {kind!r}", kind=kind)


__all__ = ["constant_map", "identity_map", "vortex_map", "random_field", "smooth_sphere_map",
           "smooth_euclidean_map", "map_from_spec"]
