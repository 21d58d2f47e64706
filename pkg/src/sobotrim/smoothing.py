"""Variable-scale mollification and the transition scale field.

``adaptive_convolve`` evaluates ``sum_j w_j u(x - psi(x) y_j)`` with a fixed
quadrature of a bump kernel supported in the unit ball, so the smoothing
radius follows the scale field ``psi`` and nodes where ``psi = 0`` are copied
exactly.  ``build_transition`` makes a field equal to ``t eta`` on the good
cubes that decays to zero within a thin collar, with slope below one.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .cubication import GoodBadPartition
from .errors import DomainExceeded, ParameterOutOfRange, TransitionInfeasible
from .grid_core import Grid, GridMap, Region, interpolate, lp_norm, sobolev_seminorm

log = logging.getLogger(__name__)


@dataclass
class Mollifier:
    """Tensor quadrature of ``exp(-1 / (1 - |y|^2))`` restricted to the open unit ball."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))


def bump_mollifier(m: int, per_axis: int = 9) -> Mollifier:
    if per_axis < 2:
        raise ParameterOutOfRange("need at least two quadrature nodes per axis", per_axis=per_axis)
    ticks = np.linspace(-1.0, 1.0, per_axis + 2)[1:-1]
    pts = np.array(list(itertools.product(ticks, repeat=m)))
    r2 = np.sum(pts * pts, axis=1)
    keep = r2 < 1.0
    pts = pts[keep]
    w = np.exp(-1.0 / (1.0 - r2[keep]))
    return Mollifier(pts, w / np.sum(w))


@dataclass
class ScaleField:
    grid: Grid
    values: np.ndarray
    plateau: float
    rho_low: float
    rho: float
    eta: float
    lipschitz: float

    def to_gridmap(self) -> GridMap:
        return GridMap(self.grid, self.values[..., None].copy())

    @classmethod
    def constant(cls, grid: Grid, value: float, eta: float = 1.0) -> "ScaleField":
        return cls(grid, np.full(grid.shape, float(value)), float(value), 0.0, 0.0, eta, 0.0)

    @classmethod
    def from_array(cls, grid: Grid, values, eta: float = 1.0) -> "ScaleField":
        values = np.asarray(values, dtype=float)
        return cls(grid, values, float(values.max()), 0.0, 0.0, eta, discrete_lipschitz(grid, values))


def discrete_lipschitz(grid: Grid, values: np.ndarray) -> float:
    """Largest of the central-difference gradient norm and axis difference quotients."""
    best = 0.0
    if min(grid.shape) >= 3:
        g = np.gradient(values, grid.h, edge_order=1)
        g = list(g) if isinstance(g, (list, tuple)) else [g]
        best = float(np.max(np.sqrt(sum(x * x for x in g))))
    for a in range(grid.m):
        best = max(best, float(np.max(np.abs(np.diff(values, axis=a)))) / grid.h)
    return best


def good_node_mask(partition: GoodBadPartition) -> np.ndarray:
    cub = partition.cubication
    mask = np.zeros(cub.grid.shape, dtype=bool)
    for c in partition.good_cubes():
        mask[cub.node_slices(c)] = True
    return mask


def _box_kernel_bump(radius_cells: float, m: int) -> np.ndarray:
    k = int(np.ceil(radius_cells))
    ax = np.arange(-k, k + 1) / max(radius_cells, 1e-300)
    grids = np.meshgrid(*([ax] * m), indexing="ij")
    r2 = sum(g * g for g in grids)
    ker = np.where(r2 < 1.0, np.exp(-1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)
    return ker / ker.sum()


def build_transition(partition: GoodBadPartition, t: float | None = None, rho_low: float = 0.125,
                     rho: float | None = None) -> ScaleField:
    """Scale field equal to ``t eta`` on the good cubes and vanishing away from them.

    Raw profile ``t eta clamp(1 - (d - r_k) / w, 0, 1)`` with ``d`` the max-norm
    distance to the good set, ``r_k = rho_low eta / 8`` the smoothing radius and
    ``w = t eta / 0.9``; it is mollified at radius ``r_k`` and reset to ``t eta``
    on the good nodes.  All four defining properties are checked on the grid.
    """
    cub = partition.cubication
    grid = cub.grid
    eta = cub.eta
    rho = partition.rho if rho is None else rho
    if not 0 < rho_low < rho:
        raise ParameterOutOfRange("need 0 < rho_low < rho", rho_low=rho_low, rho=rho)
    if t is None:
        t = min(rho_low / 2.0, (rho - rho_low) / 2.0)
    if not 0 < t < rho - rho_low:
        raise TransitionInfeasible("t must lie in (0, rho - rho_low)", t=t, rho=rho, rho_low=rho_low)
    plateau = t * eta
    good = good_node_mask(partition)
    if not good.any():
        return ScaleField(grid, np.zeros(grid.shape), plateau, rho_low, rho, eta, 0.0)
    d = ndimage.distance_transform_cdt(~good, metric="chessboard").astype(float) * grid.h
    r_k = rho_low * eta / 8.0
    w = plateau / 0.9
    raw = plateau * np.clip(1.0 - (d - r_k) / w, 0.0, 1.0)
    if r_k >= grid.h:
        psi = ndimage.convolve(raw, _box_kernel_bump(r_k / grid.h, grid.m), mode="nearest")
    else:
        psi = raw
    psi = np.clip(psi, 0.0, plateau)
    psi[good] = plateau
    psi[psi < 1e-15 * plateau] = 0.0
    lip = discrete_lipschitz(grid, psi)
    problems = []
    if not (psi.min() >= 0 and psi.max() < (rho - rho_low) * eta):
        problems.append("range")
    if np.any(psi[good] != plateau):
        problems.append("plateau")
    if np.any((psi > 0) & (d > rho_low * eta + 1e-12)):
        problems.append("support")
    if not lip < 1.0:
        problems.append("lipschitz")
    if problems:
        raise TransitionInfeasible("transition field violates its constraints", failed=problems,
                                   lipschitz=lip, t=t)
    return ScaleField(grid, psi, plateau, rho_low, rho, eta, lip)


def _check_margin(grid: Grid, pts: np.ndarray, psi: np.ndarray) -> None:
    reach = np.max(np.abs(pts), axis=1) + psi
    bad = reach > grid.inradius * (1 + 1e-12)
    if np.any(bad):
        raise DomainExceeded("kernel support leaves the grid", count=int(bad.sum()),
                             worst=float(reach.max()), inradius=grid.inradius)


def _region_nodes(grid: Grid, omega: Region | None) -> np.ndarray:
    if omega is None:
        return np.ones(grid.shape, dtype=bool)
    return omega.nodes()


def adaptive_convolve(u: GridMap, psi: ScaleField, phi: Mollifier | None = None,
                      omega: Region | None = None) -> GridMap:
    """``(phi_psi * u)(x)`` at the nodes of ``omega``; exact copy where ``psi = 0``."""
    grid = u.grid
    if psi.values.shape != grid.shape:
        raise ParameterOutOfRange("scale field and map grids differ")
    phi = bump_mollifier(grid.m) if phi is None else phi
    out = u.values.copy()
    if float(psi.values.max(initial=0.0)) < 2.0 * grid.h:
        log.warning("scale field below two cells; smoothing skipped")
        return GridMap(grid, out)
    mask = _region_nodes(grid, omega) & (psi.values > 0)
    if not mask.any():
        return GridMap(grid, out)
    pts = grid.mesh()[mask]
    s = psi.values[mask]
    _check_margin(grid, pts, s)
    acc = np.zeros((len(pts), u.ambient_dim))
    for y, w in zip(phi.nodes, phi.weights):
        acc += w * interpolate(u, pts - s[:, None] * y)
    out[mask] = acc
    return GridMap(grid, out)


def translation_modulus(u: GridMap, psi: ScaleField, p: float, omega: Region | None = None,
                        phi: Mollifier | None = None, extra_directions: int = 16) -> float:
    """``max_v ||u(. - psi v) - u||_{L^p(omega)}`` over kernel nodes plus unit directions."""
    grid = u.grid
    phi = bump_mollifier(grid.m) if phi is None else phi
    mask = _region_nodes(grid, omega)
    pts = grid.mesh()[mask]
    s = psi.values[mask]
    if not np.any(s > 0):
        return 0.0
    _check_margin(grid, pts, s)
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(extra_directions, grid.m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    samples = np.vstack([phi.nodes, 0.999 * dirs])
    base = u.values[mask]
    best = 0.0
    for v in samples:
        diff = interpolate(u, pts - s[:, None] * v) - base
        best = max(best, _masked_lp(grid, mask, diff, p))
    return best


def _masked_lp(grid: Grid, mask: np.ndarray, vals: np.ndarray, p: float) -> float:
    full = np.zeros(grid.shape + vals.shape[-1:])
    full[mask] = vals
    return lp_norm(GridMap(grid, full), p, Region(grid, mask))


@dataclass
class SmoothingReport:
    lp_error: float
    modulus: float
    grad_ratio: float
    lipschitz: float
    constant: float

    @property
    def modulus_dominates(self) -> bool:
        return self.lp_error <= self.modulus * (1 + 1e-9) + 1e-14


def smoothing_report(u: GridMap, u_sm: GridMap, psi: ScaleField, p: float,
                     omega: Region | None = None, phi: Mollifier | None = None) -> SmoothingReport:
    """Error, translation modulus and the derivative-bound constant on ``omega``."""
    grid = u.grid
    region = omega if omega is not None else Region.full(grid)
    mask = _region_nodes(grid, omega)
    err = _masked_lp(grid, mask, u_sm.values[mask] - u.values[mask], p)
    mod = translation_modulus(u, psi, p, omega, phi)
    top = sobolev_seminorm(u_sm, p, region)
    bottom = sobolev_seminorm(u, p)
    ratio = top / bottom if bottom > 0 else 0.0
    lip = psi.lipschitz
    const = ratio * (1.0 - lip) ** (1.0 / p) if lip < 1 else np.inf
    return SmoothingReport(err, mod, ratio, lip, const)


__all__ = ["Mollifier", "bump_mollifier", "ScaleField", "build_transition", "adaptive_convolve",
           "translation_modulus", "smoothing_report", "discrete_lipschitz", "good_node_mask"]
