"""Regular-grid discretization of maps from a cube into Euclidean space.

A :class:`Grid` samples the closed cube ``[-r, r]^m`` with ``res`` nodes per
axis.  Maps are stored as :class:`GridMap` arrays of shape ``grid.shape + (nu,)``.
Integrals use the trapezoidal rule written cell by cell: the integrand of a
cell is the mean of its ``2^m`` corner values times ``h^m``.  This makes
integrals exactly additive over disjoint cell regions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DomainExceeded, PaddingMisaligned, ParameterOutOfRange

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    m: int
    inradius: float
    res: int

    def __post_init__(self):
        if not 1 <= self.m <= 4:
            raise ParameterOutOfRange(f"dimension m={self.m} outside 1..4", m=self.m)
        if self.res < 3:
            raise ParameterOutOfRange(f"res={self.res} must be at least 3", res=self.res)
        if not self.inradius > 0:
            raise ParameterOutOfRange("inradius must be positive", inradius=self.inradius)

    @property
    def h(self) -> float:
        return 2.0 * self.inradius / (self.res - 1)

    @property
    def shape(self) -> tuple:
        return (self.res,) * self.m

    @property
    def cell_shape(self) -> tuple:
        return (self.res - 1,) * self.m

    @property
    def cell_volume(self) -> float:
        return self.h ** self.m

    def coords(self) -> np.ndarray:
        x = -self.inradius + np.arange(self.res) * self.h
        x[0] = -self.inradius
        x[-1] = self.inradius
        x[(self.res - 1) // 2] = 0.0 if self.res % 2 == 1 else x[(self.res - 1) // 2]
        return x

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``grid.shape + (m,)``."""
        axes = np.meshgrid(*([self.coords()] * self.m), indexing="ij")
        return np.stack(axes, axis=-1)

    def points(self) -> np.ndarray:
        return self.mesh().reshape(-1, self.m)

    def cell_centers(self) -> np.ndarray:
        c = self.coords()
        mid = 0.5 * (c[:-1] + c[1:])
        axes = np.meshgrid(*([mid] * self.m), indexing="ij")
        return np.stack(axes, axis=-1)

    def index_of(self, x: float) -> int:
        """Index of the node at coordinate ``x``; raises when ``x`` is off-node."""
        k = (x + self.inradius) / self.h
        kr = int(round(k))
        if abs(k - kr) > 1e-6 or not 0 <= kr < self.res:
            raise PaddingMisaligned(f"coordinate {x} is not a grid node", x=x, h=self.h)
        return kr

    def cells_per(self, length: float) -> int:
        """Number of cells spanning ``length``; raises when not an integer."""
        k = length / self.h
        kr = int(round(k))
        if abs(k - kr) > 1e-6 * max(1.0, k):
            raise PaddingMisaligned(f"length {length} is not a whole number of cells",
                                    length=length, h=self.h)
        return kr

    def to_dict(self) -> dict:
        return {"m": self.m, "inradius": self.inradius, "res": self.res}


@dataclass
class GridMap:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape == self.grid.shape:
            v = v[..., None]
        if v.shape[:-1] != self.grid.shape:
            raise ParameterOutOfRange("value array does not match grid shape",
                                      shape=v.shape, grid=self.grid.shape)
        self.values = v

    @property
    def ambient_dim(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "GridMap":
        """Sample ``fn`` on the node mesh; ``fn`` maps (..., m) to (..., nu)."""
        return cls(grid, np.asarray(fn(grid.mesh()), dtype=float))

    @classmethod
    def constant(cls, grid: Grid, c) -> "GridMap":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(grid, np.broadcast_to(c, grid.shape + c.shape).copy())

    def copy(self) -> "GridMap":
        return GridMap(self.grid, self.values.copy())

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=-1)))

    def save(self, path) -> None:
        path = Path(path)
        header = {**self.grid.to_dict(), "ambient_dim": self.ambient_dim}
        path.with_suffix(".json").write_text(json.dumps(header, sort_keys=True))
        np.ascontiguousarray(self.values, dtype="<f8").tofile(path.with_suffix(".bin"))

    @classmethod
    def load(cls, path) -> "GridMap":
        path = Path(path)
        header = json.loads(path.with_suffix(".json").read_text())
        grid = Grid(int(header["m"]), float(header["inradius"]), int(header["res"]))
        data = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
        return cls(grid, data.reshape(grid.shape + (int(header["ambient_dim"]),)))

    def to_csv(self, path) -> None:
        if self.grid.m > 2:
            raise ParameterOutOfRange("CSV export is limited to m <= 2", m=self.grid.m)
        pts = self.grid.points()
        vals = self.values.reshape(-1, self.ambient_dim)
        cols = [f"x{k + 1}" for k in range(self.grid.m)] + [f"u{k + 1}" for k in range(self.ambient_dim)]
        np.savetxt(path, np.hstack([pts, vals]), delimiter=",", header=",".join(cols),
                   comments="", fmt="%.17g")


@dataclass
class Region:
    """Integration domain or pointwise mask.

    ``mask`` is either node shaped (``grid.shape``) or cell shaped
    (``grid.cell_shape``).  Integrals always use the cell form; a node mask
    converts to the cells whose corners all lie in the mask.
    """

    grid: Grid
    mask: np.ndarray
    description: str = ""

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape not in (self.grid.shape, self.grid.cell_shape):
            raise ParameterOutOfRange("region mask does not match grid",
                                      shape=self.mask.shape)

    @property
    def is_cell(self) -> bool:
        return self.mask.shape == self.grid.cell_shape

    def cells(self) -> np.ndarray:
        if self.is_cell:
            return self.mask
        out = self.mask
        for ax in range(self.grid.m):
            sl_a = [slice(None)] * self.grid.m
            sl_b = [slice(None)] * self.grid.m
            sl_a[ax] = slice(0, -1)
            sl_b[ax] = slice(1, None)
            out = out[tuple(sl_a)] & out[tuple(sl_b)]
        return out

    def nodes(self) -> np.ndarray:
        """Node mask: node form as is; cell form gives all corners of member cells."""
        if not self.is_cell:
            return self.mask
        out = np.zeros(self.grid.shape, dtype=bool)
        m = self.grid.m
        for corner in np.ndindex(*(2,) * m):
            sl = tuple(slice(c, c + self.grid.res - 1) for c in corner)
            out[sl] |= self.mask
        return out

    def volume(self) -> float:
        return float(self.cells().sum()) * self.grid.cell_volume

    def __or__(self, other: "Region") -> "Region":
        return Region(self.grid, self.cells() | other.cells(), f"({self.description})|({other.description})")

    def __and__(self, other: "Region") -> "Region":
        return Region(self.grid, self.cells() & other.cells(), f"({self.description})&({other.description})")

    def __sub__(self, other: "Region") -> "Region":
        return Region(self.grid, self.cells() & ~other.cells(), f"({self.description})-({other.description})")

    @classmethod
    def full(cls, grid: Grid) -> "Region":
        return cls(grid, np.ones(grid.cell_shape, dtype=bool), "full")

    @classmethod
    def empty(cls, grid: Grid) -> "Region":
        return cls(grid, np.zeros(grid.cell_shape, dtype=bool), "empty")

    @classmethod
    def box(cls, grid: Grid, lo, hi, description: str = "box") -> "Region":
        """Cells whose centers lie in the closed box ``[lo, hi]``."""
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (grid.m,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (grid.m,))
        c = grid.coords()
        mid = 0.5 * (c[:-1] + c[1:])
        mask = np.ones(grid.cell_shape, dtype=bool)
        for ax in range(grid.m):
            sel = (mid >= lo[ax] - _ALIGN_TOL) & (mid <= hi[ax] + _ALIGN_TOL)
            shape = [1] * grid.m
            shape[ax] = -1
            mask &= sel.reshape(shape)
        return cls(grid, mask, description)

    @classmethod
    def from_predicate(cls, grid: Grid, pred, description: str = "") -> "Region":
        """Cells whose center satisfies ``pred(x)`` with ``x`` of shape (..., m)."""
        return cls(grid, np.asarray(pred(grid.cell_centers()), dtype=bool), description)


@dataclass
class GradientField:
    grid: Grid
    entries: np.ndarray = field(repr=False)

    def norm(self) -> np.ndarray:
        """Frobenius norm of the Jacobian at each node."""
        return np.sqrt(np.sum(self.entries ** 2, axis=(-2, -1)))


def gradient(u: GridMap) -> GradientField:
    """Second-order finite differences: central inside, one-sided at the boundary."""
    g = u.grid
    parts = [np.gradient(u.values, g.h, axis=k, edge_order=2) for k in range(g.m)]
    return GradientField(g, np.stack(parts, axis=-2))


def cell_average(node_values: np.ndarray, m: int) -> np.ndarray:
    """Mean of the ``2^m`` corner values of every cell."""
    out = node_values
    for ax in range(m):
        a = [slice(None)] * out.ndim
        b = [slice(None)] * out.ndim
        a[ax] = slice(0, -1)
        b[ax] = slice(1, None)
        out = 0.5 * (out[tuple(a)] + out[tuple(b)])
    return out


def cell_energy(u: GridMap, p: float, grad: GradientField | None = None) -> np.ndarray:
    """Per-cell trapezoidal integral of ``|Du|^p``."""
    if p < 1:
        raise ParameterOutOfRange("p must be at least 1", p=p)
    grad = gradient(u) if grad is None else grad
    dens = grad.norm() ** p
    return cell_average(dens, u.grid.m) * u.grid.cell_volume


def sobolev_seminorm(u: GridMap, p: float, region: Region | None = None,
                     grad: GradientField | None = None) -> float:
    """``(integral over region of |Du|^p)^(1/p)`` with the trapezoidal cell rule."""
    ce = cell_energy(u, p, grad)
    cells = np.ones(ce.shape, dtype=bool) if region is None else region.cells()
    if not cells.any():
        return 0.0
    return float(np.sum(ce[cells])) ** (1.0 / p)


def lp_norm(u: GridMap, p: float, region: Region | None = None) -> float:
    """``(integral of |u|^p)^(1/p)`` with the same cell rule."""
    dens = np.linalg.norm(u.values, axis=-1) ** p
    ce = cell_average(dens, u.grid.m) * u.grid.cell_volume
    cells = np.ones(ce.shape, dtype=bool) if region is None else region.cells()
    if not cells.any():
        return 0.0
    return float(np.sum(ce[cells])) ** (1.0 / p)


def difference(u: GridMap, v: GridMap) -> GridMap:
    if u.grid != v.grid:
        raise ParameterOutOfRange("maps live on different grids")
    return GridMap(u.grid, u.values - v.values)


def relative_w1p_error(approx: GridMap, ref: GridMap, p: float,
                       region: Region | None = None) -> float:
    """``||approx - ref||_{W^{1,p}} / ||ref||_{W^{1,p}}`` with the p-sum norm."""
    d = difference(approx, ref)
    num = lp_norm(d, p, region) ** p + sobolev_seminorm(d, p, region) ** p
    den = lp_norm(ref, p, region) ** p + sobolev_seminorm(ref, p, region) ** p
    return float((num / den) ** (1.0 / p)) if den > 0 else float(num > 0)


def poincare_wirtinger_ratio(u: GridMap, region: Region, p: float,
                             max_points: int = 4000) -> tuple[float, float]:
    """Both sides of the mean-oscillation inequality on a cube region.

    ``lhs`` is the double average of ``|u(x) - u(y)|^p`` over region nodes and
    ``rhs`` is ``diam^p`` times the average of ``|Du|^p``.  Large regions are
    subsampled with a deterministic stride.
    """
    nodes = region.nodes()
    idx = np.flatnonzero(nodes.ravel())
    if idx.size == 0:
        return 0.0, 0.0
    stride = max(1, int(np.ceil(idx.size / max_points)))
    idx = idx[::stride]
    vals = u.values.reshape(-1, u.ambient_dim)[idx]
    pts = u.grid.points()[idx]
    lhs_sum = 0.0
    chunk = 512
    for s in range(0, len(vals), chunk):
        d = np.linalg.norm(vals[s:s + chunk, None, :] - vals[None, :, :], axis=-1)
        lhs_sum += float(np.sum(d ** p))
    lhs = lhs_sum / len(vals) ** 2
    diam = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    dens = gradient(u).norm().ravel()[np.flatnonzero(nodes.ravel())] ** p
    rhs = diam ** p * float(np.mean(dens))
    return lhs, rhs


def reflect_extend(u: GridMap, gamma: float) -> GridMap:
    """Even reflection across every face onto the cube of inradius ``r + 2 gamma``.

    ``gamma`` must be a whole number of cells.
    """
    g = u.grid
    if gamma <= 0:
        raise ParameterOutOfRange("gamma must be positive", gamma=gamma)
    k = g.cells_per(gamma)
    pad = 2 * k
    out_grid = Grid(g.m, g.inradius + 2 * gamma, g.res + 2 * pad)
    vals = np.pad(u.values, [(pad, pad)] * g.m + [(0, 0)], mode="reflect")
    return GridMap(out_grid, vals)


def subgrid(grid: Grid, inradius: float) -> tuple[Grid, tuple]:
    """Centered sub-grid of smaller inradius plus the slice selecting it."""
    k = grid.cells_per(grid.inradius - inradius)
    sub = Grid(grid.m, inradius, grid.res - 2 * k)
    return sub, tuple([slice(k, grid.res - k)] * grid.m)


def restrict(u: GridMap, inradius: float) -> GridMap:
    sub, sl = subgrid(u.grid, inradius)
    return GridMap(sub, u.values[sl].copy())


def embed(small: GridMap, big_grid: Grid, fill: GridMap) -> GridMap:
    """Write ``small`` into a copy of ``fill`` on the larger centered grid."""
    _, sl = subgrid(big_grid, small.grid.inradius)
    out = fill.values.copy()
    out[sl] = small.values
    return GridMap(big_grid, out)


def to_index(grid: Grid, points: np.ndarray) -> np.ndarray:
    return (np.asarray(points, dtype=float) + grid.inradius) / grid.h


def interpolate(u: GridMap, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Multilinear interpolation of ``u`` at physical ``points`` of shape (..., m)."""
    pts = np.asarray(points, dtype=float)
    lead = pts.shape[:-1]
    idx = to_index(u.grid, pts.reshape(-1, u.grid.m))
    lim = u.grid.res - 1
    if idx.size and (idx.min() < -tol * lim or idx.max() > lim * (1 + tol)):
        raise DomainExceeded("sample outside the grid domain",
                             min_index=float(idx.min()), max_index=float(idx.max()), limit=lim)
    idx = np.clip(idx, 0, lim)
    out = np.empty((idx.shape[0], u.ambient_dim))
    for c in range(u.ambient_dim):
        out[:, c] = ndimage.map_coordinates(u.values[..., c], idx.T, order=1, mode="nearest")
    return out.reshape(lead + (u.ambient_dim,))


def translate(u: GridMap, v, out_grid: Grid | None = None) -> GridMap:
    """``x -> u(x - v)`` sampled on ``out_grid`` (default: the grid of ``u``)."""
    v = np.broadcast_to(np.asarray(v, dtype=float), (u.grid.m,))
    out_grid = u.grid if out_grid is None else out_grid
    if not np.any(v) and out_grid == u.grid:
        return u.copy()
    return GridMap(out_grid, interpolate(u, out_grid.mesh() - v))
