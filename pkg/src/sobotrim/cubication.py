"""Uniform cubications of ``Q_{1+gamma}`` and the good/bad cube partition.

Cubes have inradius ``eta`` and sit on the vertex lattice
``-(1 + gamma) + 2 eta j`` for ``j = 0..N`` with ``N = (1 + gamma) / eta``.
A face is a lattice corner plus the tuple of axes it spans.  Everything is
aligned with a host :class:`~sobotrim.grid_core.Grid` whose spacing divides
``eta``, so each face is a block of grid nodes and each face neighbourhood is
a block of grid cells.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import EtaMisaligned, InputNotManifoldValued, ParameterOutOfRange
from .grid_core import Grid, GridMap, Region, cell_average, cell_energy

_TOL = 1e-9


@dataclass(frozen=True, order=True)
class Face:
    corner: tuple
    axes: tuple

    @property
    def dim(self) -> int:
        return len(self.axes)

    def key(self) -> str:
        return "c" + "_".join(map(str, self.corner)) + "a" + "".join(map(str, self.axes))


@dataclass
class Cubication:
    m: int
    gamma: float
    eta: float
    grid: Grid
    rho: float | None = None
    _faces: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        ext = 1.0 + self.gamma
        ratio = ext / self.eta
        self.N = int(round(ratio))
        if self.N < 1 or abs(ratio - self.N) > 1e-9 * max(1.0, ratio):
            raise EtaMisaligned("eta does not divide 1 + gamma", eta=self.eta, extent=ext)
        k = self.eta / self.grid.h
        self.k = int(round(k))
        if self.k < 1 or abs(k - self.k) > 1e-6 * max(1.0, k):
            raise EtaMisaligned("eta is not a whole number of grid cells", eta=self.eta, h=self.grid.h)
        if self.grid.m != self.m:
            raise EtaMisaligned("grid dimension differs from cubication dimension")
        if self.grid.inradius < ext - _TOL:
            raise EtaMisaligned("grid does not cover the cubicated domain",
                                grid_inradius=self.grid.inradius, extent=ext)
        off = (self.grid.inradius - ext) / self.grid.h
        self.offset = int(round(off))
        if abs(off - self.offset) > 1e-6:
            raise EtaMisaligned("cubication corner is not a grid node")
        if self.rho is not None and 2 * self.rho * self.eta > self.gamma + _TOL:
            raise ParameterOutOfRange("2 rho eta must not exceed gamma",
                                      rho=self.rho, eta=self.eta, gamma=self.gamma)

    @property
    def extent(self) -> float:
        return 1.0 + self.gamma

    # lattice ------------------------------------------------------------
    def vertex_coord(self, j):
        return -self.extent + 2.0 * self.eta * np.asarray(j, dtype=float)

    def vertex_node(self, j):
        """Grid node index of lattice vertex index ``j`` (per axis)."""
        return self.offset + 2 * self.k * np.asarray(j)

    def faces(self, i: int) -> list:
        if not 0 <= i <= self.m:
            raise ParameterOutOfRange("face dimension out of range", i=i)
        if i not in self._faces:
            out = []
            for axes in itertools.combinations(range(self.m), i):
                ranges = [range(self.N) if a in axes else range(self.N + 1) for a in range(self.m)]
                for corner in itertools.product(*ranges):
                    out.append(Face(tuple(corner), axes))
            self._faces[i] = out
        return self._faces[i]

    def count(self, i: int) -> int:
        return comb(self.m, i) * self.N ** i * (self.N + 1) ** (self.m - i)

    def cubes(self) -> list:
        return self.faces(self.m)

    def cube(self, corner) -> Face:
        return Face(tuple(int(c) for c in corner), tuple(range(self.m)))

    def contains(self, face: Face) -> bool:
        for a in range(self.m):
            c = face.corner[a]
            top = self.N - 1 if a in face.axes else self.N
            if not 0 <= c <= top:
                return False
        return True

    def face_box(self, face: Face) -> tuple:
        lo = self.vertex_coord(face.corner)
        hi = lo.copy()
        for a in face.axes:
            hi[a] += 2 * self.eta
        return lo, hi

    def cofaces(self, face: Face) -> list:
        out = []
        for a in range(self.m):
            if a in face.axes:
                continue
            axes = tuple(sorted(face.axes + (a,)))
            for shift in (0, -1):
                c = list(face.corner)
                c[a] += shift
                f = Face(tuple(c), axes)
                if self.contains(f):
                    out.append(f)
        return out

    def boundary(self, face: Face) -> list:
        out = []
        for a in face.axes:
            axes = tuple(x for x in face.axes if x != a)
            for shift in (0, 1):
                c = list(face.corner)
                c[a] += shift
                out.append(Face(tuple(c), axes))
        return out

    def subfaces(self, face: Face, i: int) -> list:
        """All ``i``-dimensional faces of ``face``."""
        out = []
        for axes in itertools.combinations(face.axes, i):
            free = [a for a in face.axes if a not in axes]
            for bits in itertools.product((0, 1), repeat=len(free)):
                c = list(face.corner)
                for a, b in zip(free, bits):
                    c[a] += b
                out.append(Face(tuple(c), axes))
        return out

    # grid correspondence ------------------------------------------------
    def node_slices(self, face: Face) -> tuple:
        """Grid node index slices covering the closed face (length-1 slices on normal axes)."""
        out = []
        for a in range(self.m):
            s = int(self.vertex_node(face.corner[a]))
            e = s + 2 * self.k if a in face.axes else s
            out.append(slice(s, e + 1))
        return tuple(out)

    def cell_slices(self, lo, hi) -> tuple:
        """Cell index slices of the cells whose centers lie in ``[lo, hi]``."""
        g = self.grid
        out = []
        for a in range(self.m):
            jmin = int(np.ceil((lo[a] + g.inradius) / g.h - 0.5 - 1e-7))
            jmax = int(np.floor((hi[a] + g.inradius) / g.h - 0.5 + 1e-7))
            jmin = max(jmin, 0)
            jmax = min(jmax, g.res - 2)
            out.append(slice(jmin, max(jmin, jmax + 1)))
        return tuple(out)

    def neighborhood_slices(self, face: Face, r: float) -> tuple:
        lo, hi = self.face_box(face)
        return self.cell_slices(lo - r, hi + r)

    def face_neighborhood(self, face: Face, r: float) -> Region:
        """Cell-granular Minkowski sum ``face + Q_r``."""
        mask = np.zeros(self.grid.cell_shape, dtype=bool)
        mask[self.neighborhood_slices(face, r)] = True
        return Region(self.grid, mask, f"{face.key()}+Q_{r:g}")

    def union_neighborhood(self, faces, r: float) -> Region:
        mask = np.zeros(self.grid.cell_shape, dtype=bool)
        for f in faces:
            mask[self.neighborhood_slices(f, r)] = True
        return Region(self.grid, mask, f"union+Q_{r:g}")

    def union_region(self, faces) -> Region:
        return self.union_neighborhood(faces, 0.0)


def build_cubication(gamma: float, eta: float, grid: Grid, rho: float | None = None) -> Cubication:
    return Cubication(grid.m, float(gamma), float(eta), grid, rho)


@dataclass
class GoodBadPartition:
    cubication: Cubication
    good: np.ndarray
    mean_dist: np.ndarray
    rescaled_energy: np.ndarray
    R: float
    lam: float
    rho: float
    p: float
    basepoint: np.ndarray

    @property
    def bad(self) -> np.ndarray:
        return ~self.good

    def good_cubes(self) -> list:
        return [self.cubication.cube(c) for c in zip(*np.nonzero(self.good))]

    def bad_cubes(self) -> list:
        return [self.cubication.cube(c) for c in zip(*np.nonzero(~self.good))]

    def _faces_of(self, cubes, i: int) -> list:
        seen = set()
        for c in cubes:
            seen.update(self.cubication.subfaces(c, i))
        return sorted(seen)

    def bad_faces(self, i: int) -> list:
        """``E^i``: the ``i``-faces of bad cubes."""
        return self._faces_of(self.bad_cubes(), i)

    def good_faces(self, i: int) -> list:
        return self._faces_of(self.good_cubes(), i)

    def interface_faces(self, i: int) -> list:
        """``i``-faces shared by a bad cube and a good cube."""
        return sorted(set(self.bad_faces(i)) & set(self.good_faces(i)))

    def is_good(self, cube: Face) -> bool:
        return bool(self.good[cube.corner])

    def to_json(self) -> str:
        rows = []
        for idx in itertools.product(*(range(self.cubication.N),) * self.cubication.m):
            rows.append({"face": self.cubication.cube(idx).key(),
                         "mean_dist": float(self.mean_dist[idx]),
                         "rescaled_energy": float(self.rescaled_energy[idx]),
                         "good": bool(self.good[idx])})
        return json.dumps(rows, indent=1)


@dataclass
class CubeIntegrals:
    """Per-cell integrands reused by classification and diagnostics."""

    energy: np.ndarray
    dist: np.ndarray


def cube_integrals(u: GridMap, manifold, p: float, member_tol: float = 1e-6) -> CubeIntegrals:
    res = np.abs(manifold.residual(u.values))
    if res.size and float(np.max(res)) > member_tol:
        raise InputNotManifoldValued("input values are off the target manifold",
                                     max_residual=float(np.max(res)))
    dist = manifold.distance_to_basepoint(u.values)
    ce = cell_energy(u, p)
    cd = cell_average(np.asarray(dist, dtype=float), u.grid.m) * u.grid.cell_volume
    return CubeIntegrals(ce, cd)


def classify(u: GridMap, cub: Cubication, R: float, lam: float, rho: float, manifold, p: float,
             integrals: CubeIntegrals | None = None) -> GoodBadPartition:
    """Good cubes: mean distance to the basepoint at most ``R`` and rescaled energy at most ``lam``."""
    if u.grid != cub.grid:
        raise EtaMisaligned("map and cubication use different grids")
    ints = cube_integrals(u, manifold, p) if integrals is None else integrals
    m = cub.m
    shape = (cub.N,) * m
    mean_dist = np.zeros(shape)
    resc = np.zeros(shape)
    scale = cub.eta ** (-(m - p) / p)
    for idx in itertools.product(*(range(cub.N),) * m):
        sl = cub.neighborhood_slices(cub.cube(idx), 2 * rho * cub.eta)
        vol = ints.energy[sl].size * cub.grid.cell_volume
        mean_dist[idx] = float(np.sum(ints.dist[sl])) / vol
        resc[idx] = scale * float(np.sum(ints.energy[sl])) ** (1.0 / p)
    good = (mean_dist <= R) & (resc <= lam)
    return GoodBadPartition(cub, good, mean_dist, resc, float(R), float(lam), float(rho), float(p),
                            np.asarray(manifold.basepoint, dtype=float))


@dataclass
class MeasureBoundReport:
    lhs: float
    term_R: float
    term_lambda: float
    ratio: float
    constant: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.constant * (self.term_R + self.term_lambda) * (1 + 1e-12)


def bad_measure_report(u: GridMap, partition: GoodBadPartition, p: float, manifold,
                       integrals: CubeIntegrals | None = None) -> MeasureBoundReport:
    """Measure of ``E + Q_{2 rho eta}`` against the distance and energy terms.

    ``constant`` is the explicit ``2^m (2 (1 + 2 rho))^m`` obtained from the
    overlap multiplicity ``2^m`` of the neighbourhoods.
    """
    cub = partition.cubication
    ints = cube_integrals(u, manifold, p) if integrals is None else integrals
    lhs = cub.union_neighborhood(partition.bad_cubes(), 2 * partition.rho * cub.eta).volume()
    term_R = float(np.sum(ints.dist)) / partition.R
    term_l = cub.eta ** p / partition.lam ** p * float(np.sum(ints.energy))
    total = term_R + term_l
    ratio = lhs / total if total > 0 else 0.0
    m = cub.m
    const = 2.0 ** m * (2.0 * (1.0 + 2.0 * partition.rho)) ** m
    return MeasureBoundReport(float(lhs), term_R, term_l, float(ratio), const)
