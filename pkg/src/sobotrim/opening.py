"""Opening of a grid map around a subskeleton.

For each face ``sigma`` of dimension ``i <= ell`` the map is made constant
along the normal cubes of the face.  The normal coordinates ``y`` (offsets
from the face plane) are sent to ``zeta(y + z) - z`` where ``zeta`` vanishes on
a small cube, is the identity outside a larger cube and ``z`` is a shift chosen
per face to keep the energy low.  Levels nest: level ``i`` uses the inner
radius ``rho_i eta`` and outer radius ``rho_{i-1} eta`` from the chain
``rho < rho_ell < ... < rho_0 < rho_{-1} = 2 rho``, and the composite map is
``L_0 o L_1 o ... o L_ell`` (deepest level first).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .cubication import Cubication, Face
from .errors import EtaMisaligned, ParameterOutOfRange, SampleRejected
from .grid_core import Grid, GridMap, gradient, interpolate

_TOL = 1e-12


def smoothstep5(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x))


@dataclass(frozen=True)
class RadialProfile:
    """``g(t) = t S(t)`` with a quintic step ``S`` from ``inner`` to ``outer``.

    ``g`` vanishes on ``[0, inner]``, equals ``t`` beyond ``outer`` and is C^2.
    """

    inner: float
    outer: float

    def __post_init__(self):
        if not 0 <= self.inner < self.outer:
            raise ParameterOutOfRange("profile radii must satisfy 0 <= inner < outer",
                                      inner=self.inner, outer=self.outer)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return t * smoothstep5((t - self.inner) / (self.outer - self.inner))

    @property
    def max_slope(self) -> float:
        """Upper bound ``1 + (15/8) outer / (outer - inner)`` of ``g'``."""
        return 1.0 + 1.875 * self.outer / (self.outer - self.inner)

    def apply(self, y: np.ndarray) -> np.ndarray:
        """``zeta(y) = g(|y|_inf) y / |y|_inf`` with exact identity/zero zones."""
        y = np.asarray(y, dtype=float)
        r = np.max(np.abs(y), axis=-1, keepdims=True)
        safe = np.where(r > 0, r, 1.0)
        out = self(r) / safe * y
        out = np.where(r <= self.inner, 0.0, out)
        return np.where(r >= self.outer, y, out)


def build_zeta(inner: float, outer: float) -> RadialProfile:
    return RadialProfile(float(inner), float(outer))


def opening_radii(rho: float, ell: int) -> list:
    """``[rho_{-1}, rho_0, ..., rho_ell]`` with ``rho_i = rho (1 + (ell - i + 1) / (ell + 2))``."""
    return [rho * (1.0 + (ell - i + 1) / (ell + 2.0)) for i in range(-1, ell + 1)]


def shifted_map(profile: RadialProfile, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``zeta(y + z) - z``; exactly ``y`` in the identity zone and ``-z`` on the plateau."""
    w = y + z
    r = np.max(np.abs(w), axis=-1, keepdims=True)
    out = profile.apply(w) - z
    out = np.where(r <= profile.inner, -np.broadcast_to(z, y.shape), out)
    return np.where(r >= profile.outer, y, out)


@dataclass
class LevelData:
    level: int
    inner: float        # plateau radius rho_i eta
    outer: float        # identity radius rho_{i-1} eta
    profile: RadialProfile
    shift_range: float
    member: dict = field(default_factory=dict)   # axes -> bool lattice array
    shifts: dict = field(default_factory=dict)   # axes -> (lattice..., m - i) array


@dataclass
class OpeningMap:
    cub: Cubication
    ell: int
    rho: float
    radii: list
    faces: dict
    levels: list
    diagnostics: list = field(default_factory=list)

    @property
    def eta(self) -> float:
        return self.cub.eta

    def shift_of(self, face: Face) -> np.ndarray:
        lv = self.levels[face.dim]
        return lv.shifts[face.axes][face.corner]

    def max_profile_slope(self) -> float:
        return max(lv.profile.max_slope for lv in self.levels)

    def apply_level(self, pts: np.ndarray, i: int, only_face: Face | None = None,
                    z_override: np.ndarray | None = None) -> np.ndarray:
        """Apply the level-``i`` face maps to points (first matching face wins)."""
        cub = self.cub
        lv = self.levels[i]
        m = cub.m
        out = pts.copy()
        ext, two_eta, N = cub.extent, 2 * cub.eta, cub.N
        t = (pts + ext) / two_eta
        j = np.rint(t)
        dist = np.abs(pts - cub.vertex_coord(j))
        near = dist <= lv.outer * (1 + 1e-12) + _TOL
        done = np.zeros(len(pts), dtype=bool)
        for normal in itertools.combinations(range(m), m - i):
            axes = tuple(a for a in range(m) if a not in normal)
            if only_face is not None and axes != only_face.axes:
                continue
            cand = np.all(near[:, list(normal)], axis=1) & ~done if normal else ~done
            if not cand.any():
                continue
            member = lv.member.get(axes)
            if member is None and only_face is None:
                continue
            idx = np.flatnonzero(cand)
            jn = j[idx][:, list(normal)].astype(int)
            okn = np.all((jn >= 0) & (jn <= N), axis=1)
            base = np.clip(np.floor(t[idx][:, list(axes)]).astype(int), 0, N - 1)
            for offs in itertools.product((0, -1, 1), repeat=i):
                c = base + np.asarray(offs, dtype=int)
                ok = okn & np.all((c >= 0) & (c <= N - 1), axis=1) & ~done[idx]
                for k, a in enumerate(axes):
                    lo = cub.vertex_coord(c[:, k]) - lv.outer - _TOL
                    hi = cub.vertex_coord(c[:, k] + 1) + lv.outer + _TOL
                    ok &= (pts[idx, a] >= lo) & (pts[idx, a] <= hi)
                if not ok.any():
                    continue
                corner = np.zeros((len(idx), m), dtype=int)
                corner[:, list(normal)] = jn
                corner[:, list(axes)] = c
                corner[~ok] = 0
                if only_face is not None:
                    hit = ok & np.all(corner == np.asarray(only_face.corner), axis=1)
                    z = np.broadcast_to(z_override, (len(idx), m - i))
                else:
                    hit = ok & member[tuple(corner.T)]
                    z = lv.shifts[axes][tuple(corner.T)]
                if not hit.any():
                    continue
                sel = idx[hit]
                y = pts[sel][:, list(normal)] - cub.vertex_coord(jn[hit])
                new = shifted_map(lv.profile, y, z[hit])
                moved = np.any(new != y, axis=1)
                vals = out[sel]
                vals[:, list(normal)] = np.where(moved[:, None], cub.vertex_coord(jn[hit]) + new,
                                                 pts[sel][:, list(normal)])
                out[sel] = vals
                done[sel] = True
        return out

    def apply(self, pts: np.ndarray, upto: int | None = None) -> np.ndarray:
        """Composite map ``L_0 o ... o L_top`` at points of shape (K, m)."""
        top = self.ell if upto is None else upto
        out = np.asarray(pts, dtype=float).copy()
        for i in range(top, -1, -1):
            out = self.apply_level(out, i)
        return out

    def support_region_nodes(self, grid: Grid) -> np.ndarray:
        """Node mask of ``E^ell + Q_{2 rho eta}``."""
        mask = np.zeros(grid.shape, dtype=bool)
        for f in self.faces[self.ell]:
            lo, hi = self.cub.face_box(f)
            sl = _node_box(grid, lo - 2 * self.rho * self.eta, hi + 2 * self.rho * self.eta)
            mask[sl] = True
        return mask

    def dump(self) -> str:
        return json.dumps(self.diagnostics, indent=1, sort_keys=True)


def _node_box(grid: Grid, lo, hi) -> tuple:
    out = []
    for a in range(grid.m):
        s = int(np.ceil((lo[a] + grid.inradius) / grid.h - 1e-7))
        e = int(np.floor((hi[a] + grid.inradius) / grid.h + 1e-7))
        out.append(slice(max(s, 0), min(e, grid.res - 1) + 1))
    return tuple(out)


def _block_energy(vals: np.ndarray, h: float, p: float) -> float:
    """Trapezoidal integral of ``|D w|^p`` over a node block."""
    m = vals.ndim - 1
    if min(vals.shape[:-1]) < 3:
        return 0.0
    parts = [np.gradient(vals, h, axis=k, edge_order=2) for k in range(m)]
    dens = np.sqrt(sum(np.sum(d * d, axis=-1) for d in parts)) ** p
    for ax in range(m):
        a = [slice(None)] * dens.ndim
        b = [slice(None)] * dens.ndim
        a[ax] = slice(0, -1)
        b[ax] = slice(1, None)
        dens = 0.5 * (dens[tuple(a)] + dens[tuple(b)])
    return float(np.sum(dens)) * h ** m


def _all_subfaces(cub: Cubication, faces: list, ell: int) -> dict:
    out = {ell: sorted(set(faces))}
    for i in range(ell - 1, -1, -1):
        s = set()
        for f in out[ell]:
            s.update(cub.subfaces(f, i))
        out[i] = sorted(s)
    return out


def _init_levels(cub: Cubication, faces: dict, ell: int, rho: float) -> tuple:
    radii = opening_radii(rho, ell)
    m, N, eta = cub.m, cub.N, cub.eta
    levels = []
    for i in range(ell + 1):
        P = radii[i + 1] * eta
        S = radii[i] * eta
        s = (S - P) / 8.0
        lv = LevelData(i, P, S, RadialProfile(P + s, S - s), s)
        for f in faces[i]:
            if f.axes not in lv.member:
                shape = tuple(N if a in f.axes else N + 1 for a in range(m))
                lv.member[f.axes] = np.zeros(shape, dtype=bool)
                lv.shifts[f.axes] = np.zeros(shape + (m - i,))
            lv.member[f.axes][f.corner] = True
        levels.append(lv)
    return radii, levels


def select_shift(u: GridMap, op: OpeningMap, face: Face, n_per_axis: int = 3,
                 p: float = 2.0) -> tuple:
    """Argmin of the energy of ``u o L_{<i} o Phi_{face, z}`` over a grid of shifts.

    Lower levels must already have their shifts.  Returns ``(z, table)`` where
    ``table`` lists ``(z, energy)`` for every candidate.
    """
    i = face.dim
    lv = op.levels[i]
    cub = op.cub
    grid = u.grid
    lo, hi = cub.face_box(face)
    sl = _node_box(grid, lo - lv.outer, hi + lv.outer)
    pts = grid.mesh()[sl].reshape(-1, grid.m)
    block_shape = tuple(s.stop - s.start for s in sl)
    ticks = np.linspace(-lv.shift_range, lv.shift_range, n_per_axis) if n_per_axis > 1 else np.zeros(1)
    table = []
    for z in itertools.product(ticks, repeat=grid.m - i):
        z = np.asarray(z, dtype=float)
        q = op.apply_level(pts, i, only_face=face, z_override=z)
        for k in range(i - 1, -1, -1):
            q = op.apply_level(q, k)
        vals = interpolate(u, q).reshape(block_shape + (u.ambient_dim,))
        table.append((z, _block_energy(vals, grid.h, p)))
    energies = np.array([e for _, e in table])
    best = int(np.argmin(energies))
    avg = float(np.mean(energies))
    assert energies[best] <= 2.0 * avg + 1e-300, "shift selection exceeded twice the average"
    return table[best][0], table


def open_map(u: GridMap, cub: Cubication, ell: int, rho: float, faces: list | None = None,
             p: float = 2.0, n_per_axis: int = 3) -> tuple:
    """Open ``u`` around the ``ell``-faces ``faces`` (default: all of them).

    Returns ``(OpeningMap, u_op)``.  Nodes that the composite map fixes keep
    their values bit for bit.
    """
    if u.grid != cub.grid:
        raise EtaMisaligned("map and cubication use different grids")
    if not 0 <= ell <= cub.m - 1:
        raise ParameterOutOfRange("opening dimension must lie in 0..m-1", ell=ell)
    if not 0 < rho < 0.5:
        raise ParameterOutOfRange("rho must lie in (0, 1/2)", rho=rho)
    if cub.extent + 2 * rho * cub.eta > u.grid.inradius + 1e-9:
        raise EtaMisaligned("grid too small for the opening neighbourhoods")
    faces = cub.faces(ell) if faces is None else list(faces)
    fdict = _all_subfaces(cub, faces, ell)
    radii, levels = _init_levels(cub, fdict, ell, rho)
    op = OpeningMap(cub, ell, rho, radii, fdict, levels)
    for i in range(ell + 1):
        for f in fdict[i]:
            z, table = select_shift(u, op, f, n_per_axis, p)
            levels[i].shifts[f.axes][f.corner] = z
            op.diagnostics.append({"face": f.key(), "dim": i, "z": [float(v) for v in z],
                                   "candidates": len(table)})
    u_op = apply_opening(u, op)
    _record_face_diagnostics(u, u_op, op, p)
    return op, u_op


def apply_opening(u: GridMap, op: OpeningMap) -> GridMap:
    grid = u.grid
    mask = op.support_region_nodes(grid)
    pts = grid.mesh()[mask]
    q = op.apply(pts)
    moved = np.any(q != pts, axis=1)
    vals = u.values.copy()
    sub = vals[mask]
    if moved.any():
        sub[moved] = interpolate(u, q[moved])
    vals[mask] = sub
    return GridMap(grid, vals)


def fiber_variance(u_op: GridMap, op: OpeningMap, face: Face, radius: float | None = None) -> float:
    """Max over along-face nodes of the variance of ``u_op`` on the normal cube of ``radius``."""
    cub = op.cub
    grid = u_op.grid
    r = op.rho * op.eta if radius is None else radius
    lo, hi = cub.face_box(face)
    lo = lo.copy()
    hi = hi.copy()
    for a in range(cub.m):
        if a not in face.axes:
            lo[a] -= r
            hi[a] += r
    block = u_op.values[_node_box(grid, lo, hi)]
    normal = tuple(a for a in range(cub.m) if a not in face.axes)
    if not normal:
        return 0.0
    return float(np.max(np.var(block, axis=normal)))


def _record_face_diagnostics(u: GridMap, u_op: GridMap, op: OpeningMap, p: float) -> None:
    cub = op.cub
    g_u = gradient(u)
    g_op = gradient(u_op)
    from .grid_core import cell_energy

    ce_u = cell_energy(u, p, g_u)
    ce_op = cell_energy(u_op, p, g_op)
    by_key = {d["face"]: d for d in op.diagnostics}
    for i in range(op.ell + 1):
        for f in op.faces[i]:
            sl = cub.neighborhood_slices(f, 2 * op.rho * op.eta)
            d = by_key[f.key()]
            d["energy_before"] = float(np.sum(ce_u[sl]))
            d["energy_after"] = float(np.sum(ce_op[sl]))
            d["fiber_variance_max"] = fiber_variance(u_op, op, f)


def face_energy_ratios(u: GridMap, u_op: GridMap, op: OpeningMap, p: float) -> np.ndarray:
    """``||D u_op|| / ||D u||`` on ``sigma + Q_{2 rho eta}`` for every top-level face."""
    from .grid_core import cell_energy

    ce_u = cell_energy(u, p)
    ce_op = cell_energy(u_op, p)
    out = []
    for f in op.faces[op.ell]:
        sl = op.cub.neighborhood_slices(f, 2 * op.rho * op.eta)
        a = float(np.sum(ce_u[sl]))
        b = float(np.sum(ce_op[sl]))
        out.append((b / a) ** (1.0 / p) if a > 0 else (0.0 if b == 0 else np.inf))
    return np.array(out)


@dataclass
class FlatnessReport:
    ratios: np.ndarray
    rejected: int
    constant: float


def flatness_bound_check(u_op: GridMap, op: OpeningMap, tau: Face, samples, p: float) -> FlatnessReport:
    """Ratios ``r^{p-m} int_{Q_r(x)} |D u_op|^p / (eta^{p-m} int_{tau + Q_{rho eta}} |D u_op|^p)``.

    ``samples`` is an iterable of ``(x, r)``; cubes leaving ``tau + Q_{rho eta}``
    are counted as rejected and skipped.
    """
    from .grid_core import cell_energy

    if op.ell > p + 1:
        raise ParameterOutOfRange("flatness estimate needs ell <= p + 1", ell=op.ell, p=p)
    cub = op.cub
    m = cub.m
    eta = op.eta
    ce = cell_energy(u_op, p)
    tube = cub.neighborhood_slices(tau, op.rho * eta)
    rhs = eta ** (p - m) * float(np.sum(ce[tube]))
    lo_t, hi_t = cub.face_box(tau)
    lo_t = lo_t - op.rho * eta
    hi_t = hi_t + op.rho * eta
    ratios = []
    rejected = 0
    for x, r in samples:
        x = np.asarray(x, dtype=float)
        try:
            if np.any(x - r < lo_t - 1e-12) or np.any(x + r > hi_t + 1e-12):
                raise SampleRejected("cube leaves the face tube", x=x.tolist(), r=r)
        except SampleRejected:
            rejected += 1
            continue
        sl = cub.cell_slices(x - r, x + r)
        lhs = r ** (p - m) * float(np.sum(ce[sl]))
        ratios.append(lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf))
    ratios = np.array(ratios)
    const = float(np.max(ratios)) if ratios.size else 0.0
    return FlatnessReport(ratios, rejected, const)
