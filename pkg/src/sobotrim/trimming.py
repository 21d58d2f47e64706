"""Bounded extensions of boundary data and the degree obstruction.

``trim_small_energy`` extends a boundary datum of small energy through one
chart: the chart image of the boundary is coned off toward the chart center,
clamped into the chart ball and pulled back.  ``trim_global`` reduces a general
datum to that case with a collar, a subdivision and an opening of the
codimension-one skeleton.  The degree tools certify that no bounded map can
approximate the funnel counterexample.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .cubication import Cubication
from .errors import (CertificateFailed, NoUniformChart, NotSmallEnergy, ParameterOutOfRange,
                     ProbeUnstable, TrimmingFailed)
from .grid_core import Grid, GridMap, cell_energy, interpolate, sobolev_seminorm
from .homogenization import face_energy, radial_fill
from .manifolds import Chart, Euclidean, FunnelMap, FunnelSphere, TargetManifold
from .opening import open_map

log = logging.getLogger(__name__)


# boundary helpers -----------------------------------------------------------
def boundary_mask(grid: Grid) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for a in range(grid.m):
        sl = [slice(None)] * grid.m
        sl[a] = 0
        mask[tuple(sl)] = True
        sl[a] = grid.res - 1
        mask[tuple(sl)] = True
    return mask


def boundary_energy(u: GridMap, p: float) -> float:
    """``int_{dQ} |D_tan u|^p`` summed over the facets of the cube."""
    g = u.grid
    total = 0.0
    for a in range(g.m):
        for side in (0, g.res - 1):
            block = np.take(u.values, side, axis=a)
            total += face_energy(block, g.h, p)
    return total


def max_jump(u: GridMap) -> float:
    """Largest distance between values at adjacent nodes."""
    return max(float(np.max(np.linalg.norm(np.diff(u.values, axis=a), axis=-1))) for a in range(u.grid.m))


@dataclass
class TrimResult:
    v: GridMap
    boundary_residual: float
    energy_ratio: float
    continuity: float
    energy_out: float
    energy_in: float
    boundary_energy: float
    info: dict = field(default_factory=dict)


# Largest ratio of the chart-center reach to the boundary seminorm over a
# battery of random smooth loops on the unit square (measured 0.63), with margin.
MORREY_CONSTANT = 0.75


def small_energy_threshold(chart: Chart, kappa: float, p: float, inradius: float, m: int,
                           morrey: float = MORREY_CONSTANT) -> tuple:
    """``(alpha, kappa2)`` with ``kappa2 = 0.95 min(kappa, kappa'/C)``.

    ``alpha = kappa2 / (morrey (|dQ| / 8)^(1 - 1/p))`` so that the boundary
    stays within ``kappa2`` of the chart center; the reach is checked exactly
    afterwards in the chart.
    """
    kappa2 = 0.95 * min(kappa, chart.inner_radius / chart.lipschitz)
    perimeter = 2 * m * (2 * inradius) ** (m - 1)
    return kappa2 / (morrey * (perimeter / 8.0) ** (1.0 - 1.0 / p)), kappa2


def calibrate_morrey_constant(M: TargetManifold, rng: np.random.Generator, count: int = 200,
                              res: int = 129) -> float:
    """Max of ``reach / ||D u||_{L^2(dQ)}`` over random smooth loops around random centers."""
    g = Grid(2, 1.0, res)
    x = g.mesh()
    ang = np.arctan2(x[..., 1], x[..., 0])
    bm = boundary_mask(g)
    best = 0.0
    for _ in range(count):
        r0 = rng.uniform(0.05, 0.5)
        amp = rng.uniform(0.0, 0.6)
        freq = rng.integers(1, 5)
        ph = rng.uniform(0.0, 2 * np.pi)
        th = ang + rng.uniform(-0.5, 0.5) * np.sin(ang + ph)
        r = r0 * (1 + amp * np.sin(freq * th + ph))
        vals = np.stack([np.sin(r) * np.cos(th), np.sin(r) * np.sin(th), np.cos(r)], -1)
        e = boundary_energy(GridMap(g, vals), 2.0) ** 0.5
        xi = M.project(vals[bm].mean(axis=0)[None])[0]
        reach = float(np.max(M.geodesic_distance(xi[None], vals[bm])))
        best = max(best, reach / e)
    return best


def trim_small_energy(u: GridMap, M: TargetManifold, p: float | None = None,
                      alpha: float | None = None, kappa: float = 1.5) -> TrimResult:
    """Chart extension of the boundary values of ``u`` into the cube.

    The chart image ``w_b`` of the boundary is extended by the cone
    ``(1 - t) c + t w_b(x / t)`` with ``t = |x|_inf / r`` and ``c`` the image of
    the chart center, which lies in ``W^{1,p}`` for every ``p``.
    """
    grid = u.grid
    p = float(grid.m if p is None else p)
    bmask = boundary_mask(grid)
    ub = u.values[bmask]
    eb = boundary_energy(u, p) ** (1.0 / p)
    xi = M.project(np.mean(ub, axis=0)[None])[0]
    chart = M.chart_at(xi, kappa)
    a_default, kappa2 = small_energy_threshold(chart, kappa, p, grid.inradius, grid.m)
    alpha = a_default if alpha is None else alpha
    if eb > alpha:
        raise NotSmallEnergy("boundary energy above the small-energy threshold", energy=eb, alpha=alpha)
    c = chart.forward(xi[None])[0]
    wb_all = chart.forward(u.values)
    reach = float(np.max(np.linalg.norm(wb_all[bmask] - c, axis=-1)))
    if reach > chart.inner_radius:
        raise NotSmallEnergy("boundary leaves the chart ball", reach=reach, inner=chart.inner_radius)
    shell = np.where(bmask[..., None], wb_all, 0.0)
    w0 = radial_fill(shell)
    t = np.max(np.abs(grid.mesh()), axis=-1, keepdims=True) / grid.inradius
    w = chart.clamp((1.0 - t) * c + t * w0)
    vals = chart.inverse(w)
    vals[bmask] = u.values[bmask]
    v = GridMap(grid, vals)
    e_out = sobolev_seminorm(v, p)
    e_in = sobolev_seminorm(u, p)
    denom = e_in + eb
    ratio = e_out / denom if denom > 0 else 0.0
    info = {"chart_center": xi.tolist(), "alpha": alpha, "kappa2": kappa2,
            "chart_reach": reach, "residual": float(np.max(np.abs(M.residual(vals))))}
    return TrimResult(v, float(np.max(np.abs(vals[bmask] - u.values[bmask]))), ratio, max_jump(v),
                      e_out, e_in, eb, info)


def _collar_map(u: GridMap, M: TargetManifold) -> GridMap:
    """``u(x / t)`` on the outer half (``t = |x|_inf / r >= 1/2``), ``u(2x)`` inside."""
    g = u.grid
    x = g.mesh()
    t = np.max(np.abs(x), axis=-1, keepdims=True) / g.inradius
    ring = t >= 0.5
    src = np.where(ring, x / np.maximum(t, 1e-300), 2.0 * x)
    vals = M.project(interpolate(u, src.reshape(-1, g.m)))
    vals = vals.reshape(u.values.shape)
    bm = boundary_mask(g)
    vals[bm] = u.values[bm]
    return GridMap(g, vals)


def _mu_candidates(grid: Grid, inner: float, mu_floor: float) -> list:
    out = []
    mu = inner / 2.0
    while mu >= mu_floor - 1e-12:
        n = inner / mu
        k = mu / grid.h
        if abs(n - round(n)) < 1e-9 and abs(k - round(k)) < 1e-6:
            out.append(mu)
        mu /= 2.0
    return out


def trim_global(u: GridMap, M: TargetManifold, p: float | None = None, mu: float | None = None,
                rho: float = 0.25, mu_floor: float | None = None, kappa: float = 1.5) -> TrimResult:
    """Bounded continuous extension of the boundary values of ``u``.

    The map is first replaced by a collar that is zero-homogeneous near the
    boundary, the cube ``Q_{3r/4}`` is split into subcubes of inradius ``mu``
    and opened around their codimension-one skeleton, and each subcube is
    trimmed from its opened boundary.  ``mu`` is halved until every subcube
    passes the small-energy test.
    """
    grid = u.grid
    m = grid.m
    p = float(m if p is None else p)
    r0 = grid.inradius
    inner = 0.75 * r0
    floor = 4 * grid.h if mu_floor is None else mu_floor
    cands = [mu] if mu is not None else _mu_candidates(grid, inner, floor)
    if not cands:
        raise ParameterOutOfRange("no grid-aligned subdivision of the inner cube", h=grid.h)
    U = _collar_map(u, M)
    last = None
    for mu_i in cands:
        cub = Cubication(m, inner - 1.0, mu_i, grid)
        _, uop = open_map(U, cub, m - 1, rho, p=p)
        moved = np.any(uop.values != U.values, axis=-1)
        vals = uop.values.copy()
        if moved.any():
            vals[moved] = M.project(vals[moved])
        vals_out = vals.copy()
        failed = None
        for cube in cub.cubes():
            sl = cub.node_slices(cube)
            local = GridMap(Grid(m, mu_i, 2 * cub.k + 1), vals[sl])
            try:
                res = trim_small_energy(local, M, p, kappa=kappa)
            except (NotSmallEnergy, NoUniformChart) as exc:
                failed = (cube, exc, local)
                break
            vals_out[sl] = res.v.values
        if failed is None:
            bm = boundary_mask(grid)
            vals_out[bm] = u.values[bm]
            v = GridMap(grid, vals_out)
            e_out = sobolev_seminorm(v, p)
            e_in = sobolev_seminorm(u, p)
            eb = boundary_energy(u, p) ** (1.0 / p)
            return TrimResult(v, float(np.max(np.abs(vals_out[bm] - u.values[bm]))),
                              e_out / e_in if e_in > 0 else 0.0, max_jump(v), e_out, e_in, eb,
                              {"mu": mu_i, "subcubes": len(cub.cubes())})
        last = (mu_i,) + failed
        log.info("trim failed at mu=%g on %s: %s", mu_i, failed[0].key(), failed[1])
    mu_i, cube, exc, local = last
    raise TrimmingFailed("per-cube trim failed at the finest subdivision", mu=mu_i, cube=cube.key(),
                         reason=str(exc), probe=_obstruction_probe(local, M))


def _obstruction_probe(local: GridMap, M: TargetManifold) -> dict | None:
    """Degree of a failing subcube boundary at the basepoint, in a global chart."""
    if local.grid.m != 2 or not hasattr(M, "global_chart"):
        return None
    chart = M.global_chart()
    try:
        deg = brouwer_degree(local, M.basepoint, chart=chart)
    except ProbeUnstable:
        return {"probe": M.basepoint.tolist(), "degree": None}
    return {"probe": M.basepoint.tolist(), "degree": deg}


def geodesic_trim_1d(a: np.ndarray, b: np.ndarray, M: TargetManifold, res: int = 129) -> GridMap:
    """Extension of two endpoint values to ``Q^1`` along a shortest geodesic."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    grid = Grid(1, 1.0, res)
    if np.array_equal(a, b):
        return GridMap(grid, np.repeat(a[None], res, axis=0))
    path = M.geodesic_path(a, b, k=res)
    path[0] = a
    path[-1] = b
    return GridMap(grid, path)


def path_length(path: GridMap) -> float:
    return float(np.sum(np.linalg.norm(np.diff(path.values, axis=0), axis=-1)))


# degree ---------------------------------------------------------------------
def boundary_loop(block: np.ndarray) -> np.ndarray:
    """Counterclockwise closed boundary loop of a 2D node block (first node not repeated)."""
    bottom = block[:, 0]
    right = block[-1, :]
    top = block[::-1, -1]
    left = block[0, ::-1]
    return np.concatenate([bottom[:-1], right[:-1], top[:-1], left[:-1]])


def _check_probe(loop: np.ndarray, y: np.ndarray) -> None:
    closed = np.vstack([loop, loop[:1]])
    seg = float(np.max(np.linalg.norm(np.diff(closed, axis=0), axis=-1)))
    gap = float(np.min(np.linalg.norm(loop - y, axis=-1)))
    if not gap >= 2.0 * seg:
        raise ProbeUnstable("probe too close to the boundary image", gap=gap, segment=seg)


def winding_number(loop: np.ndarray, y: np.ndarray) -> int:
    """Winding number of a closed planar polygon around ``y``."""
    d = loop - np.asarray(y, dtype=float)
    ang = np.arctan2(d[:, 1], d[:, 0])
    inc = np.diff(np.concatenate([ang, ang[:1]]))
    inc = (inc + np.pi) % (2 * np.pi) - np.pi
    return int(round(float(np.sum(inc)) / (2 * np.pi)))


def _perm_sign(perm) -> int:
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def simplex_degree(block: np.ndarray, y: np.ndarray) -> int:
    """Signed count of Freudenthal simplices whose image contains a perturbed ``y``."""
    n = block.ndim - 1
    y = np.asarray(y, dtype=float)
    scale = float(np.max(np.abs(block))) + 1.0
    y = y + 1e-9 * scale * np.array([np.sqrt(2.0 + k) / (1 + 3 * k) for k in range(n)])
    cells = tuple(s - 1 for s in block.shape[:n])
    total = 0
    for perm in itertools.permutations(range(n)):
        offs = [np.zeros(n, dtype=int)]
        for a in perm:
            o = offs[-1].copy()
            o[a] += 1
            offs.append(o)
        verts = [block[tuple(slice(o[a], o[a] + cells[a]) for a in range(n))].reshape(-1, n) for o in offs]
        w0 = verts[0]
        lo = np.minimum.reduce(verts)
        hi = np.maximum.reduce(verts)
        cand = np.all((lo <= y) & (hi >= y), axis=1)
        if not cand.any():
            continue
        mat = np.stack([v[cand] - w0[cand] for v in verts[1:]], axis=-1)
        det = np.linalg.det(mat)
        ok = np.abs(det) > 1e-300
        lam = np.linalg.solve(mat[ok], (y - w0[cand][ok])[..., None])[..., 0]
        inside = np.all(lam > 0, axis=1) & (np.sum(lam, axis=1) < 1)
        total += _perm_sign(perm) * int(np.sum(np.sign(det[ok][inside])))
    return total


def brouwer_degree(u: GridMap, y, radius: float | None = None, chart: Chart | None = None,
                   method: str = "winding") -> int:
    """Degree of ``u`` on ``Q_radius`` (whole grid by default) at the probe ``y``.

    With a chart, values and probe are mapped through ``chart.forward`` first.
    """
    g = u.grid
    y = np.asarray(y, dtype=float)
    vals = u.values
    if chart is not None:
        vals = chart.forward(vals)
        y = chart.forward(y[None])[0]
    if radius is not None:
        k = g.cells_per(radius)
        c = (g.res - 1) // 2
        vals = vals[tuple([slice(c - k, c + k + 1)] * g.m)]
    if vals.shape[-1] != g.m:
        raise ParameterOutOfRange("degree needs equal domain and target dimensions",
                                  domain=g.m, target=vals.shape[-1])
    if g.m == 1:
        a, b = float(vals[0, 0] - y[0]), float(vals[-1, 0] - y[0])
        if a == 0 or b == 0:
            raise ProbeUnstable("probe hits an endpoint value")
        return int((np.sign(b) - np.sign(a)) // 2)
    if g.m == 2:
        _check_probe(boundary_loop(vals), y)
    if method == "winding":
        if g.m != 2:
            raise ParameterOutOfRange("winding number only in dimension 2")
        return winding_number(boundary_loop(vals), y)
    if method == "simplex":
        return simplex_degree(vals, y)
    raise ParameterOutOfRange("unknown degree method", method=method)


# obstruction certificate ---------------------------------------------------
def cap_measure(M: FunnelSphere, radius: float, samples: int = 20001) -> float:
    """``H^n`` of the points of the funnel within sphere distance ``radius`` of the basepoint."""
    n = M.n
    d = np.linspace(np.pi - radius, np.pi, samples)
    lam = M.lam_of_d(d)
    dlam = np.gradient(lam, d)
    from math import gamma, pi

    omega = 2 * pi ** (n / 2) / gamma(n / 2)   # measure of the unit (n-1)-sphere
    dens = omega * (lam * np.sin(d)) ** (n - 1) * np.sqrt(lam ** 2 + dlam ** 2)
    return float(np.trapezoid(dens, d))


def cap_probes(M: TargetManifold, radius: float, count: int = 5) -> np.ndarray:
    """Deterministic probe points on the cap of sphere radius ``radius`` around the basepoint."""
    n = M.n
    b = np.asarray(M.basepoint, dtype=float)
    out = [b]
    for j in range(1, count):
        ang = 2 * np.pi * j / max(count - 1, 1)
        d = radius * (0.3 + 0.6 * (j % 2))
        direction = np.zeros(n + 1)
        direction[0] = np.cos(ang)
        if n >= 2:
            direction[1] = np.sin(ang)
        s = np.cos(d) * b / np.linalg.norm(b) + np.sin(d) * direction
        out.append(M.project(s[None])[0] if isinstance(M, FunnelSphere) else s)
    return np.array(out)


def core_mask(grid: Grid, floor: float) -> np.ndarray:
    """Cells whose center has ``|x|_inf < floor``."""
    return np.max(np.abs(grid.cell_centers()), axis=-1) < floor


def ball_energies(u: GridMap, p: float, radii, floor: float | None = None) -> list:
    """``int_{Q_r} |D u|^p`` excluding the core ``|x|_inf < floor`` (default ``2h``)."""
    g = u.grid
    ce = cell_energy(u, p)
    core = core_mask(g, 2 * g.h if floor is None else floor)
    cent = np.max(np.abs(g.cell_centers()), axis=-1)
    return [float(np.sum(ce[(cent <= r) & ~core])) for r in radii]


def gap_energy(w: GridMap, u: GridMap, p: float, floor: float | None = None) -> float:
    """``int |D w - D u|^p`` excluding the core."""
    g = u.grid
    diff = GridMap(g, w.values - u.values)
    ce = cell_energy(diff, p)
    core = core_mask(g, 2 * g.h if floor is None else floor)
    return float(np.sum(ce[~core]))


def funnel_truncation(fmap: FunnelMap, grid: Grid, cut: float) -> GridMap:
    """Bounded competitor equal to ``u`` for ``|x| >= cut``.

    Inside, the sphere distance to the puncture decreases linearly from ``pi``
    at the origin to ``scale cut``, so the funnel is cut at height
    ``lam(scale cut)`` and the disk is wrapped around the rest of the sphere.
    """
    x = grid.mesh()
    r = np.linalg.norm(x, axis=-1)
    out = fmap(x)
    inside = r < cut
    s = fmap.scale
    d = np.pi - (np.pi - s * cut) * r[inside] / cut
    safe = np.where(r[inside] > 0, r[inside], 1.0)[:, None]
    direction = np.where(r[inside][:, None] > 0, x[inside] / safe, 0.0)
    sph = np.concatenate([np.sin(d)[:, None] * direction, np.cos(d)[:, None]], axis=-1)
    out[inside] = fmap.manifold.inflate(sph)
    return GridMap(grid, out)


def truncation_battery(fmap: FunnelMap, grid: Grid, count: int = 10, largest: float = 0.45,
                       smallest: float | None = None) -> list:
    """``(height, cut radius, competitor)`` for ``count`` cut radii."""
    smallest = 8 * grid.h if smallest is None else smallest
    out = []
    for cut in np.geomspace(largest, smallest, count):
        height = float(fmap.manifold.lam_of_d(fmap.scale * cut))
        out.append((height, float(cut), funnel_truncation(fmap, grid, float(cut))))
    return out


@dataclass
class ObstructionCertificate:
    probes: np.ndarray
    radii: list
    degrees: np.ndarray          # (len(radii), len(probes))
    energies: list
    k_measure: float
    jacobian_constant: float
    witness_radius: float | None
    competitors: list            # dicts with height, cut, gap
    epsilon: float

    def to_dict(self) -> dict:
        return {"probes": self.probes.tolist(), "radii": list(self.radii),
                "degrees": self.degrees.tolist(), "energies": self.energies,
                "k_measure": self.k_measure, "jacobian_constant": self.jacobian_constant,
                "witness_radius": self.witness_radius, "competitors": self.competitors,
                "epsilon": self.epsilon, "epsilon_label": "EMPIRICAL"}


def obstruction_certificate(u: GridMap, M: TargetManifold, probes: np.ndarray, radii,
                            competitors: list | None = None, k_radius: float = 1.0) -> ObstructionCertificate:
    """Degree, energy and area evidence that bounded maps stay away from ``u``.

    ``probes`` lie in a compact set ``K`` (the cap of sphere radius
    ``k_radius`` around the basepoint) away from the image of small cubes.
    Every boundary loop ``u(dQ_r)`` must have nonzero degree around every
    probe; ``competitors`` is a list of ``(height, cut, GridMap)``.
    """
    n = u.grid.m
    chart = M.global_chart() if hasattr(M, "global_chart") else _identity_chart(M)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    degs = np.zeros((len(radii), len(probes)), dtype=int)
    for i, r in enumerate(radii):
        for j, y in enumerate(probes):
            degs[i, j] = brouwer_degree(u, y, radius=r, chart=chart)
    if np.any(degs == 0):
        raise CertificateFailed("degree vanishes", degrees=degs.tolist(), radii=list(radii))
    energies = ball_energies(u, n, radii)
    kmeas = cap_measure(M, k_radius) if isinstance(M, FunnelSphere) else 0.0
    cj = n ** (-n / 2.0)
    witness = None
    for r, e in sorted(zip(radii, energies)):
        if cj * e < kmeas:
            witness = float(r)
            break
    rows = []
    for height, cut, w in competitors or []:
        rows.append({"height": height, "cut": cut, "gap": gap_energy(w, u, n)})
    eps = min((row["gap"] for row in rows), default=float("nan"))
    return ObstructionCertificate(probes, list(radii), degs, energies, kmeas, cj, witness, rows, eps)


def _identity_chart(M: TargetManifold) -> Chart:
    if not isinstance(M, Euclidean):
        raise CertificateFailed("target has no global chart")
    return M.chart_at(np.asarray(M.basepoint, dtype=float), np.inf)


def product_obstruction(u: GridMap, competitor, m: int, slices: int = 9,
                        p: float | None = None) -> dict:
    """Gap against ``u o pi`` on ``Q^m = Q^n x Q^{m-n}`` by slice summation.

    ``competitor`` is a GridMap (independent of the extra coordinates) or a
    callable sending a point of ``Q^{m-n}`` to the slice GridMap.  Slice gaps
    are summed with the tensor trapezoidal rule; for an independent competitor
    the total is ``2^{m-n}`` times the ``n``-dimensional gap.
    """
    n = u.grid.m
    p = float(n if p is None else p)
    if m < n:
        raise ParameterOutOfRange("lift dimension below the core dimension", m=m, n=n)
    fixed = isinstance(competitor, GridMap)
    base = gap_energy(competitor, u, p) if fixed else gap_energy(competitor(np.zeros(max(m - n, 1))), u, p)
    if m == n:
        return {"gap_n": base, "gap_m": base, "factor": 1.0, "expected": 1.0, "slice_min": base}
    ticks = np.linspace(-1.0, 1.0, slices)
    w1 = np.full(slices, ticks[1] - ticks[0])
    w1[[0, -1]] *= 0.5
    total = 0.0
    smin = np.inf
    for idx in itertools.product(range(slices), repeat=m - n):
        y2 = ticks[list(idx)]
        g = base if fixed else gap_energy(competitor(y2), u, p)
        smin = min(smin, g)
        total += float(np.prod(w1[list(idx)])) * g
    return {"gap_n": base, "gap_m": total, "factor": total / base if base > 0 else float("nan"),
            "expected": float(2 ** (m - n)), "slice_min": float(smin)}
