"""Embedded target manifolds: projection, distances, tubular radii and charts.

Four families are provided.  :class:`Sphere` and :class:`Euclidean` have
closed forms.  :class:`FunnelSphere` (the round sphere inflated radially by a
factor that blows up logarithmically at a puncture) and
:class:`AlgebraicFunnel` (a quartic-type surface with a thin end) are both
hypersurfaces of revolution around the last coordinate axis and share the
generic :class:`RevolutionSurface` machinery: nearest points are found on the
meridian curve by dense sampling plus golden-section refinement, distances to
the pole are meridian arc lengths, and general geodesic distances come from a
k-nearest-neighbour graph on surface samples followed by path straightening.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .errors import (NoUniformChart, NotOnManifold, OutsideTubularNeighborhood,
                     ParameterOutOfRange)
from .grid_core import Grid, GridMap

MEMBER_TOL = 1e-6
_GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def tangent_basis(xi: np.ndarray) -> np.ndarray:
    """Rows: an orthonormal basis of the complement of the unit vector ``xi``.

    Oriented so that ``det([basis; xi]) > 0``.
    """
    xi = np.asarray(xi, dtype=float)
    nu = xi.size
    q, _ = np.linalg.qr(np.column_stack([xi, np.eye(nu)]))
    basis = q[:, 1:nu].T.copy()
    if np.dot(q[:, 0], xi) < 0:
        basis[0] *= -1
    if np.linalg.det(np.vstack([basis, xi])) < 0:
        basis[0] *= -1
    return basis


@dataclass
class Chart:
    """Bi-Lipschitz chart of a geodesic ball ``B_N(center; kappa)``.

    ``inner_radius`` is a radius with ``B(forward(center); inner_radius)``
    contained in the image of the ball; ``lipschitz`` bounds both the chart and
    its inverse.
    """

    center: np.ndarray
    kappa: float
    inner_radius: float
    lipschitz: float
    forward: Callable = field(repr=False)
    inverse: Callable = field(repr=False)

    def clamp(self, w: np.ndarray) -> np.ndarray:
        """Radial truncation into the closed ball of radius ``inner_radius`` around the center image."""
        c = self.forward(self.center[None])[0]
        d = w - c
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        scale = np.minimum(1.0, self.inner_radius / np.maximum(r, 1e-300))
        return c + d * scale


class TargetManifold:
    """Base class; subclasses fill in the geometric queries."""

    kind = "abstract"
    compact = False

    def __init__(self, n: int, nu: int, basepoint: np.ndarray):
        self.n = int(n)
        self.nu = int(nu)
        self.basepoint = np.asarray(basepoint, dtype=float)

    # membership -----------------------------------------------------
    def residual(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def check_on(self, y: np.ndarray, tol: float = MEMBER_TOL) -> None:
        r = np.abs(self.residual(np.asarray(y, dtype=float)))
        if r.size and float(np.max(r)) > tol:
            raise NotOnManifold("point off the manifold", residual=float(np.max(r)))

    # queries ---------------------------------------------------------
    def project(self, y: np.ndarray, max_dist: float | None = None) -> np.ndarray:
        raise NotImplementedError

    def geodesic_distance(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distance_to_basepoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.geodesic_distance(np.broadcast_to(self.basepoint, y.shape), y)

    def distance_to_ball(self, y: np.ndarray, radius: float) -> np.ndarray:
        """Euclidean distance from ambient points to the geodesic ball ``B_N(a; radius)``."""
        raise NotImplementedError

    def tubular_radius(self, radius: float) -> float:
        raise NotImplementedError

    def chart_at(self, xi: np.ndarray, kappa: float) -> Chart:
        raise NotImplementedError

    def geodesic_path(self, x1: np.ndarray, x2: np.ndarray, k: int = 129) -> np.ndarray:
        raise NotImplementedError

    def random_points(self, rng: np.random.Generator, count: int, max_dist: float = np.inf) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict:
        return {"kind": self.kind, "n": self.n, "params": {},
                "basepoint": self.basepoint.tolist()}


def _check_finite(y: np.ndarray) -> None:
    if not np.all(np.isfinite(y)):
        raise OutsideTubularNeighborhood("non-finite ambient point")


class Euclidean(TargetManifold):
    kind = "Euclidean"

    def __init__(self, n: int, basepoint=None):
        super().__init__(n, n, np.zeros(n) if basepoint is None else basepoint)

    def residual(self, y):
        return np.zeros(np.asarray(y).shape[:-1])

    def project(self, y, max_dist=None):
        y = np.asarray(y, dtype=float)
        _check_finite(y)
        return y.copy()

    def geodesic_distance(self, x1, x2):
        return np.linalg.norm(np.asarray(x1, float) - np.asarray(x2, float), axis=-1)

    def distance_to_ball(self, y, radius):
        return np.maximum(0.0, np.linalg.norm(np.asarray(y) - self.basepoint, axis=-1) - radius)

    def tubular_radius(self, radius):
        return float("inf")

    def chart_at(self, xi, kappa):
        xi = np.asarray(xi, dtype=float)
        ident = lambda y: np.asarray(y, dtype=float).copy()
        return Chart(xi, float(kappa), float(kappa), 1.0, ident, ident)

    def geodesic_path(self, x1, x2, k=129):
        s = np.linspace(0.0, 1.0, k)[:, None]
        return (1 - s) * np.asarray(x1, float) + s * np.asarray(x2, float)

    def random_points(self, rng, count, max_dist=1.0):
        d = rng.normal(size=(count, self.n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return self.basepoint + d * (max_dist * rng.random((count, 1)) ** (1 / self.n))


class Sphere(TargetManifold):
    """Unit sphere ``S^n`` in ``R^{n+1}``; basepoint defaults to the north pole."""

    kind = "Sphere"
    compact = True
    reach = 1.0

    def __init__(self, n: int, basepoint=None):
        a = np.eye(n + 1)[n] if basepoint is None else np.asarray(basepoint, dtype=float)
        super().__init__(n, n + 1, a / np.linalg.norm(a))

    def residual(self, y):
        return np.linalg.norm(np.asarray(y, dtype=float), axis=-1) - 1.0

    def project(self, y, max_dist=None):
        y = np.asarray(y, dtype=float)
        _check_finite(y)
        r = np.linalg.norm(y, axis=-1, keepdims=True)
        if r.size and float(r.min()) < 1e-12:
            raise OutsideTubularNeighborhood("projection at the center of the sphere",
                                             min_norm=float(r.min()))
        if max_dist is not None and r.size and float(np.max(np.abs(r - 1))) > max_dist:
            raise OutsideTubularNeighborhood("point farther than the allowed tube width",
                                             distance=float(np.max(np.abs(r - 1))), width=max_dist)
        return y / r

    def geodesic_distance(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        self.check_on(x1)
        self.check_on(x2)
        # atan2 form is accurate for both tiny and near-antipodal separations
        cr = np.linalg.norm(np.cross(x1, x2), axis=-1) if self.nu == 3 else None
        dot = np.sum(x1 * x2, axis=-1)
        if cr is None:
            cr = np.sqrt(np.maximum(0.0, np.sum(x1 * x1, -1) * np.sum(x2 * x2, -1) - dot ** 2))
        return np.arctan2(cr, dot)

    def distance_to_ball(self, y, radius):
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1)
        if radius >= np.pi:
            return np.abs(r - 1.0)
        cos_t = np.sum(y * self.basepoint, axis=-1) / np.maximum(r, 1e-300)
        theta = np.arccos(np.clip(cos_t, -1.0, 1.0))
        outside = theta > radius
        d_in = np.abs(r - 1.0)
        d_out = np.sqrt(np.maximum(0.0, r ** 2 + 1 - 2 * r * np.cos(theta - radius)))
        return np.where(outside, d_out, d_in)

    def tubular_radius(self, radius):
        return 0.5

    def chart_at(self, xi, kappa):
        """Stereographic projection from ``-xi`` onto the tangent plane at ``xi``."""
        xi = np.asarray(xi, dtype=float)
        self.check_on(xi[None])
        xi = xi / np.linalg.norm(xi)
        if not 0 < kappa < 2.5:
            raise NoUniformChart("stereographic chart radius must lie in (0, 2.5)", kappa=kappa)
        basis = tangent_basis(xi)

        def forward(y):
            y = np.asarray(y, dtype=float)
            return 2.0 * (y @ basis.T) / (1.0 + y @ xi)[..., None]

        def inverse(w):
            w = np.asarray(w, dtype=float)
            s = np.sum(w * w, axis=-1, keepdims=True)
            return ((4.0 - s) * xi + 4.0 * (w @ basis)) / (4.0 + s)

        inner = 0.999 * 2.0 * np.tan(kappa / 2.0)
        lip = 1.0 / np.cos(kappa / 2.0) ** 2 + 1.0
        return Chart(xi, float(kappa), float(inner), float(lip), forward, inverse)

    def geodesic_path(self, x1, x2, k=129):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        theta = float(self.geodesic_distance(x1, x2))
        s = np.linspace(0.0, 1.0, k)[:, None]
        if theta < 1e-12:
            return np.broadcast_to(x1, (k, self.nu)).copy()
        if np.pi - theta < 1e-9:
            # antipodes: pick a deterministic great circle
            perp = tangent_basis(x1)[0]
            return np.cos(np.pi * s) * x1 + np.sin(np.pi * s) * perp
        return (np.sin((1 - s) * theta) * x1 + np.sin(s * theta) * x2) / np.sin(theta)

    def random_points(self, rng, count, max_dist=np.pi):
        pts = rng.normal(size=(count * 4 + 16, self.nu))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        if np.isfinite(max_dist) and max_dist < np.pi:
            keep = np.arccos(np.clip(pts @ self.basepoint, -1, 1)) <= max_dist
            pts = pts[keep]
            while len(pts) < count:
                extra = self.random_points(rng, count, max_dist)
                pts = np.vstack([pts, extra])
        return pts[:count]

    def generic(self) -> "RevolutionSurface":
        """The same sphere handled by the generic meridian solver (cross-validation)."""
        return _MeridianSphere(self.n)


class RevolutionSurface(TargetManifold):
    """Hypersurface of revolution around the last axis.

    Subclasses provide ``meridian(q) -> (rho, z)`` for ``q >= 0`` where ``q = 0``
    is the pole at the basepoint and ``rho`` is the distance to the axis.
    """

    q_max = 50.0

    def __init__(self, n: int):
        super().__init__(n, n + 1, np.zeros(n + 1))
        rho0, z0 = self.meridian(np.array([0.0]))
        self.basepoint = np.zeros(n + 1)
        self.basepoint[-1] = z0[0]
        self._samples = self.sample_parameters()
        self._sr, self._sz = self.meridian(self._samples)
        fine = self.arc_parameters()
        fr, fz = self.meridian(fine)
        seg = np.hypot(np.diff(fr), np.diff(fz))
        self._arc_q = fine
        self._arc_s = np.concatenate([[0.0], np.cumsum(seg)])
        self._graphs: dict = {}

    # meridian description -------------------------------------------
    def meridian(self, q: np.ndarray):
        raise NotImplementedError

    def sample_parameters(self) -> np.ndarray:
        return np.concatenate([np.linspace(0.0, 10.0, 4001)[:-1],
                               np.geomspace(10.0, self.q_max, 2000)])

    def arc_parameters(self) -> np.ndarray:
        return np.concatenate([np.linspace(0.0, 10.0, 200001)[:-1],
                               np.geomspace(10.0, self.q_max, 20000)])

    def arc_length(self, q: np.ndarray) -> np.ndarray:
        return np.interp(q, self._arc_q, self._arc_s)

    def param_at_arc(self, s: np.ndarray) -> np.ndarray:
        return np.interp(s, self._arc_s, self._arc_q)

    def meridian_derivatives(self, q: np.ndarray, dq: float = 1e-5):
        q = np.asarray(q, dtype=float)
        qa = np.maximum(q - dq, 0.0)
        qb = q + dq
        ra, za = self.meridian(qa)
        rb, zb = self.meridian(qb)
        r0, z0 = self.meridian(q)
        w = qb - qa
        r1 = (rb - ra) / w
        z1 = (zb - za) / w
        r2 = (rb - 2 * r0 + ra) / dq ** 2
        z2 = (zb - 2 * z0 + za) / dq ** 2
        return r1, z1, r2, z2

    # coordinates ------------------------------------------------------
    def _split(self, y: np.ndarray):
        yp = y[..., :-1]
        rho = np.linalg.norm(yp, axis=-1)
        z = y[..., -1]
        return yp, rho, z

    def _directions(self, yp: np.ndarray, rho: np.ndarray) -> np.ndarray:
        e = np.zeros(yp.shape)
        e[..., 0] = 1.0
        safe = rho > 1e-300
        return np.where(safe[..., None], yp / np.where(safe, rho, 1.0)[..., None], e)

    def point(self, q: np.ndarray, omega: np.ndarray) -> np.ndarray:
        r, z = self.meridian(np.asarray(q, dtype=float))
        return np.concatenate([r[..., None] * omega, z[..., None]], axis=-1)

    def param_of(self, y: np.ndarray) -> np.ndarray:
        """Meridian parameter of on-surface points (nearest meridian sample, refined)."""
        return self._nearest_param(*self._split(np.asarray(y, dtype=float))[1:])

    def _meridian_tree(self, qmin: float, qmax: float | None):
        key = (qmin, qmax)
        cache = self.__dict__.setdefault("_trees", {})
        if key not in cache:
            sel = self._samples >= qmin
            if qmax is not None:
                sel &= self._samples <= qmax
            idx = np.flatnonzero(sel)
            if qmax is not None and (idx.size == 0 or self._samples[idx[-1]] < qmax):
                qs = np.concatenate([self._samples[idx], [qmax]])
            else:
                qs = self._samples[idx]
            r, z = self.meridian(qs)
            cache[key] = (qs, cKDTree(np.column_stack([r, z])))
        return cache[key]

    def _nearest_param(self, rho: np.ndarray, z: np.ndarray,
                       qmin: float = 0.0, qmax: float | None = None) -> np.ndarray:
        """Meridian parameter of the point closest to ``(rho, z)`` in the half-plane."""
        rho = np.asarray(rho, dtype=float)
        z = np.asarray(z, dtype=float)
        shape = np.broadcast(rho, z).shape
        rho = np.broadcast_to(rho, shape).ravel()
        z = np.broadcast_to(z, shape).ravel()
        qs, tree = self._meridian_tree(qmin, qmax)
        _, k = tree.query(np.column_stack([rho, z]))
        lo = qs[np.maximum(k - 1, 0)]
        hi = qs[np.minimum(k + 1, qs.size - 1)]

        def f(q):
            r, zz = self.meridian(q)
            return (r - rho) ** 2 + (zz - z) ** 2

        a, b = lo.copy(), hi.copy()
        for _ in range(60):
            c = b - _GOLDEN * (b - a)
            d = a + _GOLDEN * (b - a)
            left = f(c) < f(d)
            b = np.where(left, d, b)
            a = np.where(left, a, c)
        q = 0.5 * (a + b)
        cand = np.stack([q, lo, hi, qs[k]])
        vals = np.stack([f(x) for x in cand])
        best = np.argmin(vals, axis=0)
        return np.take_along_axis(cand, best[None], 0)[0].reshape(shape)

    # TargetManifold interface -------------------------------------------
    def project(self, y, max_dist=None):
        y = np.asarray(y, dtype=float)
        _check_finite(y)
        yp, rho, z = self._split(y)
        q = self._nearest_param(rho, z)
        omega = self._directions(yp, rho)
        out = self.point(q, omega)
        if max_dist is not None:
            dist = np.linalg.norm(out - y, axis=-1)
            if dist.size and float(dist.max()) > max_dist:
                raise OutsideTubularNeighborhood("point farther than the allowed tube width",
                                                 distance=float(dist.max()), width=max_dist)
        return out

    def distance_to_basepoint(self, y):
        y = np.asarray(y, dtype=float)
        self.check_on(y)
        return self.arc_length(self.param_of(y))

    def distance_to_ball(self, y, radius):
        y = np.asarray(y, dtype=float)
        yp, rho, z = self._split(y)
        qmax = float(self.param_at_arc(radius))
        q = self._nearest_param(rho, z, 0.0, qmax)
        r, zz = self.meridian(q)
        return np.hypot(r - rho, zz - z)

    def principal_radii(self, q: np.ndarray):
        r0, _ = self.meridian(q)
        r1, z1, r2, z2 = self.meridian_derivatives(q)
        speed = np.hypot(r1, z1)
        k1 = np.abs(r1 * z2 - z1 * r2) / np.maximum(speed ** 3, 1e-300)
        k2 = np.abs(z1) / np.maximum(r0 * speed, 1e-300)
        with np.errstate(divide="ignore"):
            return 1.0 / k1, 1.0 / k2

    def tubular_radius(self, radius):
        """Half the smallest principal radius of curvature over the ball (conservative)."""
        qmax = float(self.param_at_arc(radius))
        q = np.linspace(1e-3, max(qmax, 2e-3), 4000)
        r1, r2 = self.principal_radii(q)
        return float(0.5 * min(1.0, np.min(r1), np.min(r2)))

    def residual(self, y):
        y = np.asarray(y, dtype=float)
        p = self.project(y)
        return np.linalg.norm(p - y, axis=-1)

    # geodesics -------------------------------------------------------------
    def _reduce(self, x1: np.ndarray, x2: np.ndarray):
        """Coordinates in the 3-dimensional slice spanned by the axis and both directions."""
        yp1, r1, _ = self._split(x1)
        yp2, r2, _ = self._split(x2)
        w1 = self._directions(yp1, r1)
        w2 = self._directions(yp2, r2)
        e1 = w1
        v = w2 - np.dot(w2, e1) * e1
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            if self.n >= 2:
                v = tangent_basis(np.concatenate([e1, [0.0]]))[0][:-1]
                v -= np.dot(v, e1) * e1
                v /= np.linalg.norm(v)
            else:
                v = np.zeros_like(e1)
        else:
            v = v / nv
        basis = np.vstack([e1, v]) if self.n >= 2 else e1[None]

        def down(y):
            return np.concatenate([y[..., :-1] @ basis.T, y[..., -1:]], axis=-1)

        def up(w):
            return np.concatenate([w[..., :-1] @ basis, w[..., -1:]], axis=-1)

        return down, up

    def _graph(self, qmax: float, spacing: float):
        key = (round(qmax, 6), spacing)
        if key in self._graphs:
            return self._graphs[key]
        s_max = float(self.arc_length(qmax))
        s_vals = np.arange(0.0, s_max + spacing, spacing)
        q_vals = self.param_at_arc(s_vals)
        rr, zz = self.meridian(q_vals)
        pts = [np.array([[0.0, 0.0, zz[0]]])]
        for r, z in zip(rr[1:], zz[1:]):
            count = max(6, int(np.ceil(2 * np.pi * r / spacing)))
            phi = np.arange(count) * 2 * np.pi / count
            pts.append(np.column_stack([r * np.cos(phi), r * np.sin(phi), np.full(count, z)]))
        pts = np.vstack(pts)
        tree = cKDTree(pts)
        self._graphs[key] = (pts, tree)
        return pts, tree

    def _graph_distance_3d(self, a: np.ndarray, b: np.ndarray, spacing: float):
        """Shortest path between two points of the 2-dimensional profile surface in R^3."""
        qa = float(self._nearest_param(np.hypot(a[0], a[1]), a[2]))
        qb = float(self._nearest_param(np.hypot(b[0], b[1]), b[2]))
        qmax = max(qa, qb) * 1.25 + 0.5
        pts, tree = self._graph(qmax, spacing)
        allp = np.vstack([pts, a[None], b[None]])
        k = 16
        tree2 = cKDTree(allp)
        dist, nb = tree2.query(allp, k=k + 1)
        rows = np.repeat(np.arange(len(allp)), k)
        mat = sparse.csr_matrix((dist[:, 1:].ravel(), (rows, nb[:, 1:].ravel())),
                                shape=(len(allp), len(allp)))
        src = len(allp) - 2
        dmat, pred = dijkstra(mat, directed=False, indices=src, return_predecessors=True)
        path = [len(allp) - 1]
        while path[-1] != src and path[-1] >= 0:
            path.append(pred[path[-1]])
        path = allp[np.array(path[::-1])]
        return float(dmat[len(allp) - 1]), path

    def _straighten(self, path: np.ndarray, iters: int = 400) -> np.ndarray:
        profile = self._profile()
        p = _resample(path, max(33, len(path)))
        for _ in range(iters):
            mid = 0.5 * (p[:-2] + p[2:])
            p[1:-1] = profile.project(0.5 * p[1:-1] + 0.5 * mid)
        return p

    def _profile(self) -> "RevolutionSurface":
        if self.n == 2:
            return self
        if not hasattr(self, "_profile_cache"):
            self._profile_cache = self.with_dim(2)
        return self._profile_cache

    def with_dim(self, n: int) -> "RevolutionSurface":
        raise NotImplementedError

    def geodesic_path(self, x1, x2, k=129, spacing: float = 0.02):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if np.linalg.norm(x1 - x2) < 1e-14:
            return np.broadcast_to(x1, (k, self.nu)).copy()
        if self.n == 1:
            raise NotImplementedError("curves of revolution are not supported")
        down, up = self._reduce(x1, x2)
        a, b = down(x1), down(x2)
        _, path = self._graph_distance_3d(a, b, spacing)
        path = self._straighten(path)
        return up(_resample(path, k))

    def geodesic_distance(self, x1, x2, spacing: float = 0.02):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        self.check_on(x1)
        self.check_on(x2)
        b1, b2 = np.broadcast_arrays(x1, x2)
        flat1 = b1.reshape(-1, self.nu)
        flat2 = b2.reshape(-1, self.nu)
        out = np.empty(len(flat1))
        for i, (p1, p2) in enumerate(zip(flat1, flat2)):
            if np.linalg.norm(p1 - self.basepoint) < 1e-12:
                out[i] = float(self.distance_to_basepoint(p2[None])[0])
            elif np.linalg.norm(p2 - self.basepoint) < 1e-12:
                out[i] = float(self.distance_to_basepoint(p1[None])[0])
            elif np.linalg.norm(p1 - p2) < 1e-14:
                out[i] = 0.0
            else:
                path = self.geodesic_path(p1, p2, 257, spacing)
                out[i] = float(np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))
        return out.reshape(b1.shape[:-1])

    def random_points(self, rng, count, max_dist=3.0):
        s = rng.random(count) * max_dist
        q = self.param_at_arc(s)
        d = rng.normal(size=(count, self.n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return self.point(q, d)


def _resample(path: np.ndarray, k: int) -> np.ndarray:
    """Constant-speed resampling of a polyline to ``k`` points."""
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        return np.broadcast_to(path[0], (k, path.shape[1])).copy()
    t = np.linspace(0.0, s[-1], k)
    return np.column_stack([np.interp(t, s, path[:, c]) for c in range(path.shape[1])])


class _MeridianSphere(RevolutionSurface):
    kind = "Sphere"
    compact = True

    def __init__(self, n: int):
        self.q_max = np.pi
        super().__init__(n)

    def sample_parameters(self):
        return np.linspace(0.0, np.pi, 6001)

    def arc_parameters(self):
        return np.linspace(0.0, np.pi, 200001)

    def meridian(self, q):
        q = np.clip(np.asarray(q, dtype=float), 0.0, np.pi)
        return np.sin(q), np.cos(q)

    def with_dim(self, n):
        return _MeridianSphere(n)


class FunnelSphere(RevolutionSurface):
    """Sphere inflated radially by ``lam(d)`` where ``d`` is the spherical distance to a puncture.

    ``lam = 1 + chi(d) ((log 1/d)^alpha - 1)`` with ``chi`` a smooth step equal
    to 1 for ``d <= 0.2`` and 0 for ``d >= 1/e``, so ``lam >= 1`` everywhere and
    ``lam = (log 1/d)^alpha`` near the puncture.  The puncture is the north
    pole, the basepoint is the south pole where ``lam = 1``.
    """

    kind = "FunnelSphere"
    q_max = 2000.0
    d_inner = 0.2
    d_outer = float(np.exp(-1.0))

    def __init__(self, n: int, alpha: float, chart_cutoff: float = 1.6):
        if not 0 <= alpha:
            raise ParameterOutOfRange("alpha must be nonnegative", alpha=alpha)
        self.alpha = float(alpha)
        self.chart_cutoff = float(chart_cutoff)
        self._q_join = np.pi - self.d_inner
        super().__init__(n)
        self.puncture = np.eye(n + 1)[n]

    def with_dim(self, n):
        return FunnelSphere(n, self.alpha, self.chart_cutoff)

    def to_config(self):
        return {"kind": self.kind, "n": self.n, "params": {"alpha": self.alpha},
                "basepoint": self.basepoint.tolist()}

    # radial profile ------------------------------------------------------
    def log_inv(self, q):
        """``log(1/d)`` as a function of the meridian parameter (no underflow)."""
        q = np.asarray(q, dtype=float)
        near = q > self._q_join
        d_far = np.maximum(np.pi - np.minimum(q, self._q_join), 1e-300)
        return np.where(near, np.log(1.0 / self.d_inner) + (q - self._q_join) / self.d_inner, np.log(1.0 / d_far))

    def sphere_distance(self, q):
        q = np.asarray(q, dtype=float)
        return np.where(q > self._q_join, self.d_inner * np.exp(-np.maximum(q - self._q_join, 0.0) / self.d_inner),
                        np.pi - np.minimum(q, self._q_join))

    def lam_of_d(self, d):
        d = np.asarray(d, dtype=float)
        chi = 1.0 - smooth_step((d - self.d_inner) / (self.d_outer - self.d_inner))
        L = np.maximum(np.log(1.0 / np.maximum(d, 1e-300)), 0.0) ** self.alpha
        return 1.0 + chi * np.maximum(L - 1.0, 0.0)

    def lam_of_q(self, q):
        q = np.asarray(q, dtype=float)
        d = self.sphere_distance(q)
        far = self.lam_of_d(d)
        L = np.maximum(self.log_inv(q), 0.0) ** self.alpha
        return np.where(d <= self.d_inner, L, far)

    def meridian(self, q):
        q = np.asarray(q, dtype=float)
        d = self.sphere_distance(q)
        lam = self.lam_of_q(q)
        return lam * np.sin(d), lam * np.cos(d)

    def sample_parameters(self):
        return np.concatenate([np.linspace(0.0, 12.0, 6001)[:-1], np.geomspace(12.0, self.q_max, 3000)])

    def arc_parameters(self):
        return np.concatenate([np.linspace(0.0, 12.0, 240001)[:-1], np.geomspace(12.0, self.q_max, 40000)])

    def lam_at(self, y: np.ndarray) -> np.ndarray:
        """Inflation factor at the surface point ``y`` (its Euclidean norm)."""
        return np.linalg.norm(np.asarray(y, dtype=float), axis=-1)

    def inflate(self, x: np.ndarray) -> np.ndarray:
        """The embedding ``x -> lam(x) x`` from the punctured unit sphere."""
        x = np.asarray(x, dtype=float)
        d = np.arctan2(np.linalg.norm(x[..., :-1], axis=-1), x[..., -1])
        return self.lam_of_d(d)[..., None] * x

    def residual(self, y):
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1)
        d = np.arctan2(np.linalg.norm(y[..., :-1], axis=-1), y[..., -1])
        out = r - self.lam_of_d(d)
        deep = d < 1e-200
        if np.any(deep):
            out = np.where(deep, np.linalg.norm(self.project(y) - y, axis=-1), out)
        return out

    # charts ------------------------------------------------------------
    def chart_at(self, xi, kappa):
        """Radial normalization to the unit sphere followed by a stereographic chart."""
        xi = np.asarray(xi, dtype=float)
        self.check_on(xi[None])
        lam_xi = float(np.linalg.norm(xi))
        if lam_xi > self.chart_cutoff:
            raise NoUniformChart("chart center lies in the non-uniform end",
                                 lam=lam_xi, cutoff=self.chart_cutoff)
        sph = Sphere(self.n)
        s_xi = xi / lam_xi
        d_xi = float(np.arccos(np.clip(s_xi @ self.puncture, -1, 1)))
        # sphere radius that covers the geodesic ball; the inflation never shrinks lengths below 0.85
        d_lo = max(d_xi - kappa / 0.85, 1e-6)
        dd = np.linspace(d_lo, min(np.pi, d_xi + kappa / 0.85), 2001)
        lam = self.lam_of_d(dd)
        dlam = np.gradient(lam, dd)
        lam_min = float(np.min(lam))
        stretch_max = float(np.max(np.hypot(lam, dlam)))
        if float(np.max(lam)) > 1.5 * self.chart_cutoff:
            raise NoUniformChart("chart ball reaches the non-uniform end", lam=float(np.max(lam)))
        kappa_s = kappa / lam_min
        if kappa_s >= 2.5:
            raise NoUniformChart("chart radius too large", kappa=kappa)
        base = sph.chart_at(s_xi, kappa_s)

        def forward(y):
            y = np.asarray(y, dtype=float)
            return base.forward(y / np.linalg.norm(y, axis=-1, keepdims=True))

        def inverse(w):
            return self.inflate(base.inverse(w))

        inner = 0.999 * 2.0 * np.tan(kappa / stretch_max / 2.0)
        lip = (1.0 / np.cos(kappa_s / 2.0) ** 2 + 1.0) * max(stretch_max, 1.0 / lam_min) * 1.25
        return Chart(xi, float(kappa), float(inner), float(lip), forward, inverse)

    def global_chart(self) -> Chart:
        """Stereographic projection from the puncture, after radial normalization.

        A diffeomorphism of the whole funnel onto ``R^n``.  A counterclockwise
        boundary loop of the exponential parametrization around the puncture
        winds once positively around the images of points far from the puncture.
        """
        a = self.puncture

        def forward(y):
            y = np.asarray(y, dtype=float)
            x = y / np.linalg.norm(y, axis=-1, keepdims=True)
            return x[..., :-1] / np.maximum(1.0 - x[..., -1:], 1e-300)

        def inverse(w):
            w = np.asarray(w, dtype=float)
            s = np.sum(w * w, axis=-1, keepdims=True)
            x = np.concatenate([2 * w, s - 1.0], axis=-1) / (s + 1.0)
            return self.inflate(x)

        return Chart(-a * 1.0, float("inf"), float("inf"), float("inf"), forward, inverse)


class AlgebraicFunnel(RevolutionSurface):
    """Surface ``|y'|^2 (1 + t)^(2 beta - 1) = t`` with ``t = y_{n+1} >= 0``.

    Parametrized by ``s >= 0``: ``|y'| = s (1 + s^2)^(1/2 - beta)``, ``t = s^2``.
    The basepoint is the origin; the surface thins out as ``t`` grows.
    """

    kind = "AlgebraicFunnel"
    q_max = 1000.0

    def __init__(self, n: int, beta: float, chart_fraction: float = 0.5):
        if beta <= 1:
            raise ParameterOutOfRange("beta must exceed 1", beta=beta)
        self.beta = float(beta)
        self.t_fold = 1.0 / (2.0 * self.beta - 2.0)
        self.chart_fraction = chart_fraction
        super().__init__(n)

    def with_dim(self, n):
        return AlgebraicFunnel(n, self.beta, self.chart_fraction)

    def to_config(self):
        return {"kind": self.kind, "n": self.n, "params": {"beta": self.beta},
                "basepoint": self.basepoint.tolist()}

    def meridian(self, q):
        s = np.asarray(q, dtype=float)
        return s * (1.0 + s * s) ** (0.5 - self.beta), s * s

    def residual(self, y):
        y = np.asarray(y, dtype=float)
        r2 = np.sum(y[..., :-1] ** 2, axis=-1)
        t = y[..., -1]
        return r2 * (1.0 + np.abs(t)) ** (2 * self.beta - 1) - t

    def chart_at(self, xi, kappa):
        """Graph chart over the first ``n`` coordinates, valid below the fold."""
        xi = np.asarray(xi, dtype=float)
        self.check_on(xi[None])
        t_lim = self.chart_fraction * self.t_fold
        q_lim = float(np.sqrt(t_lim))
        if xi[-1] > t_lim:
            raise NoUniformChart("chart center beyond the graph region", t=float(xi[-1]), limit=t_lim)
        q_xi = float(np.sqrt(max(xi[-1], 0.0)))
        if float(self.arc_length(q_xi)) + kappa > float(self.arc_length(np.sqrt(0.9 * self.t_fold))):
            raise NoUniformChart("chart ball crosses the fold", kappa=kappa)
        qq = np.linspace(0.0, np.sqrt(0.9 * self.t_fold), 4001)
        rr, tt = self.meridian(qq)

        def forward(y):
            return np.asarray(y, dtype=float)[..., :-1] - xi[:-1]

        def inverse(w):
            w = np.asarray(w, dtype=float)
            yp = w + xi[:-1]
            r = np.linalg.norm(yp, axis=-1)
            t = np.interp(r, rr, tt)
            return np.concatenate([yp, t[..., None]], axis=-1)

        r1, z1, _, _ = self.meridian_derivatives(qq[1:])
        slope = float(np.max(np.abs(z1 / r1)))
        r_xi = float(np.linalg.norm(xi[:-1]))
        q_out = float(self.param_at_arc(float(self.arc_length(q_xi)) + kappa))
        inner = 0.999 * max(0.0, min(kappa / np.hypot(1.0, slope),
                                     float(self.meridian(np.array([min(q_out, qq[-1])]))[0][0]) - r_xi))
        lip = float(np.hypot(1.0, slope)) * 1.05
        del q_lim
        return Chart(xi, float(kappa), float(inner), lip, forward, inverse)


def manifold_from_config(cfg: dict) -> TargetManifold:
    kind = cfg.get("kind", "Sphere")
    n = int(cfg.get("n", 2))
    params = cfg.get("params", {}) or {}
    if kind == "Sphere":
        return Sphere(n, cfg.get("basepoint"))
    if kind == "Euclidean":
        return Euclidean(n, cfg.get("basepoint"))
    if kind == "FunnelSphere":
        return FunnelSphere(n, float(params.get("alpha", 0.4)))
    if kind == "AlgebraicFunnel":
        return AlgebraicFunnel(n, float(params.get("beta", 3.0)))
    raise ParameterOutOfRange(f"unknown manifold kind {kind!r}", kind=kind)


# ---------------------------------------------------------------------------
# counterexample maps

def check_funnel_alpha(n: int, alpha: float) -> None:
    if not 0 < alpha < (n - 1) / n:
        raise ParameterOutOfRange(f"alpha must lie in (0, {(n - 1) / n})", alpha=alpha, n=n)


@dataclass
class FunnelMap:
    """Sampler for ``u = F o f`` with ``f`` the exponential parametrization around the puncture.

    ``f(x)`` is the point at spherical distance ``scale |x|`` from the puncture
    in direction ``x / |x|``; the singular node at the origin copies the value
    of its nearest neighbour.
    """

    manifold: FunnelSphere
    scale: float = 1.0
    diffeo: Callable | None = None

    def sphere_point(self, x: np.ndarray) -> np.ndarray:
        if self.diffeo is not None:
            return self.diffeo(x)
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        safe = np.where(r > 0, r, 1.0)
        direction = np.where(r > 0, x / safe, 0.0)
        ang = self.scale * r
        return np.concatenate([np.sin(ang) * direction, np.cos(ang)], axis=-1)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = self.sphere_point(x)
        r = np.linalg.norm(x, axis=-1)
        d = np.maximum(self.scale * r, 1e-300)
        lam = self.manifold.lam_of_d(d)
        return lam[..., None] * s

    def sample(self, grid: Grid) -> GridMap:
        vals = self(grid.mesh())
        origin = tuple([(grid.res - 1) // 2] * grid.m)
        if grid.res % 2 == 1:
            nb = list(origin)
            nb[0] += 1
            vals[origin] = vals[tuple(nb)]
        return GridMap(grid, vals)


def embed_funnel(n: int, alpha: float, f: Callable | None = None, scale: float = 1.0) -> FunnelMap:
    check_funnel_alpha(n, alpha)
    if scale * np.sqrt(n) >= np.pi:
        raise ParameterOutOfRange("scale too large for an injective parametrization", scale=scale)
    return FunnelMap(FunnelSphere(n, alpha), scale, f)


@dataclass
class AlgebraicMap:
    manifold: AlgebraicFunnel
    exponent: float
    inner: float = 1.0 / 3.0
    outer: float = 2.0 / 3.0

    def weight(self, r: np.ndarray) -> np.ndarray:
        """``(chi(r) |log r|^(exponent/2))^2`` with a smooth cutoff between inner and outer."""
        r = np.asarray(r, dtype=float)
        chi = 1.0 - smooth_step((r - self.inner) / (self.outer - self.inner))
        with np.errstate(divide="ignore"):
            root = chi * np.abs(np.log(np.maximum(r, 1e-300))) ** (self.exponent / 2.0)
        return root ** 2

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        direction = np.where((r > 0)[..., None], x / safe[..., None], 0.0)
        w = self.weight(np.maximum(r, 1e-300))
        radial = np.sqrt(w) / (1.0 + w) ** (self.manifold.beta - 0.5)
        return np.concatenate([radial[..., None] * direction, w[..., None]], axis=-1)

    def sample(self, grid: Grid) -> GridMap:
        vals = self(grid.mesh())
        if grid.res % 2 == 1:
            origin = tuple([(grid.res - 1) // 2] * grid.m)
            nb = list(origin)
            nb[0] += 1
            vals[origin] = vals[tuple(nb)]
        return GridMap(grid, vals)


def bad_map_algebraic(n: int, beta: float, gamma: float) -> AlgebraicMap:
    if n < 2 or beta <= n / (n - 1):
        raise ParameterOutOfRange(f"beta must exceed {n / max(n - 1, 1)}", beta=beta, n=n)
    lo, hi = 1.0 / (n * (beta - 1.0)), (n - 1.0) / n
    if not lo < gamma < hi:
        raise ParameterOutOfRange(f"exponent must lie in ({lo}, {hi})", gamma=gamma)
    return AlgebraicMap(AlgebraicFunnel(n, beta), gamma)
