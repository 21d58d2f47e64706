"""Zero-degree homogenization on cube faces and the skeleton extension.

An ``i``-face with known boundary values is filled by
``v(x) = u_b(a + eta (x - a) / |x - a|_inf)``: every max-norm ray from the
face center carries the boundary value it hits.  ``extend_skeleton`` repeats
this dimension by dimension, from the ``ell``-faces of the bad cubes up to the
bad cubes themselves, keeping faces shared with good cubes untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .cubication import Cubication, Face, GoodBadPartition
from .errors import HomogenizationIllposed, TraceIncompatible
from .grid_core import Grid, GridMap, cell_energy

TRACE_TOL = 1e-8


def face_grid(cub: Cubication, face: Face) -> Grid:
    """Intrinsic ``i``-dimensional grid of a face (inradius ``eta``)."""
    return Grid(max(face.dim, 1), cub.eta, 2 * cub.k + 1)


def face_values(values: np.ndarray, cub: Cubication, face: Face) -> np.ndarray:
    """Node block of a face with normal axes squeezed; axes follow ``face.axes``."""
    block = values[cub.node_slices(face)]
    normal = tuple(a for a in range(cub.m) if a not in face.axes)
    return block.reshape(tuple(block.shape[a] for a in face.axes) + block.shape[cub.m:]) if normal else block


def write_face(values: np.ndarray, cub: Cubication, face: Face, block: np.ndarray) -> None:
    target = values[cub.node_slices(face)]
    values[cub.node_slices(face)] = block.reshape(target.shape)


def _sub_index(cub: Cubication, face: Face, sub: Face) -> tuple:
    """Index into ``face``'s block selecting the nodes of its subface ``sub``."""
    idx = []
    for a in face.axes:
        if a in sub.axes:
            idx.append(slice(None))
        else:
            idx.append(0 if sub.corner[a] == face.corner[a] else 2 * cub.k)
    return tuple(idx)


@dataclass
class SkeletonMap:
    """Per-face node values on a set of faces of a cubication."""

    cub: Cubication
    blocks: dict = field(default_factory=dict)   # Face -> array (2k+1,)*i + (nu,)

    @classmethod
    def from_gridmap(cls, u: GridMap, cub: Cubication, faces) -> "SkeletonMap":
        return cls(cub, {f: face_values(u.values, cub, f).copy() for f in faces})

    @property
    def faces(self) -> list:
        return sorted(self.blocks)

    def trace_mismatch(self) -> float:
        """Largest disagreement between two faces on a shared subface."""
        worst = 0.0
        by_sub: dict = {}
        for f, b in self.blocks.items():
            for i in range(f.dim):
                for s in self.cub.subfaces(f, i):
                    by_sub.setdefault(s, []).append(b[_sub_index(self.cub, f, s)])
        for s, vals in by_sub.items():
            if s in self.blocks:
                vals = vals + [self.blocks[s]]
            for v in vals[1:]:
                worst = max(worst, float(np.max(np.abs(v - vals[0]))))
        return worst

    def check_traces(self, tol: float = TRACE_TOL) -> None:
        bad = self.trace_mismatch()
        if bad > tol:
            raise TraceIncompatible("face restrictions disagree on a shared face", mismatch=bad, tol=tol)

    def to_values(self, base: np.ndarray) -> np.ndarray:
        out = base.copy()
        for f in sorted(self.blocks, key=lambda g: g.dim, reverse=True):
            write_face(out, self.cub, f, self.blocks[f])
        return out

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        manifest = {"eta": self.cub.eta, "k": self.cub.k, "faces": [],
                    "trace_mismatch": self.trace_mismatch()}
        for n, f in enumerate(self.faces):
            name = f"face{n:05d}.bin"
            self.blocks[f].astype("<f8").tofile(d / name)
            manifest["faces"].append({"id": f.key(), "file": name, "shape": list(self.blocks[f].shape)})
        (d / "manifest.json").write_text(json.dumps(manifest, indent=1))


def face_energy(block: np.ndarray, h: float, p: float) -> float:
    """Face-intrinsic ``int |D u|^p`` of a node block (zero for vertices)."""
    i = block.ndim - 1
    if i == 0:
        return 0.0
    g = Grid(i, 0.5 * h * (block.shape[0] - 1), block.shape[0])
    return float(np.sum(cell_energy(GridMap(g, block), p)))


def skeleton_seminorm(us: SkeletonMap, p: float) -> float:
    """``(sum over faces of the face seminorm^p)^(1/p)``; traces must agree."""
    us.check_traces()
    h = us.cub.grid.h
    return sum(face_energy(b, h, p) for b in us.blocks.values()) ** (1.0 / p)


def _shell_block(us: SkeletonMap, face: Face) -> np.ndarray:
    """Node block of ``face`` with its boundary filled from ``us`` (interior zero)."""
    n = 2 * us.cub.k + 1
    nu = next(iter(us.blocks.values())).shape[-1]
    out = np.zeros((n,) * face.dim + (nu,))
    for sub in us.cub.boundary(face):
        if sub not in us.blocks:
            raise TraceIncompatible("boundary face missing", face=face.key(), missing=sub.key())
        out[_sub_index(us.cub, face, sub)] = us.blocks[sub]
    return out


def radial_fill(shell: np.ndarray) -> np.ndarray:
    """Max-norm radial extension of the shell of a cubic node block.

    Boundary nodes are copied bit for bit; the center takes the value at the
    end of the ray along the first positive axis.
    """
    i = shell.ndim - 1
    n = shell.shape[0]
    c = (n - 1) / 2.0
    k = c
    idx = np.indices((n,) * i, dtype=float).reshape(i, -1).T
    d = idx - c
    r = np.max(np.abs(d), axis=1)
    center = r == 0
    r[center] = 1.0
    proj = c + k * d / r[:, None]
    proj[center] = c
    proj[center, 0] = c + k
    out = np.empty_like(shell)
    flat = out.reshape(-1, shell.shape[-1])
    for comp in range(shell.shape[-1]):
        flat[:, comp] = ndimage.map_coordinates(shell[..., comp], proj.T, order=1, mode="nearest")
    on_shell = np.zeros((n,) * i, dtype=bool)
    for a in range(i):
        sl = [slice(None)] * i
        sl[a] = 0
        on_shell[tuple(sl)] = True
        sl[a] = n - 1
        on_shell[tuple(sl)] = True
    out[on_shell] = shell[on_shell]
    return out


def homogenize_cube(us: SkeletonMap, face: Face, p: float) -> np.ndarray:
    """Fill ``face`` from its boundary values in ``us`` (requires ``p < dim``)."""
    if p >= face.dim:
        raise HomogenizationIllposed("homogenization energy diverges unless p < face dimension",
                                     p=p, dim=face.dim)
    return radial_fill(_shell_block(us, face))


@dataclass
class ExtensionReport:
    energy_out: float
    terms: dict
    constant: float
    range_ok: bool
    continuity: float
    continuity_tol: float

    @property
    def rhs(self) -> float:
        return float(sum(self.terms.values()))


def _continuity(values: np.ndarray, cub: Cubication, faces, h: float, p: float, ell: int) -> tuple:
    """Largest adjacent-node jump on ``faces`` against ``10 h^(1 - ell/p)`` times the local seminorm."""
    jump = 0.0
    tol = np.inf
    for f in faces:
        b = face_values(values, cub, f)
        for ax in range(f.dim):
            jump = max(jump, float(np.max(np.linalg.norm(np.diff(b, axis=ax), axis=-1))))
        if f.dim and p > f.dim:
            e = face_energy(b, h, p) ** (1.0 / p)
            tol = min(tol, 10.0 * h ** (1.0 - f.dim / p) * max(e, 1e-300))
    return jump, tol


def extend_skeleton(u_be: GridMap, partition: GoodBadPartition, ell: int, p: float,
                    keep: set | None = None) -> tuple:
    """Extend values on ``E^ell`` and the kept faces to every bad cube.

    ``keep`` defaults to the faces shared by a bad and a good cube; their
    values are left as they are.  Returns ``(GridMap, ExtensionReport)``.
    """
    cub = partition.cubication
    m = cub.m
    if p >= ell + 1:
        raise HomogenizationIllposed("extension from the ell-skeleton needs p < ell + 1", p=p, ell=ell)
    if keep is None:
        keep = set()
        for i in range(ell + 1, m):
            keep.update(partition.interface_faces(i))
    h = cub.grid.h
    values = u_be.values.copy()
    base = list(partition.bad_faces(ell))
    src = [face_values(values, cub, f) for f in base]
    src += [face_values(values, cub, f) for f in keep]
    flat = np.concatenate([s.reshape(-1, values.shape[-1]) for s in src]) if src else values.reshape(-1, values.shape[-1])
    lo, hi = flat.min(axis=0), flat.max(axis=0)
    jump, tol = _continuity(values, cub, base, h, p, ell)
    terms = {f"E{ell}": cub.eta ** (m - ell) * sum(face_energy(s, h, p) for s in src[:len(base)])}
    for i in range(ell + 1, m):
        terms[f"S{i}"] = cub.eta ** (m - i) * sum(
            face_energy(face_values(values, cub, f), h, p) for f in keep if f.dim == i)
    for i in range(ell + 1, m + 1):
        level = partition.bad_faces(i)
        todo = [f for f in level if f not in keep]
        if not todo:
            continue
        us = SkeletonMap(cub, {g: face_values(values, cub, g).copy()
                               for f in todo for g in cub.boundary(f)})
        for f in todo:
            write_face(values, cub, f, homogenize_cube(us, f, p))
    out = GridMap(cub.grid, values)
    ce = cell_energy(out, p)
    energy = 0.0
    for c in partition.bad_cubes():
        energy += float(np.sum(ce[cub.neighborhood_slices(c, 0.0)]))
    filled = np.concatenate([face_values(values, cub, c).reshape(-1, values.shape[-1])
                             for c in partition.bad_cubes()]) if partition.bad_cubes() else flat
    rng_ok = bool(np.all(filled >= lo - 1e-12) and np.all(filled <= hi + 1e-12))
    assert rng_ok, "homogenized values left the range of the input"
    rhs = sum(terms.values())
    const = energy / rhs if rhs > 0 else (0.0 if energy == 0 else np.inf)
    return out, ExtensionReport(energy, terms, const, rng_ok, jump, tol)


def ray_samples(block: np.ndarray, n_rays: int = 64, n_steps: int = 8, seed: int = 0) -> np.ndarray:
    """Deviation of a filled block along max-norm rays (zero for a radial fill)."""
    n = block.shape[0]
    i = block.ndim - 1
    c = (n - 1) / 2.0
    k = (n - 1) // 2
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n_rays, i))
    d /= np.max(np.abs(d), axis=1, keepdims=True)
    s = np.linspace(1.0 / n_steps, 1.0, n_steps)
    pts = c + k * s[None, :, None] * d[:, None, :]
    out = np.empty((n_rays, n_steps, block.shape[-1]))
    for comp in range(block.shape[-1]):
        out[..., comp] = ndimage.map_coordinates(block[..., comp], pts.reshape(-1, i).T,
                                                 order=1).reshape(n_rays, n_steps)
    return out


__all__ = ["SkeletonMap", "skeleton_seminorm", "homogenize_cube", "radial_fill", "extend_skeleton",
           "ExtensionReport", "face_values", "write_face", "face_energy", "face_grid", "ray_samples"]
