"""Zero-degree homogenization and the skeleton extension."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sobotrim.cubication import Face, build_cubication, classify
from sobotrim.errors import HomogenizationIllposed
from sobotrim.grid_core import Grid, GridMap, reflect_extend
from sobotrim.homogenization import (SkeletonMap, extend_skeleton, face_energy, homogenize_cube,
                                     radial_fill, ray_samples, skeleton_seminorm)
from sobotrim.manifolds import Sphere
from sobotrim.maps import vortex_map


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10 ** 6))
def test_radial_fill_keeps_shell_and_is_constant_on_rays(half, seed):
    n = 2 * half + 1
    shell = np.random.default_rng(seed).normal(size=(n, n, 2))
    v = radial_fill(shell)
    for b_v, b_s in ((v[0], shell[0]), (v[-1], shell[-1]), (v[:, 0], shell[:, 0]), (v[:, -1], shell[:, -1])):
        assert np.array_equal(b_v, b_s)
    # along the diagonal rays the fill equals the corner value
    for i in range(1, half):
        assert np.array_equal(v[i, i], shell[0, 0])


def test_zero_homogeneous_data_is_reproduced():
    # x/|x| is constant on rays from the center: the fill must agree at interior nodes on axes
    g = Grid(2, 0.25, 33)
    u = vortex_map(g)
    shell = u.values.copy()
    shell[1:-1, 1:-1] = 0.0
    v = radial_fill(shell)
    mid = 16
    assert np.allclose(v[mid, mid + 1:], u.values[mid, mid + 1:], atol=1e-15)
    assert np.max(np.abs(ray_samples(v))) <= 1.0 + 1e-12


def test_energy_of_a_line_face():
    h = 0.1
    block = np.linspace(0, 1, 11)[:, None]          # slope 1 over length 1
    assert face_energy(block, h, 2.0) == pytest.approx(1.0)
    assert face_energy(np.zeros(2), h, 2.0) == 0.0


def test_refusals():
    with pytest.raises(HomogenizationIllposed):
        homogenize_cube(SkeletonMap(None), Face((0, 0), (0, 1)), 2.0)
    g = reflect_extend(vortex_map(Grid(2, 1.0, 65)), 0.5)
    cub = build_cubication(0.5, 0.5, g.grid)
    part = classify(g, cub, 4.0, 1.0, 0.25, Sphere(1), 1.5)
    with pytest.raises(HomogenizationIllposed):
        extend_skeleton(g, part, 0, 1.5)


def test_extend_skeleton_fills_bad_cube_within_range():
    u = reflect_extend(vortex_map(Grid(2, 1.0, 65)), 0.5)
    cub = build_cubication(0.5, 0.5, u.grid)
    part = classify(u, cub, 4.0, 1.0, 0.25, Sphere(1), 1.5)
    out, rep = extend_skeleton(u, part, 1, 1.5)
    assert rep.range_ok and np.isfinite(rep.constant)
    us = SkeletonMap.from_gridmap(out, cub, part.bad_faces(1))
    assert us.trace_mismatch() == 0.0
    assert skeleton_seminorm(us, 1.5) > 0
