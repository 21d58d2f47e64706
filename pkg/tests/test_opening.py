"""Opening maps: profile shape, fiber constancy, identity outside the tube."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sobotrim.cubication import build_cubication
from sobotrim.errors import ParameterOutOfRange
from sobotrim.grid_core import Grid, GridMap, reflect_extend
from sobotrim.opening import (RadialProfile, face_energy_ratios, fiber_variance, open_map, opening_radii,
                              shifted_map, smoothstep5)


def test_smoothstep_endpoints_and_slope():
    x = np.linspace(0, 1, 10001)
    s = smoothstep5(x)
    assert s[0] == 0.0 and s[-1] == 1.0
    assert np.max(np.gradient(s, x)) == pytest.approx(1.875, rel=1e-4)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.4), st.floats(0.45, 0.9), st.floats(-2, 2))
def test_profile_zones(inner, outer, y):
    prof = RadialProfile(inner, outer)
    out = prof.apply(np.array([[y]]))[0, 0]
    if abs(y) <= inner:
        assert out == 0.0
    elif abs(y) >= outer:
        assert out == y
    assert abs(out) <= abs(y) + 1e-15


def test_shifted_map_zones():
    prof = RadialProfile(0.1, 0.3)
    z = np.array([0.05])
    assert shifted_map(prof, np.array([[0.7]]), z)[0, 0] == 0.7
    assert shifted_map(prof, np.array([[-0.05]]), z)[0, 0] == -0.05   # y + z on the plateau maps to -z


def test_radii_are_nested():
    r = opening_radii(0.25, 2)
    assert all(a > b for a, b in zip(r, r[1:]))
    assert r[-1] == pytest.approx(0.25 * (1 + 1 / 4))


def _opened(res=65, ell=1):
    rng = np.random.default_rng(4)
    A = rng.normal(size=(3, 2))
    u0 = GridMap.from_function(Grid(2, 1.0, res), lambda x: np.sin(x @ A.T))
    u = reflect_extend(u0, 0.5)
    cub = build_cubication(0.5, 0.5, u.grid, rho=0.25)
    op, uop = open_map(u, cub, ell, 0.25, p=2.0)
    return u, op, uop


def test_fiber_constancy_and_identity_outside():
    u, op, uop = _opened()
    assert max(fiber_variance(uop, op, f) for f in op.faces[1]) < 1e-18
    mask = op.support_region_nodes(u.grid)
    assert np.array_equal(uop.values[~mask], u.values[~mask])
    r = face_energy_ratios(u, uop, op, 2.0)
    assert np.all(np.isfinite(r)) and r.max() < 10


def test_constant_map_unchanged():
    g = reflect_extend(GridMap.constant(Grid(2, 1.0, 33), [0.0]), 0.5).grid
    u = GridMap.constant(g, [1.0, 2.0])
    cub = build_cubication(0.5, 0.5, g, rho=0.25)
    _, uop = open_map(u, cub, 1, 0.25)
    assert np.array_equal(uop.values, u.values)


def test_bad_rho_rejected():
    g = reflect_extend(GridMap.constant(Grid(2, 1.0, 33), [0.0]), 0.5).grid
    cub = build_cubication(0.5, 0.5, g)
    with pytest.raises(ParameterOutOfRange):
        open_map(GridMap.constant(g, [0.0]), cub, 1, 0.6)
