"""Grid, maps, regions and the discrete Sobolev quantities."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sobotrim.errors import DomainExceeded, PaddingMisaligned, ParameterOutOfRange
from sobotrim.grid_core import (Grid, GridMap, Region, gradient, interpolate, lp_norm, reflect_extend,
                                relative_w1p_error, restrict, sobolev_seminorm, translate)

finite = st.floats(-3, 3, allow_nan=False)


def test_grid_basics():
    g = Grid(2, 1.0, 5)
    assert g.h == 0.5
    assert g.shape == (5, 5) and g.cell_shape == (4, 4)
    assert g.coords().tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert g.index_of(0.5) == 3
    with pytest.raises(PaddingMisaligned):
        g.index_of(0.3)
    with pytest.raises(ParameterOutOfRange):
        Grid(5, 1.0, 9)


@settings(max_examples=30, deadline=None)
@given(st.lists(finite, min_size=6, max_size=6), st.sampled_from([1.0, 1.5, 2.0, 3.0]))
def test_linear_map_energy_is_exact(entries, p):
    # |D(Ax)| is the constant Frobenius norm, so the energy is |A|^p times the volume
    A = np.array(entries).reshape(3, 2)
    g = Grid(2, 1.0, 9)
    u = GridMap(g, g.mesh() @ A.T)
    expected = np.linalg.norm(A) * 4.0 ** (1 / p)
    assert sobolev_seminorm(u, p) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_identity_energy_closed_form():
    g = Grid(2, 1.0, 33)
    u = GridMap(g, g.mesh().copy())
    assert sobolev_seminorm(u, 2.0) ** 2 == pytest.approx(8.0, rel=1e-12)
    assert lp_norm(GridMap.constant(g, [2.0]), 2.0) == pytest.approx(4.0, rel=1e-12)


def test_gradient_second_order_on_quadratic():
    g = Grid(1, 1.0, 41)
    u = GridMap(g, g.mesh() ** 2)
    d = gradient(u).entries[..., 0, 0]
    assert np.allclose(d, 2 * g.coords(), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(finite, min_size=4, max_size=4), st.lists(st.floats(-0.9, 0.9), min_size=2, max_size=2))
def test_interpolation_reproduces_affine_maps(coef, point):
    g = Grid(2, 1.0, 17)
    a = np.array(coef[:2])
    u = GridMap(g, (g.mesh() @ a + coef[2])[..., None])
    val = interpolate(u, np.array([point]))[0, 0]
    assert val == pytest.approx(np.dot(a, point) + coef[2], abs=1e-10)


def test_interpolation_refuses_outside_points():
    g = Grid(2, 1.0, 9)
    with pytest.raises(DomainExceeded):
        interpolate(GridMap.constant(g, [1.0]), np.array([[1.2, 0.0]]))


def test_reflect_extend_is_even_and_restricts_back():
    g = Grid(2, 1.0, 17)
    rng = np.random.default_rng(0)
    u = GridMap(g, rng.normal(size=g.shape + (2,)))
    ext = reflect_extend(u, 0.25)
    assert ext.grid.inradius == pytest.approx(1.5)
    assert np.array_equal(restrict(ext, 1.0).values, u.values)
    k = 2                                   # gamma / h
    edge = 2 * k                            # node index of x0 = -1
    assert np.array_equal(ext.values[edge - 1], ext.values[edge + 1])
    assert ext.values.shape[0] == 17 + 2 * 2 * k


def test_region_algebra_and_volume():
    g = Grid(2, 1.0, 9)
    full = Region.full(g)
    inner = Region.box(g, [-0.5, -0.5], [0.5, 0.5])
    assert full.volume() == pytest.approx(4.0)
    assert inner.volume() == pytest.approx(1.0)
    assert (full - inner).volume() == pytest.approx(3.0)
    assert (full & inner).volume() == pytest.approx(1.0)
    assert Region.empty(g).volume() == 0.0


def test_relative_error_zero_and_translation_identity():
    g = Grid(2, 1.0, 9)
    u = GridMap(g, g.mesh().copy())
    assert relative_w1p_error(u, u, 2.0) == 0.0
    assert np.array_equal(translate(u, [0.0, 0.0]).values, u.values)


def test_save_load_roundtrip(tmp_path):
    g = Grid(2, 1.0, 9)
    u = GridMap(g, np.random.default_rng(1).normal(size=g.shape + (3,)))
    u.save(tmp_path / "u")
    v = GridMap.load(tmp_path / "u")
    assert v.grid == g and np.array_equal(v.values, u.values)
    u.to_csv(tmp_path / "u.csv")
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "x1,x2,u1,u2,u3"
