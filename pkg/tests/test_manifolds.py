"""Target manifolds: projection, distances, charts and the funnel profile."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sobotrim.errors import ParameterOutOfRange
from sobotrim.manifolds import Euclidean, FunnelSphere, Sphere, embed_funnel, manifold_from_config

vec3 = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3)


@settings(max_examples=50, deadline=None)
@given(vec3)
def test_sphere_projection_is_idempotent_and_nearest(v):
    S = Sphere(2)
    y = np.array([v])
    p = S.project(y)
    assert np.allclose(S.project(p), p, atol=1e-14)
    assert abs(S.residual(p)[0]) < 1e-12
    # nearest: no other sphere point is closer than the radial one
    assert np.linalg.norm(y - p) == pytest.approx(abs(np.linalg.norm(y) - 1.0), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(vec3, vec3, vec3)
def test_geodesic_distance_is_a_metric(a, b, c):
    S = Sphere(2)
    x, y, z = (S.project(np.array([w])) for w in (a, b, c))
    dxy, dyz, dxz = S.geodesic_distance(x, y)[0], S.geodesic_distance(y, z)[0], S.geodesic_distance(x, z)[0]
    assert dxy == pytest.approx(S.geodesic_distance(y, x)[0], abs=1e-12)
    assert dxz <= dxy + dyz + 1e-9
    assert 0 <= dxy <= np.pi + 1e-12


def test_sphere_closed_forms():
    S = Sphere(2)
    n = np.array([[0.0, 0.0, 1.0]])
    e = np.array([[1.0, 0.0, 0.0]])
    assert S.geodesic_distance(n, e)[0] == pytest.approx(np.pi / 2)
    assert S.distance_to_ball(np.array([[0.0, 0.0, 2.0]]), np.pi)[0] == pytest.approx(1.0)
    assert S.tubular_radius(1.0) == 0.5


def test_euclidean_projection_is_identity():
    E = Euclidean(3)
    y = np.random.default_rng(0).normal(size=(10, 3))
    assert np.array_equal(E.project(y), y)


def test_funnel_profile_matches_log_power():
    M = FunnelSphere(2, 0.4)
    d = np.array([1e-2, 1e-4, 1e-8])
    assert np.allclose(M.lam_of_d(d), np.log(1 / d) ** 0.4, rtol=1e-12)
    assert M.lam_of_d(np.array([2.0]))[0] == 1.0


def test_funnel_alpha_range_and_config():
    with pytest.raises(ParameterOutOfRange):
        embed_funnel(2, 0.5)
    with pytest.raises(ParameterOutOfRange):
        embed_funnel(2, 0.0)
    assert isinstance(manifold_from_config({"kind": "Sphere", "n": 1}), Sphere)
    with pytest.raises(ParameterOutOfRange):
        manifold_from_config({"kind": "Torus"})


def test_funnel_map_lies_on_the_funnel():
    from sobotrim.grid_core import Grid
    fm = embed_funnel(2, 0.4, scale=2.0)
    u = fm.sample(Grid(2, 1.0, 33))
    assert np.max(np.abs(fm.manifold.residual(u.values))) < 1e-8
