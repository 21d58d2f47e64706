"""Variable-scale mollification and the transition field."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sobotrim.cubication import build_cubication, classify
from sobotrim.errors import DomainExceeded, TransitionInfeasible
from sobotrim.grid_core import Grid, GridMap, Region, reflect_extend
from sobotrim.manifolds import Sphere
from sobotrim.maps import vortex_map
from sobotrim.smoothing import (ScaleField, adaptive_convolve, bump_mollifier, build_transition,
                                translation_modulus)


def test_mollifier_is_normalized_and_symmetric():
    phi = bump_mollifier(2, 9)
    assert phi.mass == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(phi.weights @ phi.nodes, 0.0, atol=1e-15)
    assert np.all(np.linalg.norm(phi.nodes, axis=1) < 1)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(0.1, 0.3))
def test_affine_maps_are_fixed(coef, scale):
    # symmetric kernel with zero first moment reproduces affine maps
    g = Grid(2, 1.0, 33)
    u = GridMap(g, (g.mesh() @ np.array(coef[:2]) + coef[2])[..., None])
    psi = ScaleField.constant(g, scale)
    omega = Region.box(g, [-0.6, -0.6], [0.6, 0.6])
    out = adaptive_convolve(u, psi, omega=omega)
    nodes = omega.nodes()
    assert np.allclose(out.values[nodes], u.values[nodes], atol=1e-12)


def test_zero_scale_is_bit_exact_and_margin_checked():
    g = Grid(2, 1.0, 33)
    u = GridMap(g, np.random.default_rng(0).normal(size=g.shape + (2,)))
    vals = np.where(g.mesh()[..., 0] < 0, 0.0, 0.2)
    psi = ScaleField.from_array(g, vals)
    omega = Region.box(g, [-0.7, -0.7], [0.7, 0.7])
    out = adaptive_convolve(u, psi, omega=omega)
    assert np.array_equal(out.values[vals == 0], u.values[vals == 0])
    with pytest.raises(DomainExceeded):
        adaptive_convolve(u, psi)
    assert translation_modulus(u, ScaleField.constant(g, 0.0), 2.0) == 0.0


def test_transition_field_constraints():
    u = reflect_extend(vortex_map(Grid(2, 1.0, 129)), 0.5)
    cub = build_cubication(0.5, 0.5, u.grid, rho=0.25)
    part = classify(u, cub, 4.0, 3.0, 0.25, Sphere(1), 1.5)
    assert part.good.any() and not part.good.all()
    psi = build_transition(part)
    assert 0 < psi.lipschitz < 1
    assert psi.values.max() == psi.plateau
    assert psi.values.min() == 0.0
    with pytest.raises(TransitionInfeasible):
        build_transition(part, t=0.2)
