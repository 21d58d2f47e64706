"""Trimming, degrees and the obstruction certificate."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sobotrim.errors import CertificateFailed, NotSmallEnergy
from sobotrim.grid_core import Grid, GridMap
from sobotrim.manifolds import Sphere, embed_funnel
from sobotrim.trimming import (boundary_loop, brouwer_degree, cap_measure, cap_probes, geodesic_trim_1d,
                               obstruction_certificate, path_length, product_obstruction,
                               trim_small_energy, truncation_battery, winding_number)


@settings(max_examples=20, deadline=None)
@given(st.integers(-4, 4), st.floats(0, 6.28))
def test_winding_of_power_maps(k, phase):
    g = Grid(2, 1.0, 129)
    z = g.mesh()[..., 0] + 1j * g.mesh()[..., 1]
    w = z ** k * np.exp(1j * phase) if k >= 0 else np.conj(z) ** (-k) * np.exp(1j * phase)
    u = GridMap(g, np.stack([w.real, w.imag], -1))
    assert brouwer_degree(u, np.array([0.01, -0.02])) == k
    assert brouwer_degree(u, np.array([0.01, -0.02]), method="simplex") == k


def test_boundary_loop_is_closed_counterclockwise():
    g = Grid(2, 1.0, 9)
    loop = boundary_loop(g.mesh())
    assert len(loop) == 4 * 8
    assert winding_number(loop, np.zeros(2)) == 1


def test_geodesic_trim_length_equals_distance():
    S = Sphere(2)
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, np.sqrt(0.5), np.sqrt(0.5)])
    path = geodesic_trim_1d(a, b, S, res=257)
    assert np.array_equal(path.values[0], a) and np.array_equal(path.values[-1], b)
    assert path_length(path) == pytest.approx(S.geodesic_distance(a[None], b[None])[0], rel=1e-4)


def test_small_cap_trim_and_large_energy_refusal():
    S = Sphere(2)
    g = Grid(2, 1.0, 65)

    def cap(x, r0):
        v = r0 * x
        r = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(r > 0, r, 1.0)
        return np.concatenate([np.sin(r) * v / safe, np.cos(r)], -1)

    res = trim_small_energy(GridMap.from_function(g, lambda x: cap(x, 0.2)), S, 2.0)
    assert res.boundary_residual == 0.0
    assert res.info["residual"] < 1e-12
    with pytest.raises(NotSmallEnergy):
        trim_small_energy(GridMap.from_function(g, lambda x: cap(x, 2.0)), S, 2.0)


def test_certificate_and_lift_on_coarse_grid():
    fm = embed_funnel(2, 0.4, scale=2.0)
    g = Grid(2, 1.0, 129)
    u = fm.sample(g)
    M = fm.manifold
    bat = truncation_battery(fm, g, 4)
    cert = obstruction_certificate(u, M, cap_probes(M, 1.0, 3), [0.25, 0.125], bat)
    assert np.all(cert.degrees == 1)
    assert cert.energies[0] > cert.energies[1]
    assert cert.epsilon == min(c["gap"] for c in cert.competitors)
    lift = product_obstruction(u, bat[0][2], 3)
    assert lift["factor"] == pytest.approx(2.0, rel=1e-12)
    assert cap_measure(M, 1.0) == pytest.approx(2 * np.pi * (1 - np.cos(1.0)), rel=1e-3)


def test_certificate_fails_for_a_constant_map():
    fm = embed_funnel(2, 0.4, scale=2.0)
    M = fm.manifold
    g = Grid(2, 1.0, 33)
    u = GridMap.constant(g, M.basepoint)
    with pytest.raises(CertificateFailed):
        obstruction_certificate(u, M, cap_probes(M, 1.0, 2)[1:], [0.5])
