"""Single stages, schedules and the constant-scale mollify-project step."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sobotrim.errors import ClaimViolation, ParameterOutOfRange
from sobotrim.grid_core import Grid, GridMap
from sobotrim.manifolds import Euclidean, Sphere
from sobotrim.maps import constant_map, smooth_euclidean_map, vortex_map
from sobotrim.pipeline import (DEFAULT_CONSTANTS, StageParams, calibrate_constants, converge, make_schedule, mollify_project, opening_dimension,
                               projection_constant, run_stage)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 5.0), st.integers(2, 4))
def test_opening_dimension(p, m):
    ell = opening_dimension(min(p, m), m)
    assert 0 <= ell <= m - 1
    if p < m:
        assert ell == int(np.floor(p))


def test_constant_map_passes_through_unchanged():
    M = Sphere(1)
    u = constant_map(Grid(2, 1.0, 129), M.basepoint)
    res = run_stage(u, M, StageParams(1.5, 4.0, 3.0, 30 / 128, 22 / 128))
    assert res.all_passed
    assert np.array_equal(res.u_jx_domain.values, u.values)
    assert res.error_w1p == 0.0
    assert not res.partition.bad_cubes()


def test_vortex_stage_stays_on_the_circle():
    M = Sphere(1)
    u = vortex_map(Grid(2, 1.0, 129))
    res = run_stage(u, M, StageParams(1.5, 4.0, 3.0, 30 / 128, 22 / 128))
    assert np.max(np.abs(M.residual(res.u_jx.values))) < 1e-8
    assert {c.claim for c in res.claims} >= {"1", "2a", "3", "4", "5", "6", "7", "8"}
    assert res.error_w1p < 1.0


def test_oversized_lambda_violates_claim_3():
    M = Sphere(1)
    u = vortex_map(Grid(2, 1.0, 257))
    params = StageParams(1.5, 4.0, 333.0, 30 / 128, 22 / 128, t=0.1)
    with pytest.raises(ClaimViolation) as info:
        run_stage(u, M, params)
    assert info.value.claim == 3
    params.on_violation = "record"
    res = run_stage(u, M, params)
    assert not next(c for c in res.claims if c.claim == "3").passed


def test_schedule_laws_and_validation():
    M = Sphere(1)
    s = make_schedule(M, 1.5, [0.25, 0.125], 0.2, R0=4.0)
    laws = s.laws()
    assert laws["R"] == [4.0, 8.0]
    assert laws["eta_over_lam"][1] < laws["eta_over_lam"][0]
    with pytest.raises(ParameterOutOfRange):
        make_schedule(M, 1.5, [0.125, 0.25], 0.2, R0=4.0, growth=1.0)


def test_converge_on_constant_map():
    M = Sphere(1)
    u = constant_map(Grid(2, 1.0, 65), M.basepoint)
    rep = converge(u, M, make_schedule(M, 1.5, [0.25, 0.125], 0.25, R0=4.0))
    assert rep.converged and rep.monotone and rep.errors == [0.0, 0.0]


def test_mollify_project_on_flat_target():
    M = Euclidean(2)
    g = Grid(2, 1.0, 65)
    u = smooth_euclidean_map(g, 2, seed=1)
    lin = GridMap(g, g.mesh() @ np.array([[1.0, 2.0], [-0.5, 0.3]]))
    assert np.allclose(mollify_project(lin, M, 0.1).values, lin.values, atol=1e-12)
    err = np.max(np.abs(mollify_project(u, M, 0.05).values - u.values))
    assert err < 0.05
    assert projection_constant(M, u.values.reshape(-1, 2)) == 1.0
    assert projection_constant(Sphere(2), np.array([[0.0, 0.0, 1.0]])) == pytest.approx(1.0, rel=1e-5)


def test_calibration_reports_unexercised_constants():
    M = Sphere(1)
    u = constant_map(Grid(2, 1.0, 65), M.basepoint)
    missing = []
    consts = calibrate_constants([u], M, 1.5, 0.5, 0.5, lam=3.0, R=4.0, unmeasured=missing)
    # no bad cubes and no motion: nothing is exercised, every default is kept
    assert set(missing) == set(DEFAULT_CONSTANTS)
    assert consts == DEFAULT_CONSTANTS
    with pytest.raises(ParameterOutOfRange):
        calibrate_constants([], M, 1.5, 0.5, 0.5)
