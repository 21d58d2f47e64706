"""Cubications, face enumeration and the good/bad classification."""

from __future__ import annotations

import json
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sobotrim.cubication import bad_measure_report, build_cubication, classify
from sobotrim.errors import EtaMisaligned
from sobotrim.grid_core import Grid, GridMap, reflect_extend
from sobotrim.manifolds import Sphere
from sobotrim.maps import vortex_map


def face_count(m: int, N: int, i: int) -> int:
    # choose the i spanning axes; N positions along them, N + 1 along the others
    return comb(m, i) * N ** i * (N + 1) ** (m - i)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 3), st.sampled_from([(0.5, 0.5), (0.25, 0.25), (0.5, 0.25)]))
def test_face_counts_match_combinatorics(m, geom):
    gamma, eta = geom
    res = {1: 33, 2: 17, 3: 9}[m]
    g = reflect_extend(GridMap.constant(Grid(m, 1.0, res), [0.0]), gamma).grid
    cub = build_cubication(gamma, eta, g)
    for i in range(m + 1):
        assert len(cub.faces(i)) == face_count(m, cub.N, i)


def test_m2_three_by_three():
    g = reflect_extend(GridMap.constant(Grid(2, 1.0, 17), [0.0]), 0.5).grid
    cub = build_cubication(0.5, 0.5, g)
    assert cub.N == 3
    assert [cub.count(i) for i in range(3)] == [16, 24, 9]


def test_misaligned_eta_rejected():
    g = reflect_extend(GridMap.constant(Grid(2, 1.0, 17), [0.0]), 0.5).grid
    with pytest.raises(EtaMisaligned):
        build_cubication(0.5, 0.3, g)


def test_constant_map_all_good_and_vortex_center_bad():
    S = Sphere(1)
    g0 = Grid(2, 1.0, 65)
    u = reflect_extend(GridMap.constant(g0, S.basepoint), 0.5)
    cub = build_cubication(0.5, 0.5, u.grid)
    part = classify(u, cub, 1.0, 1.0, 0.25, S, 1.5)
    assert part.good.all()
    v = reflect_extend(vortex_map(g0), 0.5)
    part = classify(v, cub, 4.0, 1.0, 0.25, S, 1.5)
    assert not part.good[1, 1]
    assert len(json.loads(part.to_json())) == 9
    rep = bad_measure_report(v, part, 1.5, S)
    assert rep.holds and rep.constant == pytest.approx(2 ** 2 * (2 * 1.5) ** 2)
