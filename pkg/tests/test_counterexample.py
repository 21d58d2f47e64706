"""Funnel counterexample checks on coarse grids."""

from __future__ import annotations

import pytest

from sobotrim.counterexample import cauchy_ok, reproduce_section4
from sobotrim.errors import CertificateFailed, ParameterOutOfRange

FAST = {"res": 257, "extra_resolutions": [], "cauchy_levels": [3, 4, 5, 6], "radii": [0.25, 0.125],
        "competitors": 4, "lift_slices": 3, "cauchy_tol": 0.02}


def test_cauchy_criterion_on_synthetic_rows():
    def rows(es):
        return [{"energy": e, "rel_increment": None if i == 0 else (e - es[i - 1]) / e}
                for i, e in enumerate(es)]
    assert cauchy_ok(rows([1.0, 1.05, 1.06, 1.065]), 0.01)
    assert not cauchy_ok(rows([1.0, 1.05, 1.2]), 0.01)         # increments grow
    assert not cauchy_ok(rows([1.0, 1.2, 1.3]), 0.01)          # finest too large
    assert not cauchy_ok(rows([1.0]), 0.01)


def test_coarse_report_and_lift():
    rep = reproduce_section4(2, 3, FAST)
    assert rep.checks["degrees_nonzero"] and rep.checks["ball_energy_decreasing"]
    assert rep.checks["battery_above_epsilon"] and rep.checks["unbounded_growth"]
    assert rep.epsilon > 0
    assert rep.lift["slice_min"] >= rep.epsilon * (1 - 1e-12)
    d = rep.to_dict()
    assert d["epsilon_label"] == "EMPIRICAL"


def test_bounded_target_fails_at_unboundedness():
    with pytest.raises(CertificateFailed) as info:
        reproduce_section4(2, 2, {**FAST, "alpha": 0.0})
    assert info.value.payload["stage"] == "unboundedness"


@pytest.mark.parametrize("args", [(2, 2, {"alpha": 0.6}), (2, 1, {}), (3, 3, {})])
def test_invalid_parameters(args):
    with pytest.raises(ParameterOutOfRange):
        reproduce_section4(*args)
