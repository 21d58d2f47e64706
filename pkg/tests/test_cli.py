"""Command-line exit codes, outputs and error reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from sobotrim.cli import main, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path: Path, cfg: dict) -> str:
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_energy_of_identity(tmp_path):
    assert run("energy", str(CONFIGS / "energy_identity.json"), str(tmp_path)) == 0
    rows = {r["region"]: r for r in csv.DictReader(open(tmp_path / "energies.csv"))}
    assert float(rows["total"]["energy"]) == pytest.approx(8.0, rel=1e-12)
    assert float(rows["inner_half"]["energy"]) + float(rows["outer_shell"]["energy"]) == pytest.approx(8.0)


@pytest.mark.parametrize("cfg", [
    {"grid": {"res": 33}, "map": {"kind": "file", "path": "missing"}},
    {"grid": {"res": 33}, "map": {"kind": "nonsense"}},
    {"grid": {"res": 33}, "map": {"kind": "identity"}, "p": "two"},
])
def test_validation_errors_exit_2(tmp_path, cfg):
    assert run("energy", _write(tmp_path, cfg), str(tmp_path / "o")) == 2
    err = json.loads((tmp_path / "o" / "error.json").read_text())
    assert err["exit_code"] == 2 and err["command"] == "energy"


def test_missing_config_and_bad_alpha(tmp_path):
    assert run("energy", str(tmp_path / "nope.json"), str(tmp_path / "a")) == 2
    cfg = {"n": 2, "m": 2, "counterexample": {"alpha": 0.7}}
    assert run("counterexample", _write(tmp_path, cfg), str(tmp_path / "b")) == 2
    assert (tmp_path / "b" / "error.json").exists()


def test_empty_calibration_battery(tmp_path):
    assert run("calibrate", _write(tmp_path, {"battery": []}), str(tmp_path)) == 2


def test_flat_target_projection_constant(tmp_path):
    cfg = {"manifold": {"kind": "Euclidean", "n": 2}, "resolutions": [65], "p": 1.5,
           "battery": [{"kind": "smooth_euclidean", "n": 2, "seed": 0}],
           "calibration": {"eta": 0.5, "gamma": 0.5, "lam": 3.0, "R": 4.0}}
    assert run("calibrate", _write(tmp_path, cfg), str(tmp_path)) == 0
    doc = json.loads((tmp_path / "constants.json").read_text())
    assert doc["projection"]["dpi_sup"] == 1.0


def test_funnel_approximation_exits_4_with_gap_report(tmp_path):
    assert run("approximate", str(CONFIGS / "approximate_funnel.json"), str(tmp_path)) == 4
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["payload"]["failure"]["error"] == "TrimmingFailed"
    assert Path(err["payload"]["gap_report"]).exists()


def test_click_entry_point(tmp_path):
    res = CliRunner().invoke(main, ["energy", "--config", str(CONFIGS / "energy_identity.json"),
                                    "--out", str(tmp_path)])
    assert res.exit_code == 0
    res = CliRunner().invoke(main, ["bogus", "--config", "x"])
    assert res.exit_code == 2
