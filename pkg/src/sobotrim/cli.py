"""Command-line front end: ``sobotrim <command> --config run.json``.

Commands write CSV/JSON reports into ``--out``.  Failures exit with the code
carried by the error (2 validation, 3 numerical, 4 trimming/non-convergence)
after writing ``error.json`` next to the other outputs.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from .counterexample import reproduce_section4
from .errors import NonConvergence, NumericalError, ParameterOutOfRange, SobotrimError, ValidationError
from .grid_core import Grid, Region, lp_norm, sobolev_seminorm
from .manifolds import manifold_from_config
from .maps import map_from_spec
from .pipeline import (DEFAULT_CONSTANTS, calibrate_constants, converge, make_schedule,
                       projection_constant)

log = logging.getLogger("sobotrim")
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("SOBOTRIM_LOG", "quiet").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, rows: list, columns: list | None = None) -> None:
    """Deterministic CSV: fixed column order, ``repr`` floats, ``\\n`` line ends."""
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def load_config(path: str) -> tuple:
    p = Path(path)
    if not p.exists():
        raise ParameterOutOfRange("config file not found", path=str(p))
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParameterOutOfRange("config is not valid JSON", path=str(p), detail=str(exc)) from exc
    if not isinstance(cfg, dict):
        raise ParameterOutOfRange("config must be a JSON object", path=str(p))
    return cfg, p.parent


def _grid(cfg: dict) -> Grid:
    g = cfg.get("grid", {})
    return Grid(int(g.get("m", 2)), float(g.get("inradius", 1.0)), int(g.get("res", 129)))


def _manifold(cfg: dict):
    return manifold_from_config(cfg.get("manifold", {"kind": "Sphere", "n": 2}))


def _constants(cfg: dict, base: Path) -> dict:
    consts = dict(DEFAULT_CONSTANTS)
    if "constants_file" in cfg:
        path = Path(cfg["constants_file"])
        path = path if path.is_absolute() else base / path
        if not path.exists():
            raise ParameterOutOfRange("constants file not found", path=str(path))
        consts.update(json.loads(path.read_text())["constants"])
    consts.update(cfg.get("constants", {}))
    return consts


def cmd_energy(cfg: dict, base: Path, out: Path) -> int:
    grid = _grid(cfg)
    u = map_from_spec(cfg.get("map", {}), grid, base)
    p = float(cfg.get("p", 2.0))
    m = grid.m
    r = grid.inradius
    regions = [("total", Region.full(grid)),
               ("inner_half", Region.box(grid, -0.5 * r * np.ones(m), 0.5 * r * np.ones(m))),
               ]
    regions.append(("outer_shell", regions[0][1] - regions[1][1]))
    rows = []
    for name, reg in regions:
        lp = lp_norm(u, p, reg)
        semi = sobolev_seminorm(u, p, reg)
        rows.append({"region": name, "volume": reg.volume(), "lp_norm": lp, "seminorm": semi,
                     "energy": semi ** p, "w1p_norm": (lp ** p + semi ** p) ** (1 / p)})
    write_csv(out / "energies.csv", rows)
    return 0


def _schedule(cfg: dict, M, consts: dict):
    s = cfg.get("schedule", {})
    p = float(cfg.get("p", 1.5))
    return make_schedule(M, p, s.get("etas", [30 / 128, 10 / 128, 6 / 128]), float(s.get("gamma", 22 / 128)),
                         float(s.get("R0", 4.0)), consts, float(s.get("rho", 0.25)),
                         float(s.get("rho_low", 0.125)), float(s.get("rbar_factor", 72.0)), s.get("t"),
                         float(s.get("R_growth", 2.0)))


def cmd_approximate(cfg: dict, base: Path, out: Path) -> int:
    grid = _grid(cfg)
    M = _manifold(cfg)
    u = map_from_spec(cfg.get("map", {}), grid, base)
    sched = _schedule(cfg, M, _constants(cfg, base))
    tol = float(cfg.get("tolerances", {}).get("convergence", 0.05))
    rep = converge(u, M, sched, tol)
    rows = []
    for i, claims in enumerate(rep.claims):
        for c in claims:
            rows.append({"step": i, **c})
    write_csv(out / "claims.csv", rows, ["step", "claim", "lhs", "rhs_times_C", "constant", "pass", "note"])
    write_csv(out / "convergence.csv", rep.rows(),
              ["step", "eta", "R", "lam", "rel_w1p_error", "lp_error", "grad_error", "sup"])
    for i, r in enumerate(rep.results):
        r.u_jx_domain.save(out / f"stage{i}_ujx")
    (out / "schedule.json").write_text(json.dumps(sched.laws(), indent=1, sort_keys=True))
    if not rep.converged:
        payload = {"flag": rep.flag, "errors": rep.errors, "failure": rep.failure}
        if cfg.get("map", {}).get("kind") == "funnel":
            gap = out / "gap-report.json"
            m = grid.m
            reproduce_section4(m, m, {"alpha": cfg["map"].get("alpha", 0.4),
                                      "scale": cfg["map"].get("scale", 2.0), "res": grid.res,
                                      "extra_resolutions": []}).write(gap)
            payload["gap_report"] = str(gap)
        raise NonConvergence("approximation did not converge", **payload)
    return 0


def cmd_counterexample(cfg: dict, base: Path, out: Path) -> int:
    params = dict(cfg.get("counterexample", {}))
    params.setdefault("seed", cfg.get("seed", 0))
    n = int(cfg.get("n", 2))
    m = int(cfg.get("m", n))
    rep = reproduce_section4(n, m, params)
    rep.write(out / "gap-report.json")
    write_csv(out / "cauchy.csv", rep.cauchy, ["k", "delta", "energy", "rel_increment"])
    write_csv(out / "battery.csv", rep.battery, ["height", "cut", "gap"])
    if m > n:
        click.echo(f"lift factor {rep.lift['factor']:.4f} (expected {rep.lift['expected']:g})")
    click.echo(f"epsilon {rep.epsilon:.6g}; checks {'pass' if rep.passed else 'FAIL'}")
    return 0


def cmd_calibrate(cfg: dict, base: Path, out: Path) -> int:
    battery = cfg.get("battery", [])
    if not battery:
        raise ParameterOutOfRange("empty calibration battery")
    M = _manifold(cfg)
    m = int(cfg.get("grid", {}).get("m", 2))
    p = float(cfg.get("p", 1.5))
    c = cfg.get("calibration", {})
    eta = float(c.get("eta", 0.5))
    gamma = float(c.get("gamma", 0.5))
    kw = {k: c[k] for k in ("rho", "rho_low", "t") if k in c}
    per_res = {}
    proj = []
    unmeasured = {}
    for res in cfg.get("resolutions", [65, 129]):
        grid = Grid(m, 1.0, int(res))
        maps = [map_from_spec(spec, grid, base) for spec in battery]
        missing = []
        per_res[str(res)] = calibrate_constants(maps, M, p, eta, gamma, float(c.get("lam", 3.0)),
                                                float(c.get("R", 4.0)), unmeasured=missing, **kw)
        if missing:
            unmeasured[str(res)] = missing
        proj.append(max(projection_constant(M, u.values.reshape(-1, u.ambient_dim)) for u in maps))
    drift = {}
    for key in DEFAULT_CONSTANTS:
        vals = [v[key] for v in per_res.values() if v[key] > 0]
        drift[key] = max(vals) / min(vals) if vals else 1.0
    final = {k: max(v[k] for v in per_res.values()) for k in DEFAULT_CONSTANTS}
    doc = {"constants": final, "per_resolution": per_res, "drift": drift,
           "projection": {"dpi_sup": max(proj), "lipschitz": max(proj)},
           "unmeasured": unmeasured, "battery": battery, "manifold": M.to_config(), "p": p, "eta": eta, "gamma": gamma}
    (out / "constants.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    worst = max(drift.values())
    if worst > 4.0:
        raise NumericalError("calibrated constants drift across resolutions", drift=drift)
    return 0


COMMANDS = {"energy": cmd_energy, "approximate": cmd_approximate,
            "counterexample": cmd_counterexample, "calibrate": cmd_calibrate}


def run(command: str, config: str, out: str | None, threads: int | None = None) -> int:
    """Dispatch one command; returns the process exit code."""
    out_dir = Path(out) if out else Path.cwd()
    out_dir.mkdir(parents=True, exist_ok=True)
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)
    try:
        cfg, base = load_config(config)
        seed = int(cfg.get("seed", 0))
        np.random.seed(seed)
        return COMMANDS[command](cfg, base, out_dir)
    except SobotrimError as exc:
        err = exc
    except (KeyError, TypeError, ValueError) as exc:
        err = ValidationError(f"invalid configuration: {exc}")
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        err = NumericalError(str(exc))
    (out_dir / "error.json").write_text(json.dumps({"command": command, **err.to_dict()}, indent=1))
    click.echo(f"error: {err.message}", err=True)
    return err.exit_code


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("command", type=click.Choice(sorted(COMMANDS)))
@click.option("--config", "config", required=True, type=str, help="Run config (JSON).")
@click.option("--threads", type=int, default=None, help="Cap on worker threads.")
@click.option("--out", "out", type=str, default=None, help="Output directory (default: cwd).")
def main(command: str, config: str, threads: int | None, out: str | None) -> None:
    """Run COMMAND (energy, approximate, counterexample, calibrate)."""
    _setup_logging()
    sys.exit(run(command, config, out, threads))


if __name__ == "__main__":
    main()
