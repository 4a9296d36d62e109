"""``gradplay`` command-line harness.

Every run writes its outputs plus one ``manifest.json`` into ``--out``.
Exit codes: 0 success, 2 usage, 3 solver failure, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cycles import detect_limit_cycle
from .dynamics import (LearningRates, NoiseModel, StepSchedule, Status,
                       saddle_avoidance_experiment, simulate_deterministic, simulate_stochastic)
from .equilibria import CriticalPointSearchConfig, classify, csv_header, find_critical_points, grid_seeds
from .errors import GradplayError, NumericalFailure, SolverFailure
from .game import game_from_json, make_family
from .lq import census_sweep, sample_census, z0_matrix
from .selfcheck import run_checks

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(GradplayError, ValueError):
    pass


# --- argument helpers ------------------------------------------------------

def floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def parse_grid(text: str) -> list[float]:
    """``lo:hi:num`` gives ``num`` evenly spaced points on ``[lo, hi)``; otherwise a comma list."""
    if ":" in str(text):
        parts = str(text).split(":")
        try:
            lo, hi, num = float(parts[0]), float(parts[1]), int(parts[2])
        except (ValueError, IndexError):
            raise UsageError(f"grid must be lo:hi:num, got {text!r}") from None
        if len(parts) != 3 or num < 1 or not lo < hi:
            raise UsageError(f"grid must be lo:hi:num with lo < hi and num >= 1, got {text!r}")
        return np.linspace(lo, hi, num, endpoint=False).round(12).tolist()
    return floats(text)


def load_game(cfg: dict):
    if cfg.get("game_json"):
        return game_from_json(Path(cfg["game_json"]).read_text())
    if not cfg.get("family"):
        raise UsageError("a game is required: give --family (with --params) or --game-json")
    return make_family(cfg["family"], cfg.get("params") or "")


def require_seed(cfg: dict) -> int:
    if cfg.get("seed") is None:
        raise UsageError("--seed is required for stochastic commands")
    return int(cfg["seed"])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --- commands --------------------------------------------------------------

def run_classify(cfg, out: Path):
    g = load_game(cfg)
    lo, hi, num = cfg["seed_grid"]
    search = CriticalPointSearchConfig(grid_seeds(lo, hi, int(num), g.m))
    pts = find_critical_points(g, search)
    reports = [classify(g, p, cfg["tol"]) for p in pts]
    write_json(out / "classify.json", {"game": g.label, "reports": [r.to_dict() for r in reports]})
    with open(out / "classify.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(g.m))
        for r in reports:
            w.writerow(r.csv_row())
    summary = [{"point": list(r.point), "flags": r.flags} for r in reports]
    return ["classify.json", "classify.csv"], summary, EXIT_OK


def _dynamics_args(cfg, g):
    if cfg.get("stochastic"):
        schedule = StepSchedule(cfg["schedule"], cfg["c1"], cfg.get("c2"), cfg["eta"])
        noise = NoiseModel(cfg["noise"], cfg["sigma"], cfg["delta"])
        return None, schedule, noise
    gam = floats(cfg["gamma"])
    rates = LearningRates(tuple(gam * g.n) if len(gam) == 1 else tuple(gam), cfg.get("lipschitz"))
    return rates, None, None


def run_simulate(cfg, out: Path):
    g = load_game(cfg)
    x0 = floats(cfg["x0"]) if cfg.get("x0") else [0.0] * g.m
    rates, schedule, noise = _dynamics_args(cfg, g)
    if rates is not None:
        tr = simulate_deterministic(g, x0, rates, cfg["max_iters"], cfg["conv_tol"],
                                    cfg["blowup"], stride=cfg["stride"])
    else:
        tr = simulate_stochastic(g, x0, schedule, noise, cfg["max_iters"], require_seed(cfg),
                                 cfg["conv_tol"], cfg["blowup"], stride=cfg["stride"])
    tr.write(out / "trajectory.csv", out / "trajectory.json")
    code = EXIT_NUMERIC if tr.status is Status.DIVERGED else EXIT_OK
    summary = {"status": tr.status.value, "iterations": tr.iterations, "final": tr.final.tolist()}
    return ["trajectory.csv", "trajectory.json"], summary, code


def run_avoidance(cfg, out: Path):
    g = load_game(cfg)
    seed = require_seed(cfg)
    saddle = floats(cfg["saddle"]) if cfg.get("saddle") else [0.0] * g.m
    rates, schedule, noise = _dynamics_args(cfg, g)
    res = saddle_avoidance_experiment(g, saddle, cfg["radius"], rates=rates, schedule=schedule,
                                      noise=noise, trials=cfg["trials"], seed=seed,
                                      max_iters=cfg["max_iters"], escape_factor=cfg["escape_factor"])
    write_json(out / "avoidance.json", res.to_dict())
    with open(out / "avoidance_trials.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(res.per_trial[0]))
        w.writeheader()
        w.writerows(res.per_trial)
    return ["avoidance.json", "avoidance_trials.csv"], {"avoidance_rate": res.avoidance_rate}, EXIT_OK


def run_cycle(cfg, out: Path):
    g = load_game(cfg)
    x0 = floats(cfg["x0"]) if cfg.get("x0") else [0.0] * g.m
    rep = detect_limit_cycle(g, x0, dt=cfg["dt"], t_max=cfg["t_max"], transient=cfg["transient"])
    body = {"found": rep is not None, "report": rep.to_dict() if rep else None}
    write_json(out / "cycle.json", body)
    summary = ({"period": rep.period_estimate, "classification": rep.classification}
               if rep else {"found": False})
    return ["cycle.json"], summary, EXIT_OK


def _census_kw(cfg):
    return {"z0": cfg["z0"], "h": cfg["h"], "tol": cfg["solver_tol"], "max_iters": cfg["solver_max_iters"]}


def run_lq_census(cfg, out: Path):
    seed = require_seed(cfg)
    z0_matrix(cfg["z0"])
    res = sample_census(cfg["q"], cfg["r"], cfg["samples"], seed,
                        keep_records=bool(cfg.get("records")), **_census_kw(cfg))
    body = {"q": res.q, "r": res.r, "samples": res.samples, "seed": seed, "counts": res.counts,
            "failed": res.failed, "frequency": res.frequency}
    write_json(out / "census.json", body)
    files = ["census.json"]
    if res.records is not None:
        with open(out / "census_records.jsonl", "w") as fh:
            for rec in res.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        files.append("census_records.jsonl")
    return files, body, EXIT_OK


def run_lq_sweep(cfg, out: Path):
    seed = require_seed(cfg)
    vary = cfg["vary"]
    if vary not in ("q", "r"):
        raise UsageError("--vary must be q or r")
    fixed = cfg["r"] if vary == "q" else cfg["q"]
    grid = parse_grid(cfg["grid"])
    pts = census_sweep(vary, grid, fixed, cfg["samples"], cfg["repeats"], seed,
                       workers=cfg.get("workers"), **_census_kw(cfg))
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid_value", "mean_frequency", "ci_low", "ci_high", "failures"])
        for p in pts:
            lo, hi = p.ci
            w.writerow([repr(p.value), repr(p.mean_frequency), repr(lo), repr(hi), p.failures])
    detail = [{"value": p.value, "q": p.q, "r": p.r, "frequencies": p.frequencies.tolist(),
               "failures": [c.failed for c in p.results]} for p in pts]
    write_json(out / "sweep.json", {"vary": vary, "fixed_other": fixed, "seed": seed,
                                    "points": detail})
    summary = [{"value": p.value, "mean_frequency": p.mean_frequency} for p in pts]
    return ["sweep.csv", "sweep.json"], summary, EXIT_OK


def run_check(cfg, out: Path):
    results = run_checks(deep=cfg["deep"], tol=cfg["tol"])
    for r in results:
        print(f"[{'PASS' if r['passed'] else 'FAIL'}] {r['name']}: {r['detail']}")
    write_json(out / "check.json", results)
    code = EXIT_OK if all(r["passed"] for r in results) else EXIT_NUMERIC
    return ["check.json"], {"passed": sum(r["passed"] for r in results), "total": len(results)}, code


COMMANDS = {
    "classify": run_classify, "simulate": run_simulate, "avoidance": run_avoidance,
    "cycle": run_cycle, "lq-census": run_lq_census, "lq-sweep": run_lq_sweep, "check": run_check,
}


# --- parser ------------------------------------------------------------------

def _game_opts(p):
    p.add_argument("--family", help="built-in family, e.g. potential-quadratic")
    p.add_argument("--params", default="", help="family parameters, e.g. a=1,b=2,c=1")
    p.add_argument("--game-json", help="path to a serialized game")


def _play_opts(p, max_iters):
    p.add_argument("--gamma", default="0.1", help="learning rate, or one per player")
    p.add_argument("--lipschitz", type=float, help="enforce gamma_i < 1/L")
    p.add_argument("--stochastic", action="store_true", help="use the step schedule and noise")
    p.add_argument("--schedule", default="power", choices=["power", "constant"])
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float)
    p.add_argument("--eta", type=float, default=0.75)
    p.add_argument("--noise", default="isotropic_gaussian",
                   choices=["isotropic_gaussian", "uniform_sphere", "one_point_bandit"])
    p.add_argument("--sigma", type=float, default=0.1, help="noise scale")
    p.add_argument("--delta", type=float, default=0.01, help="bandit smoothing radius")
    p.add_argument("--max-iters", type=int, default=max_iters)
    p.add_argument("--seed", type=int)


def _lq_opts(p):
    p.add_argument("--q", type=float, default=0.01)
    p.add_argument("--r", type=float, default=0.1)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--h", type=float, default=1e-5, help="finite-difference step")
    p.add_argument("--z0", default="identity", help="identity, ones, or a JSON 2x2 matrix")
    p.add_argument("--solver-tol", type=float, default=1e-10)
    p.add_argument("--solver-max-iters", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradplay", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gradplay {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config (a manifest also works); flags override it")
        p.add_argument("--out", default=".", help="output directory")
        return p

    p = add("classify", "find and classify critical points")
    _game_opts(p)
    p.add_argument("--seed-grid", type=floats, default=[-2.0, 2.0, 5.0],
                   help="Newton seeds as lo,hi,num per axis")
    p.add_argument("--tol", type=float, default=1e-9)

    p = add("simulate", "run one gradient-play trajectory")
    _game_opts(p)
    _play_opts(p, 10_000)
    p.add_argument("--x0", help="comma-separated start point (default origin)")
    p.add_argument("--conv-tol", type=float, default=1e-10)
    p.add_argument("--blowup", type=float, default=1e6)
    p.add_argument("--stride", type=int, default=1)

    p = add("avoidance", "Monte-Carlo escape from a strict saddle")
    _game_opts(p)
    _play_opts(p, 10_000)
    p.add_argument("--saddle", help="comma-separated saddle (default origin)")
    p.add_argument("--radius", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--escape-factor", type=float, default=10.0)

    p = add("cycle", "detect and classify a periodic orbit")
    _game_opts(p)
    p.add_argument("--x0", help="comma-separated start point")
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--t-max", type=float, default=200.0)
    p.add_argument("--transient", type=float, default=50.0)

    p = add("lq-census", "strict-saddle census of random LQ games")
    _lq_opts(p)
    p.add_argument("--records", action="store_true", help="also write per-game JSONL")

    p = add("lq-sweep", "repeated censuses along a q or r grid")
    _lq_opts(p)
    p.add_argument("--vary", default="r", choices=["q", "r"])
    p.add_argument("--grid", default="0.05:1.0:10", help="lo:hi:num on [lo, hi) or a comma list")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--workers", type=int, help="process count (default GRADPLAY_WORKERS or CPUs)")

    p = add("check", "self-test of core invariants")
    p.add_argument("--deep", action="store_true", help="add Monte-Carlo suites")
    p.add_argument("--tol", type=float, default=1e-6)
    return parser


def resolve_config(argv) -> dict:
    """Parse flags; a ``--config`` file supplies defaults that explicit flags override."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return vars(args)
    data = json.loads(Path(args.config).read_text())
    data = data.get("config", data)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in subparser._actions}
    unknown = sorted(set(data) - known - {"command", "config"})
    if unknown:
        raise UsageError(f"unknown config fields: {unknown}")
    subparser.set_defaults(**{k: v for k, v in data.items() if k in known and k not in ("config", "out")})
    return vars(parser.parse_args(argv))


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def main(argv=None) -> int:
    started = time.time()
    try:
        cfg = resolve_config(argv)
    except SystemExit as exc:  # argparse usage errors and --help/--version
        return int(exc.code or 0)
    except (UsageError, OSError, json.JSONDecodeError) as exc:
        print(f"gradplay: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    files, summary, error = [], None, None
    try:
        files, summary, code = COMMANDS[cfg["command"]](cfg, out)
    except SolverFailure as exc:
        code, error = EXIT_SOLVER, f"{type(exc).__name__}: {exc}"
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        code, error = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    except (ValueError, KeyError, TypeError, OSError) as exc:
        code, error = EXIT_USAGE, f"{type(exc).__name__}: {exc}"
    except ArithmeticError as exc:
        code, error = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"

    echo = {k: v for k, v in cfg.items() if k not in ("config", "out")}
    manifest = {
        "tool": "gradplay",
        "version": __version__,
        "command": cfg["command"],
        "config": echo,
        "exit_code": code,
        "error": error,
        "duration_seconds": round(time.time() - started, 3),
        "outputs": {name: _digest(out / name) for name in files},
    }
    write_json(out / "manifest.json", manifest)
    if error:
        print(f"gradplay: error: {error}", file=sys.stderr)
    elif summary is not None:
        print(json.dumps(summary, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
