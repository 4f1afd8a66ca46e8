"""Command-line entry point: simulate, estimate, evaluate, sweep.

Every command exits 0 on success. On failure it prints one JSON object
``{"error": <type>, "message": <text>}`` to stderr and exits 1 (2 for usage
errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .estimators import METHODS
from .evaluation import (HISTORICAL_SAMPLE_SEED, HISTORICAL_SAMPLES, HISTORICAL_SEED_OFFSET,
                         compute_metrics, emit_report, run_sweep)
from .io import load_estimates, load_plan, load_trajectories, save_estimates, save_plan, save_trajectories
from .pipeline import (HistoricalModel, build_historical, estimate_cycles, group_evidence,
                       prepare_population)
from .prior import PriorSpec
from .profile import load_profiles, save_profiles
from .scenarios import reference_scenario
from .sim import GroundTruth, ScenarioConfig, cv_mask, simulate, with_seed


class UsageError(Exception):
    pass


def _scenario(arg: str | None) -> ScenarioConfig:
    if arg is None or arg == "reference":
        return reference_scenario()
    return ScenarioConfig.load(arg)


def _floats(text: str) -> list[float]:
    vals = [float(x) for x in text.split(",") if x.strip()]
    if not vals:
        raise UsageError("empty list")
    return vals


def _seeds(text: str) -> list[int]:
    """``3`` is seeds 0..2, ``0-9`` a range, ``1,4,7`` a list."""
    text = text.strip()
    if "," in text:
        return [int(x) for x in text.split(",") if x.strip()]
    if "-" in text[1:]:
        a, b = text.split("-", 1)
        return list(range(int(a), int(b) + 1))
    return list(range(int(text)))


def _methods(text: str | None) -> list[str]:
    if not text:
        return list(METHODS)
    out = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in out if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}; choose from {list(METHODS)}")
    return out


def _need(args, *names):
    missing = [f"--{n}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"{args.command} needs {' '.join(missing)}")


def cmd_simulate(args) -> dict:
    """Population run, CV sample at the scenario penetration, truth, and historical profile/prior."""
    _need(args, "out")
    sc = _scenario(args.scenario)
    if args.seeds is not None:
        sc = with_seed(sc, _seeds(args.seeds)[0])
    p = sc.penetration if args.penetrations is None else _floats(args.penetrations)[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = simulate(sc)
    cvs = np.flatnonzero(cv_mask(len(run.trajectories), p, sc.seed))
    save_plan(run.plan, out / "plan.json")
    save_trajectories([run.trajectories[i] for i in cvs], out / "trajectories.csv")
    run.truth.to_csv(out / "truth.csv")
    sc.save(out / "scenario.json")
    hist = simulate(with_seed(sc, sc.seed + HISTORICAL_SEED_OFFSET))
    hprep = prepare_population(hist.trajectories, hist.plan)
    masks = [cv_mask(len(hprep), p, HISTORICAL_SAMPLE_SEED + j) for j in range(HISTORICAL_SAMPLES)]
    pid = sc.phase_ids[0]
    horizon = (hist.plan.cycle(pid, 1).red_start_s, hist.plan.cycle(pid, sc.n_cycles).end_s)
    model = build_historical(hprep, masks, hist.plan, sc.phase_configs, horizon)
    model.prior.save(out / "prior.json")
    save_profiles(model.profiles, out / "profile.json")
    return {"vehicles": len(run.trajectories), "cvs": int(cvs.size), "penetration": p,
            "out": str(out)}


def cmd_estimate(args) -> dict:
    _need(args, "plan", "trajectories", "prior", "out")
    plan = load_plan(args.plan)
    prior = PriorSpec.load(args.prior)
    missing = set(prior.phase_ids) ^ set(plan.phase_ids)
    if missing:
        raise UsageError(f"prior and plan disagree on phases {sorted(missing)}")
    profiles = load_profiles(args.profile) if args.profile else {}
    trajectories = load_trajectories(args.trajectories)
    prepared = prepare_population(trajectories, plan)
    ks = sorted(set.intersection(*(set(plan.cycle_indices(p)) for p in prior.phase_ids)))
    if not ks or ks != list(range(ks[0], ks[-1] + 1)):
        raise UsageError("phases share no consecutive run of cycle indices")
    ev = group_evidence(prepared, None, prior.phase_ids)
    model = HistoricalModel(profiles, prior)
    out = estimate_cycles(ev, plan, model, ks, _methods(args.methods))
    path = Path(args.out)
    if path.suffix.lower() != ".csv":
        path.mkdir(parents=True, exist_ok=True)
        path = path / "estimates.csv"
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
    save_estimates(out.estimates, path)
    return {"estimates": len(out.estimates), "cycles": len(ks), "out": str(path)}


def cmd_evaluate(args) -> dict:
    _need(args, "estimates", "truth")
    truth = GroundTruth.from_csv(args.truth)
    ests = load_estimates(args.estimates)
    methods = _methods(args.methods)
    result = {}
    for m in methods:
        sel = [e for e in ests if e.method == m]
        if sel:
            result[m] = compute_metrics(sel, truth).to_json()
    text = json.dumps({"metrics": result}, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    return {"metrics": result}


def cmd_sweep(args) -> dict:
    _need(args, "out")
    sc = _scenario(args.scenario)
    pens = _floats(args.penetrations) if args.penetrations else [0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0]
    seeds = _seeds(args.seeds) if args.seeds else list(range(10))
    res = run_sweep(sc, pens, seeds, _methods(args.methods), regroup=args.regroup)
    paths = emit_report(res, args.out)
    return {"rows": len(res.rows), "files": {k: str(v) for k, v in paths.items()}}


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "evaluate": cmd_evaluate,
            "sweep": cmd_sweep}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cvdemand", description="Cycle-by-cycle multi-phase demand estimation from CV data.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    helps = {"simulate": "simulate a scenario: CV trajectories, truth, plan, prior and profile",
             "estimate": "estimate per-cycle demands from CV trajectories",
             "evaluate": "score an estimates CSV against a ground-truth CSV",
             "sweep": "penetration x seed experiment with report files"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--scenario", help="scenario JSON, or 'reference' (default)")
        p.add_argument("--plan", help="signal plan JSON")
        p.add_argument("--trajectories", help="trajectory CSV")
        p.add_argument("--prior", help="prior JSON")
        p.add_argument("--profile", help="arrival profile JSON")
        p.add_argument("--methods", help=f"comma list from {','.join(METHODS)}")
        p.add_argument("--penetrations", help="comma list of rates in [0, 1]")
        p.add_argument("--seeds", help="count N (0..N-1), range A-B, or comma list")
        p.add_argument("--out", help="output directory (or file)")
        if name == "evaluate":
            p.add_argument("--estimates", help="estimates CSV")
            p.add_argument("--truth", help="ground-truth CSV")
        if name == "sweep":
            p.add_argument("--regroup", type=int, default=None,
                           help="split a single-phase scenario into N interleaved pseudo-phases")
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        summary = COMMANDS[args.command](args)
    except UsageError as exc:
        print(json.dumps({"error": "UsageError", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
