"""Accuracy metrics, penetration sweeps and report files."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import CycleTiming, SignalPlan, Trajectory, ValidatedPlan, validate_signal_plan
from .estimators import METHODS, DemandEstimate, SolverConfig
from .io import save_estimates
from .pipeline import (HistoricalModel, PreparedVehicle, RunOutput, build_historical,
                       estimate_cycles, group_evidence, prepare_population)
from .sim import GroundTruth, ScenarioConfig, cv_mask, simulate

log = logging.getLogger(__name__)

HISTORICAL_SEED_OFFSET = 104729   # historical population is a separate simulation run
HISTORICAL_SAMPLES = 10
HISTORICAL_SAMPLE_SEED = 1000


@dataclass(frozen=True)
class Metrics:
    mae_veh: float | None         # None when no estimate succeeded
    mape_frac: float | None       # None when no success has positive true demand
    success_rate: float
    total_M: int
    successes_S_M: int
    zero_demand_excluded: int = 0

    def to_json(self) -> dict:
        return {"mae": self.mae_veh, "mape": self.mape_frac, "sr": self.success_rate,
                "total": self.total_M, "successes": self.successes_S_M,
                "zero_demand_excluded": self.zero_demand_excluded}


def compute_metrics(estimates: Sequence[DemandEstimate], truth: GroundTruth) -> Metrics:
    """MAE and MAPE over successful estimates, SR = successes / targets.

    Targets with zero true demand stay in MAE and SR but are left out of MAPE.
    """
    M = len(estimates)
    ok = [e for e in estimates if e.ok]
    if not ok:
        return Metrics(None, None, 0.0, M, 0)
    D = np.array([truth.D(e.phase_id, e.cycle_index) for e in ok], dtype=float)
    Dh = np.array([e.demand_veh for e in ok], dtype=float)
    err = np.abs(Dh - D)
    pos = D > 0
    mape = float(np.mean(err[pos] / D[pos])) if pos.any() else None
    return Metrics(float(err.mean()), mape, len(ok) / M, M, len(ok), int((~pos).sum()))


# round-robin regrouping of one phase into pseudo-phases

def regroup_round_robin(plan: ValidatedPlan, trajectories: Sequence[Trajectory], truth: GroundTruth | None,
                        phase_id: str, groups: int):
    """Split one phase's cycles into ``groups`` interleaved pseudo-phases.

    Cycle ``k`` goes to pseudo-phase ``(k - 1) % groups`` as its cycle
    ``(k - 1) // groups + 1``. Each pseudo-phase's cycles are laid end to end
    from the first red start, and every trajectory is shifted with the cycle
    holding its stopline crossing (its last sample when it never crosses).
    Only whole rounds of ``groups`` cycles are kept.
    """
    if groups < 2:
        raise ValueError("groups must be >= 2")
    cfg = plan.phases[phase_id]
    seq = plan.cycles[phase_id]
    rounds = len(seq) // groups
    if rounds < 1:
        raise ValueError("fewer cycles than groups")
    ids = [f"{phase_id}#{g + 1}" for g in range(groups)]
    shift = {}      # original k -> (pseudo id, pseudo k, time shift)
    phases, cycles = {}, {}
    for g, gid in enumerate(ids):
        t = seq[0].red_start_s
        out = []
        for i in range(rounds):
            c = seq[i * groups + g]
            dt = t - c.red_start_s
            out.append(CycleTiming(i + 1, t, c.green_start_s + dt, c.green_duration_s, c.cycle_length_s))
            shift[c.k] = (gid, i + 1, dt)
            t += c.cycle_length_s
        phases[gid] = replace(cfg, phase_id=gid)
        cycles[gid] = tuple(out)
    new_plan = validate_signal_plan(SignalPlan(phases, cycles))
    start, end = plan.horizon(phase_id)
    new_traj = []
    for tr in trajectories:
        if tr.phase_id != phase_id:
            continue
        crossed = np.flatnonzero(tr.distances <= 0)
        t_ref = tr.times[crossed[0]] if crossed.size else tr.times[-1]
        if not start <= t_ref < end:
            continue
        k = seq[int(np.searchsorted(plan._red_starts[phase_id], t_ref, side="right")) - 1].k
        if k not in shift:
            continue
        gid, _, dt = shift[k]
        new_traj.append(Trajectory(tr.vehicle_id, gid, tr.times + dt, tr.distances, tr.speeds))
    new_truth = None
    if truth is not None:
        dem, vol, que = {}, {}, {}
        for g, gid in enumerate(ids):
            ks = [seq[i * groups + g].k for i in range(rounds)]
            dem[gid] = np.array([truth.D(phase_id, k) for k in ks], dtype=np.int64)
            vol[gid] = np.array([truth.volume[phase_id][k - 1] for k in ks], dtype=np.int64)
            q = [truth.initial_queue[phase_id][k - 1] for k in ks]
            que[gid] = np.array(q + [q[-1]], dtype=np.int64)
        new_truth = GroundTruth(dem, vol, que)
    return new_plan, new_traj, new_truth


# sweeps

@dataclass
class PreparedScenario:
    """One scenario's population and held-out historical population, prepared once."""

    scenario: ScenarioConfig
    plan: ValidatedPlan
    truth: GroundTruth
    prepared: list[PreparedVehicle]
    hist_plan: ValidatedPlan
    hist_prepared: list[PreparedVehicle]
    cycles: list[int]
    scored: list[int]
    _models: dict = field(default_factory=dict, repr=False)

    @property
    def phase_ids(self) -> list[str]:
        return list(self.plan.phase_ids)

    def historical_model(self, p: float) -> HistoricalModel:
        """Profile and prior from ``HISTORICAL_SAMPLES`` CV samples of the historical run."""
        if p not in self._models:
            n = len(self.hist_prepared)
            masks = [cv_mask(n, p, HISTORICAL_SAMPLE_SEED + j) for j in range(HISTORICAL_SAMPLES)]
            pid = self.phase_ids[0]
            horizon = (self.hist_plan.cycle(pid, self.cycles[0]).red_start_s,
                       self.hist_plan.cycle(pid, self.cycles[-1]).end_s)
            cfgs = [self.hist_plan.phases[q] for q in self.phase_ids]
            self._models[p] = build_historical(self.hist_prepared, masks, self.hist_plan, cfgs, horizon)
        return self._models[p]

    def run_cell(self, p: float, seed: int, methods: Sequence[str] = METHODS,
                 solver: SolverConfig = SolverConfig()) -> RunOutput:
        ev = group_evidence(self.prepared, cv_mask(len(self.prepared), p, seed), self.phase_ids)
        return estimate_cycles(ev, self.plan, self.historical_model(p), self.cycles, methods,
                               self.scored, solver)


def prepare_scenario(scenario: ScenarioConfig, regroup: int | None = None) -> PreparedScenario:
    """Simulate the evaluation and historical populations and prepare every trajectory.

    With ``regroup`` the scenario must have one phase, which is split into
    that many interleaved pseudo-phases before estimation.
    """
    runs = [simulate(scenario), simulate(replace(scenario, seed=scenario.seed + HISTORICAL_SEED_OFFSET))]
    cycles = list(range(1, scenario.n_cycles + 1))
    scored = list(scenario.scored_cycles)
    out = []
    for r in runs:
        plan, traj, truth = r.plan, r.trajectories, r.truth
        if regroup is not None:
            if len(scenario.phases) != 1:
                raise ValueError("regrouping needs a single-phase scenario")
            plan, traj, truth = regroup_round_robin(plan, traj, truth, scenario.phase_ids[0], regroup)
        out.append((plan, truth, prepare_population(traj, plan)))
    if regroup is not None:
        rounds = scenario.n_cycles // regroup
        cycles = list(range(1, rounds + 1))
        warm = math.ceil(scenario.warmup_cycles / regroup)
        scored = cycles[warm:]
    (plan, truth, prep), (hplan, _, hprep) = out
    return PreparedScenario(scenario, plan, truth, prep, hplan, hprep, cycles, scored)


@dataclass(frozen=True)
class SweepRow:
    method: str
    penetration: float
    seed: int
    metrics: Metrics | None
    error: str | None = None


@dataclass
class SweepResult:
    rows: list[SweepRow]
    estimates: list[tuple[float, int, DemandEstimate]]   # (penetration, seed, estimate)
    methods: tuple[str, ...]
    penetrations: tuple[float, ...]
    seeds: tuple[int, ...]

    def cell(self, method: str, penetration: float) -> list[Metrics]:
        return [r.metrics for r in self.rows
                if r.method == method and r.penetration == penetration and r.metrics is not None]

    def mean(self, method: str, penetration: float, attr: str) -> float:
        vals = [getattr(m, attr) for m in self.cell(method, penetration)]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else float("nan")


def run_sweep(scenario: ScenarioConfig | PreparedScenario, penetrations: Sequence[float],
              seeds: Sequence[int], methods: Sequence[str] = METHODS, regroup: int | None = None,
              solver: SolverConfig = SolverConfig()) -> SweepResult:
    """Every (penetration, seed) cell runs all methods; a failing cell is recorded, not raised."""
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    ps = scenario if isinstance(scenario, PreparedScenario) else prepare_scenario(scenario, regroup)
    rows, records = [], []
    for p in penetrations:
        for s in seeds:
            try:
                out = ps.run_cell(p, s, methods, solver)
            except Exception as exc:  # one bad cell must not abort the sweep
                log.warning("cell p=%s seed=%s failed: %s", p, s, exc)
                err = f"{type(exc).__name__}: {exc}"
                for m in methods:
                    rows.append(SweepRow(m, p, s, None, err))
                    for k in ps.scored:
                        for pid in ps.phase_ids:
                            records.append((p, s, DemandEstimate(pid, k, float("nan"), float("nan"),
                                                                 m, "failed")))
                continue
            for m in methods:
                ests = [e for e in out.estimates if e.method == m]
                rows.append(SweepRow(m, p, s, compute_metrics(ests, ps.truth)))
                records.extend((p, s, e) for e in ests)
    return SweepResult(rows, records, tuple(methods), tuple(penetrations), tuple(seeds))


def emit_report(result: SweepResult, out_dir) -> dict[str, Path]:
    """Write estimates.csv, metrics.json and plot.csv into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"estimates": out / "estimates.csv", "metrics": out / "metrics.json",
             "plot": out / "plot.csv"}
    save_estimates([e for _, _, e in result.estimates], paths["estimates"],
                   extra=[("penetration", [repr(float(p)) for p, _, _ in result.estimates]),
                          ("seed", [str(s) for _, s, _ in result.estimates])])
    cells = []
    for r in result.rows:
        d = {"method": r.method, "penetration": r.penetration, "seed": r.seed}
        if r.metrics is not None:
            d.update(r.metrics.to_json())
        else:
            d.update({"mae": None, "mape": None, "sr": None, "error": r.error})
        cells.append(d)
    summary = []
    order = {m: i for i, m in enumerate(result.methods)}
    keys = sorted({(r.penetration, r.method) for r in result.rows}, key=lambda x: (x[0], order[x[1]]))
    for p, m in keys:
        ms = result.cell(m, p)
        row = {"method": m, "penetration": p, "cells": len(ms)}
        for name, attr in (("mae", "mae_veh"), ("mape", "mape_frac"), ("sr", "success_rate")):
            vals = np.array([getattr(x, attr) for x in ms if getattr(x, attr) is not None], dtype=float)
            row[f"{name}_mean"] = float(vals.mean()) if vals.size else None
            row[f"{name}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else (0.0 if vals.size else None)
        summary.append(row)
    paths["metrics"].write_text(json.dumps({"cells": cells, "summary": summary}, indent=2,
                                           sort_keys=True) + "\n")
    cols = ["method", "penetration", "cells", "mae_mean", "mae_std", "mape_mean", "mape_std",
            "sr_mean", "sr_std"]
    with open(paths["plot"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in summary:
            w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                        for c in cols])
    return paths
