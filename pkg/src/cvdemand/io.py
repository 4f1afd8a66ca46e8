"""File formats: signal plans (JSON), trajectories and estimates (CSV)."""

from __future__ import annotations

import csv
import json
import math
from collections import OrderedDict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import (CycleTiming, PhaseConfig, SignalPlan, Trajectory, TrajectoryError,
                     ValidatedPlan, validate_signal_plan)
from .estimators import DemandEstimate

TRAJECTORY_HEADER = ["vehicle_id", "phase_id", "timestamp_s", "distance_to_stopline_m", "speed_mps"]
ESTIMATE_HEADER = ["method", "phase_id", "cycle_index", "demand_veh", "lane_rate_vps", "lambda0",
                   "alpha", "status", "iterations"]


def plan_to_json(plan: SignalPlan) -> dict:
    phases = []
    for pid, cfg in plan.phases.items():
        phases.append({
            "phase_id": pid,
            "lane_count": cfg.lane_count,
            "jam_spacing_m": cfg.jam_spacing_m,
            "free_flow_speed_mps": cfg.free_flow_speed_mps,
            "cycles": [{"k": c.k, "red_start_s": c.red_start_s, "green_start_s": c.green_start_s,
                        "green_duration_s": c.green_duration_s, "cycle_length_s": c.cycle_length_s}
                       for c in plan.cycles[pid]],
        })
    return {"phases": phases}


def plan_from_json(obj: dict) -> ValidatedPlan:
    phases, cycles = {}, {}
    for ph in obj["phases"]:
        pid = str(ph["phase_id"])
        phases[pid] = PhaseConfig(pid, int(ph["lane_count"]), float(ph.get("jam_spacing_m", 6.0)),
                                  float(ph.get("free_flow_speed_mps", 12.0)))
        cycles[pid] = tuple(CycleTiming(int(c["k"]), float(c["red_start_s"]), float(c["green_start_s"]),
                                        float(c["green_duration_s"]), float(c["cycle_length_s"]))
                            for c in ph["cycles"])
    return validate_signal_plan(SignalPlan(phases, cycles))


def save_plan(plan: SignalPlan, path) -> None:
    Path(path).write_text(json.dumps(plan_to_json(plan), indent=2))


def load_plan(path) -> ValidatedPlan:
    return plan_from_json(json.loads(Path(path).read_text()))


def save_trajectories(trajectories: Iterable[Trajectory], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for tr in trajectories:
            for t, d, v in zip(tr.times.tolist(), tr.distances.tolist(), tr.speeds.tolist()):
                w.writerow([tr.vehicle_id, tr.phase_id, repr(t), repr(d), repr(v)])


def load_trajectories(path) -> list[Trajectory]:
    """Read a trajectory CSV; rows of one vehicle must be contiguous."""
    groups: OrderedDict[str, tuple[str, list]] = OrderedDict()
    last = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRAJECTORY_HEADER:
            raise TrajectoryError(f"unexpected trajectory header {header}")
        for row in reader:
            if not row:
                continue
            vid, pid = row[0], row[1]
            if vid != last and vid in groups:
                raise TrajectoryError(f"{vid}: rows not grouped by vehicle")
            last = vid
            entry = groups.setdefault(vid, (pid, []))
            if entry[0] != pid:
                raise TrajectoryError(f"{vid}: more than one phase")
            entry[1].append((float(row[2]), float(row[3]), float(row[4])))
    out = []
    for vid, (pid, pts) in groups.items():
        arr = np.asarray(pts, dtype=float)
        out.append(Trajectory(vid, pid, arr[:, 0], arr[:, 1], arr[:, 2]))
    return out


def _fmt(x: float) -> str:
    return "" if not math.isfinite(x) else repr(float(x))


def estimate_rows(estimates: Iterable[DemandEstimate]) -> list[list[str]]:
    return [[e.method, e.phase_id, str(e.cycle_index), _fmt(e.demand_veh), _fmt(e.lane_rate_vps),
             _fmt(e.lambda0), _fmt(e.alpha), e.status, str(e.iterations)] for e in estimates]


def save_estimates(estimates: Iterable[DemandEstimate], path,
                   extra: Sequence[tuple[str, Sequence[str]]] = ()) -> None:
    """Estimates CSV; ``extra`` prepends (column, per-row values) pairs."""
    rows = estimate_rows(estimates)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c for c, _ in extra] + ESTIMATE_HEADER)
        for i, r in enumerate(rows):
            w.writerow([vals[i] for _, vals in extra] + r)


def load_estimates(path) -> list[DemandEstimate]:
    def num(s):
        return float(s) if s != "" else float("nan")

    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(DemandEstimate(row["phase_id"], int(row["cycle_index"]), num(row["demand_veh"]),
                                      num(row["lane_rate_vps"]), row["method"], row["status"],
                                      num(row["lambda0"]), num(row["alpha"]), int(row["iterations"])))
    return out
