"""Shared vocabulary: trajectories, phases, cycle timings and signal plans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

CONTIGUITY_TOL = 1e-9


class PlanError(ValueError):
    """Raised when a signal plan is malformed or a time falls outside it."""


class TrajectoryError(ValueError):
    pass


class TrajectoryPoint(NamedTuple):
    timestamp_s: float
    distance_to_stopline_m: float
    speed_mps: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered samples of one vehicle approaching one phase.

    Distances are signed: positive upstream of the stopline, ``<= 0`` once the
    vehicle has crossed it. Samples are held as parallel float arrays.
    """

    vehicle_id: str
    phase_id: str
    times: np.ndarray
    distances: np.ndarray
    speeds: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        d = np.ascontiguousarray(self.distances, dtype=float)
        v = np.ascontiguousarray(self.speeds, dtype=float)
        if not (t.shape == d.shape == v.shape) or t.ndim != 1:
            raise TrajectoryError(f"{self.vehicle_id}: sample arrays differ in shape")
        if t.size < 2:
            raise TrajectoryError(f"{self.vehicle_id}: need at least 2 samples")
        if not np.all(np.isfinite(t)):
            raise TrajectoryError(f"{self.vehicle_id}: non-finite timestamp")
        if np.any(np.diff(t) <= 0):
            raise TrajectoryError(f"{self.vehicle_id}: timestamps not strictly increasing")
        if np.any(v < 0):
            raise TrajectoryError(f"{self.vehicle_id}: negative speed")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "speeds", v)

    @classmethod
    def from_points(cls, vehicle_id, phase_id, points) -> "Trajectory":
        arr = np.asarray([tuple(p) for p in points], dtype=float).reshape(-1, 3)
        return cls(str(vehicle_id), str(phase_id), arr[:, 0], arr[:, 1], arr[:, 2])

    @property
    def points(self) -> list[TrajectoryPoint]:
        return [TrajectoryPoint(*row) for row in zip(self.times.tolist(),
                                                      self.distances.tolist(),
                                                      self.speeds.tolist())]

    def __len__(self):
        return self.times.size

    def shifted(self, dt: float) -> "Trajectory":
        return Trajectory(self.vehicle_id, self.phase_id, self.times + dt,
                          self.distances, self.speeds)


@dataclass(frozen=True)
class PhaseConfig:
    phase_id: str
    lane_count: int
    jam_spacing_m: float = 6.0
    free_flow_speed_mps: float = 12.0

    def __post_init__(self):
        if int(self.lane_count) != self.lane_count or self.lane_count < 1:
            raise PlanError(f"phase {self.phase_id}: lane_count must be an integer >= 1")
        if not self.jam_spacing_m > 0:
            raise PlanError(f"phase {self.phase_id}: jam_spacing_m must be > 0")
        if not self.free_flow_speed_mps > 0:
            raise PlanError(f"phase {self.phase_id}: free_flow_speed_mps must be > 0")


@dataclass(frozen=True)
class CycleTiming:
    k: int
    red_start_s: float
    green_start_s: float
    green_duration_s: float
    cycle_length_s: float

    @property
    def end_s(self) -> float:
        return self.red_start_s + self.cycle_length_s

    @property
    def green_end_s(self) -> float:
        return self.green_start_s + self.green_duration_s


@dataclass(frozen=True)
class SignalPlan:
    phases: dict[str, PhaseConfig]
    cycles: dict[str, tuple[CycleTiming, ...]]

    @property
    def phase_ids(self) -> list[str]:
        return list(self.phases)


@dataclass(frozen=True)
class ValidatedPlan(SignalPlan):
    """A plan whose cycles are known to be contiguous; carries lookup arrays."""

    _red_starts: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _ends: dict[str, float] = field(default_factory=dict, repr=False)

    def cycle(self, phase_id: str, k: int) -> CycleTiming:
        seq = self.cycles[phase_id]
        idx = k - seq[0].k
        if idx < 0 or idx >= len(seq):
            raise PlanError(f"phase {phase_id}: no cycle {k}")
        return seq[idx]

    def horizon(self, phase_id: str) -> tuple[float, float]:
        return float(self._red_starts[phase_id][0]), self._ends[phase_id]

    def cycle_indices(self, phase_id: str) -> list[int]:
        return [c.k for c in self.cycles[phase_id]]

    def iter_cycles(self, phase_id: str) -> Iterator[CycleTiming]:
        return iter(self.cycles[phase_id])


def validate_signal_plan(plan: SignalPlan) -> ValidatedPlan:
    """Check per-phase contiguity and green bounds; return a lookup-ready plan."""
    if not plan.phases:
        raise PlanError("plan has no phases")
    red_starts = {}
    ends = {}
    for pid, cfg in plan.phases.items():
        seq = tuple(plan.cycles.get(pid, ()))
        if not seq:
            raise PlanError(f"phase {pid}: empty cycle list")
        for c in seq:
            if not (c.cycle_length_s > 0 and math.isfinite(c.red_start_s)):
                raise PlanError(f"phase {pid} cycle {c.k}: invalid cycle length or start")
            if not 0 < c.green_duration_s:
                raise PlanError(f"phase {pid} cycle {c.k}: green must be positive")
            if c.green_duration_s >= c.cycle_length_s:
                raise PlanError(f"phase {pid} cycle {c.k}: green >= cycle")
            if (c.green_start_s < c.red_start_s - CONTIGUITY_TOL
                    or c.green_end_s > c.end_s + CONTIGUITY_TOL):
                raise PlanError(f"phase {pid} cycle {c.k}: green window outside cycle")
        for prev, nxt in zip(seq, seq[1:]):
            if nxt.k != prev.k + 1:
                raise PlanError(f"phase {pid}: cycle indices not consecutive at {prev.k}")
            gap = nxt.red_start_s - prev.end_s
            if gap > CONTIGUITY_TOL:
                raise PlanError(f"phase {pid}: gap between cycles {prev.k} and {nxt.k}")
            if gap < -CONTIGUITY_TOL:
                raise PlanError(f"phase {pid}: overlap between cycles {prev.k} and {nxt.k}")
        red_starts[pid] = np.array([c.red_start_s for c in seq])
        ends[pid] = seq[-1].end_s
    extra = set(plan.cycles) - set(plan.phases)
    if extra:
        raise PlanError(f"cycles given for unknown phases: {sorted(extra)}")
    return ValidatedPlan(dict(plan.phases), {p: tuple(plan.cycles[p]) for p in plan.phases},
                         red_starts, ends)


def locate_cycle(plan: ValidatedPlan, phase_id: str, time_s: float) -> int:
    """Index k of the cycle with ``red_start_k <= time_s < red_start_{k+1}``."""
    starts = plan._red_starts[phase_id]
    if not (starts[0] <= time_s < plan._ends[phase_id]):
        raise PlanError(f"phase {phase_id}: time {time_s} outside plan horizon")
    idx = int(np.searchsorted(starts, time_s, side="right")) - 1
    return plan.cycles[phase_id][idx].k
