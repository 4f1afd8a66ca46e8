"""Seeded multi-phase signalized intersection simulator with ground truth.

Each phase is a lane group behind its own stopline. Vehicles enter the
detection range at free-flow speed, pick the lane with the fewest vehicles
not yet across the stopline, and follow Newell's simplified car-following
rule: a follower trails its leader's trajectory shifted by ``tau`` in time
and ``l0`` in space. With wave speed ``w`` chosen so that
``h_s = l0 * (1/w + 1/v)`` a standing queue discharges at exactly one vehicle
per ``h_s`` per lane, stopped vehicles sit ``l0`` apart, and vehicles that
are not served before red stop a second time further down the queue.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .domain import CycleTiming, PhaseConfig, SignalPlan, Trajectory, ValidatedPlan, validate_signal_plan

RANDOM = "random"
PLATOON = "platoon"


@dataclass(frozen=True)
class ArrivalPattern:
    kind: str = RANDOM
    window_start_frac: float = 0.0
    window_len_frac: float = 1.0
    inside_mass: float = 1.0

    def __post_init__(self):
        if self.kind not in (RANDOM, PLATOON):
            raise ValueError(f"unknown arrival pattern {self.kind!r}")
        if self.kind == PLATOON:
            if not 0 < self.inside_mass <= 1:
                raise ValueError("inside_mass must be in (0, 1]")
            if not (0 <= self.window_start_frac and self.window_len_frac > 0
                    and self.window_start_frac + self.window_len_frac <= 1 + 1e-12):
                raise ValueError("platoon window must lie inside the cycle")


@dataclass(frozen=True)
class PhaseScenario:
    """One phase: geometry, timing within the common cycle and its demand."""

    phase: PhaseConfig
    green_duration_s: float
    red_offset_s: float          # first red start relative to the scenario start
    mean_demand: float           # veh/cycle, whole lane group
    pattern: ArrivalPattern = ArrivalPattern()
    demand_shift_rad: float = 0.0
    demand_sequence: tuple[float, ...] | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    phases: tuple[PhaseScenario, ...]
    cycle_length_s: float = 120.0
    n_cycles: int = 81                 # cycles that receive arrivals
    warmup_cycles: int = 1             # leading cycles left out of scoring
    drain_cycles: int = 3              # trailing arrival-free cycles so queues clear
    start_s: float = 60.0
    sat_headway_s: float = 2.0
    detection_range_m: float = 400.0
    exit_distance_m: float = 60.0      # beyond one report interval of travel
    report_interval_s: float = 3.0
    position_noise_std_m: float = 0.0
    penetration: float = 1.0
    seed: int = 0
    demand_amplitude: float = 0.15
    demand_period_cycles: float = 40.0
    demand_noise_cv: float = 0.0       # per phase-cycle multiplicative gamma noise on the mean
    time_step_s: float = 0.5
    amber_s: float = 3.0               # vehicles this close to red onset still clear the stopline

    def __post_init__(self):
        if not 0 <= self.penetration <= 1:
            raise ValueError("penetration must be in [0, 1]")
        if not self.report_interval_s > 0:
            raise ValueError("report_interval_s must be > 0")
        if self.n_cycles < 1 or self.warmup_cycles < 0 or self.drain_cycles < 0:
            raise ValueError("cycle counts must be nonnegative (n_cycles >= 1)")
        if self.amber_s < 0 or not self.time_step_s > 0:
            raise ValueError("amber_s must be >= 0 and time_step_s > 0")
        if self.warmup_cycles >= self.n_cycles:
            raise ValueError("warmup_cycles must leave at least one scored cycle")
        if len({ps.phase.phase_id for ps in self.phases}) != len(self.phases):
            raise ValueError("duplicate phase ids")
        for ps in self.phases:
            p = ps.phase
            if not self.sat_headway_s > p.jam_spacing_m / p.free_flow_speed_mps:
                raise ValueError(f"phase {p.phase_id}: sat headway too short for jam spacing and speed")
            if ps.demand_sequence is not None and len(ps.demand_sequence) != self.n_cycles:
                raise ValueError(f"phase {p.phase_id}: demand_sequence needs n_cycles entries")
            if ps.mean_demand < 0:
                raise ValueError(f"phase {p.phase_id}: negative demand")

    @property
    def phase_ids(self) -> list[str]:
        return [ps.phase.phase_id for ps in self.phases]

    @property
    def phase_configs(self) -> list[PhaseConfig]:
        return [ps.phase for ps in self.phases]

    @property
    def scored_cycles(self) -> range:
        return range(self.warmup_cycles + 1, self.n_cycles + 1)

    def cycle_demand(self, ps: PhaseScenario) -> np.ndarray:
        """Mean demand of each arrival cycle, veh/cycle."""
        if ps.demand_sequence is not None:
            return np.asarray(ps.demand_sequence, dtype=float)
        k = np.arange(1, self.n_cycles + 1)
        wave = np.sin(2 * np.pi * k / self.demand_period_cycles + ps.demand_shift_rad)
        return np.maximum(ps.mean_demand * (1 + self.demand_amplitude * wave), 0.0)

    def to_json(self) -> dict:
        d = asdict(self)
        for ph in d["phases"]:
            if ph["demand_sequence"] is not None:
                ph["demand_sequence"] = list(ph["demand_sequence"])
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioConfig":
        obj = dict(obj)
        phases = []
        for ph in obj.pop("phases"):
            ph = dict(ph)
            seq = ph.pop("demand_sequence", None)
            phases.append(PhaseScenario(PhaseConfig(**ph.pop("phase")),
                                        pattern=ArrivalPattern(**ph.pop("pattern", {})),
                                        demand_sequence=None if seq is None else tuple(seq),
                                        **ph))
        return cls(phases=tuple(phases), **obj)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class GroundTruth:
    """Per phase arrays indexed by cycle ``k = 1..K``; ``initial_queue`` has K+1 entries."""

    demand: dict[str, np.ndarray]
    volume: dict[str, np.ndarray]
    initial_queue: dict[str, np.ndarray]

    def cycles(self, phase_id: str) -> range:
        return range(1, self.demand[phase_id].size + 1)

    def D(self, phase_id: str, k: int) -> int:
        return int(self.demand[phase_id][k - 1])

    def to_csv(self, path) -> None:
        lines = ["phase_id,cycle_index,demand,volume,initial_queue"]
        for pid in self.demand:
            d, v, q = self.demand[pid], self.volume[pid], self.initial_queue[pid]
            for i in range(d.size):
                lines.append(f"{pid},{i + 1},{int(d[i])},{int(v[i])},{int(q[i])}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "GroundTruth":
        rows: dict[str, list[tuple[int, int, int, int]]] = {}
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header != ["phase_id", "cycle_index", "demand", "volume", "initial_queue"]:
                raise ValueError(f"unexpected ground-truth header {header}")
            for line in fh:
                if not line.strip():
                    continue
                pid, k, d, v, q = line.strip().split(",")
                rows.setdefault(pid, []).append((int(k), int(d), int(v), int(q)))
        dem, vol, que = {}, {}, {}
        for pid, r in rows.items():
            r.sort()
            arr = np.array(r, dtype=np.int64)
            dem[pid], vol[pid] = arr[:, 1], arr[:, 2]
            # the queue after the last listed cycle is implied by conservation
            tail = arr[-1, 3] + arr[-1, 1] - arr[-1, 2]
            que[pid] = np.append(arr[:, 3], tail)
        return cls(dem, vol, que)


@dataclass
class PhaseRun:
    """Raw simulation output for one phase, kept for analysis and emission."""

    phase_id: str
    arrivals: np.ndarray
    crossings: np.ndarray
    lanes: np.ndarray
    start_step: np.ndarray
    offsets: np.ndarray
    positions: np.ndarray


@dataclass
class SimulationResult:
    scenario: ScenarioConfig
    plan: ValidatedPlan
    trajectories: list[Trajectory]
    truth: GroundTruth
    runs: dict[str, PhaseRun] = field(default_factory=dict)


def build_plan(scenario: ScenarioConfig) -> ValidatedPlan:
    """Fixed-time plan: every phase runs red then green within each of its cycles."""
    C = scenario.cycle_length_s
    K = scenario.n_cycles + scenario.drain_cycles
    phases, cycles = {}, {}
    for ps in scenario.phases:
        pid = ps.phase.phase_id
        phases[pid] = ps.phase
        r0 = scenario.start_s + ps.red_offset_s
        G = ps.green_duration_s
        cycles[pid] = tuple(CycleTiming(k, r0 + (k - 1) * C, r0 + (k - 1) * C + C - G, G, C)
                            for k in range(1, K + 1))
    return validate_signal_plan(SignalPlan(phases, cycles))


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def generate_arrivals(scenario: ScenarioConfig, plan: ValidatedPlan | None = None) -> dict[str, np.ndarray]:
    """Free-flow stopline arrival times per phase, sorted."""
    plan = plan or build_plan(scenario)
    rngs = _streams(scenario.seed, len(scenario.phases))
    C = scenario.cycle_length_s
    out = {}
    for ps, rng in zip(scenario.phases, rngs):
        pid = ps.phase.phase_id
        means = scenario.cycle_demand(ps)
        if scenario.demand_noise_cv > 0:
            shape = 1.0 / scenario.demand_noise_cv ** 2
            means = means * rng.gamma(shape, 1.0 / shape, means.size)
        starts = np.array([plan.cycle(pid, k).red_start_s for k in range(1, scenario.n_cycles + 1)])
        counts = rng.poisson(means)
        chunks = []
        pat = ps.pattern
        for r, n in zip(starts, counts):
            if pat.kind == PLATOON:
                inside = rng.binomial(n, pat.inside_mass)
                t_in = r + C * (pat.window_start_frac + pat.window_len_frac * rng.random(inside))
                t_out = r + C * rng.random(n - inside)
                chunks.append(np.concatenate((t_in, t_out)))
            else:
                chunks.append(r + C * rng.random(n))
        arr = np.sort(np.concatenate(chunks)) if chunks else np.zeros(0)
        out[pid] = arr
    return out


def _signal_grid(plan: ValidatedPlan, pid: str, dt: float, n_grid: int, amber: float, tau: float):
    """Per-step red flag and green start of the physical signal.

    Stopping starts ``amber`` seconds after the planned red start and the
    standing queue starts moving ``amber`` seconds after the planned green
    start, so discharge lasts exactly the planned (effective) green.
    """
    t = np.arange(n_grid) * dt - amber
    starts = plan._red_starts[pid]
    idx = np.searchsorted(starts, t, side="right") - 1
    seq = plan.cycles[pid]
    greens = np.array([c.green_start_s for c in seq])
    gend = np.array([c.green_end_s for c in seq])
    valid = idx >= 0
    gs = np.where(valid, greens[np.clip(idx, 0, None)], -np.inf)
    ge = np.where(valid, gend[np.clip(idx, 0, None)], np.inf)
    is_red = valid & ((t < gs) | (t >= ge)) & (t < plan._ends[pid])
    return (np.ascontiguousarray(is_red, dtype=np.uint8),
            np.ascontiguousarray(gs + amber - tau, dtype=float))


def _emit(run: PhaseRun, i: int, dt: float, v: float, interval: float, phase_u: float,
          noise: float, rng: np.random.Generator | None, detection_range: float) -> Trajectory:
    pos = run.positions[run.offsets[i]:run.offsets[i + 1]]
    t0 = run.start_step[i] * dt
    grid_t = t0 + dt * np.arange(pos.size)
    first = math.ceil((grid_t[0] - phase_u) / interval)
    last = math.floor((grid_t[-1] - phase_u) / interval)
    ts = phase_u + interval * np.arange(first, last + 1)
    x = np.interp(ts, grid_t, pos)
    seg = np.minimum(((ts - t0) / dt).astype(np.int64), pos.size - 2)
    speed = np.maximum((pos[seg + 1] - pos[seg]) / dt, 0.0)
    dist = -x
    keep = dist <= detection_range
    ts, dist, speed = ts[keep], dist[keep], speed[keep]
    if noise > 0 and rng is not None:
        dist = dist + rng.normal(0.0, noise, dist.size)
    return Trajectory(f"{run.phase_id}-{i:05d}", run.phase_id, ts, dist, speed)


def simulate_intersection(arrivals: dict[str, np.ndarray], plan: ValidatedPlan,
                          scenario: ScenarioConfig) -> SimulationResult:
    """Run every phase, emit sampled trajectories and count the ground truth."""
    dt = scenario.time_step_s
    n_grid = int(math.ceil((max(plan._ends.values()) + scenario.amber_s) / dt)) + 1
    rngs = _streams(scenario.seed + 7919, 3 * len(scenario.phases))
    trajectories = []
    runs = {}
    dem, vol, que = {}, {}, {}
    for zi, ps in enumerate(scenario.phases):
        cfg = ps.phase
        pid = cfg.phase_id
        arr = np.ascontiguousarray(np.sort(arrivals.get(pid, np.zeros(0))), dtype=float)
        start, end = plan.horizon(pid)
        if arr.size and (arr[0] < start or arr[-1] >= end):
            raise ValueError(f"phase {pid}: arrivals outside the plan horizon")
        v = cfg.free_flow_speed_mps
        l0 = cfg.jam_spacing_m
        w = 1.0 / (scenario.sat_headway_s / l0 - 1.0 / v)
        tau = l0 / w
        is_red, green_start = _signal_grid(plan, pid, dt, n_grid, scenario.amber_s, tau)
        tie_u = rngs[3 * zi].random(arr.size)
        lane, st, off, pos, cross = kernels.simulate_phase(
            arr, cfg.lane_count, is_red, green_start, dt, v, l0, tau,
            scenario.detection_range_m, scenario.exit_distance_m, tie_u)
        run = PhaseRun(pid, arr, np.asarray(cross), np.asarray(lane), np.asarray(st),
                       np.asarray(off), np.asarray(pos))
        runs[pid] = run
        phase_u = rngs[3 * zi + 1].random(arr.size) * scenario.report_interval_s
        noise_rng = rngs[3 * zi + 2]
        for i in range(arr.size):
            trajectories.append(_emit(run, i, dt, v, scenario.report_interval_s, phase_u[i],
                                      scenario.position_noise_std_m, noise_rng,
                                      scenario.detection_range_m))
        reds = np.append(plan._red_starts[pid], end)
        d_k = np.histogram(arr, bins=reds)[0]
        v_k = np.histogram(run.crossings, bins=reds)[0]
        # vehicles that should have arrived before red start but are still upstream
        q_k = np.array([np.count_nonzero((arr < r) & (run.crossings >= r)) for r in reds])
        dem[pid], vol[pid], que[pid] = d_k, v_k, q_k
    return SimulationResult(scenario, plan, trajectories, GroundTruth(dem, vol, que), runs)


def simulate(scenario: ScenarioConfig) -> SimulationResult:
    plan = build_plan(scenario)
    return simulate_intersection(generate_arrivals(scenario, plan), plan, scenario)


def sample_cvs(population: Sequence[Trajectory], p: float, seed: int) -> list[Trajectory]:
    """Independent Bernoulli(p) selection per vehicle."""
    return [population[i] for i in np.flatnonzero(cv_mask(len(population), p, seed))]


def cv_mask(n: int, p: float, seed: int) -> np.ndarray:
    """Selection mask behind :func:`sample_cvs`.

    A vehicle is a CV when its uniform draw falls below ``p``; one draw per
    vehicle per seed, so masks at different rates are nested for a fixed seed.
    """
    if not 0 <= p <= 1:
        raise ValueError("penetration must be in [0, 1]")
    return np.random.default_rng(seed).random(n) < p


def with_seed(scenario: ScenarioConfig, seed: int) -> ScenarioConfig:
    return replace(scenario, seed=seed)
