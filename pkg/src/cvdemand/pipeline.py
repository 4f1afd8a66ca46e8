"""Cycle-by-cycle demand estimation from CV trajectories.

Trajectory preparation runs once per vehicle and is cached; a penetration
sample is then just a boolean mask over the prepared population. Each method
keeps its own initial-queue recursion, fed by its own previous-cycle rates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .domain import PhaseConfig, PlanError, Trajectory, ValidatedPlan, locate_cycle
from .estimators import (JOMLE, METHODS, WMLE, DemandEstimate, SolverConfig,
                         jomap, jomle, sufficient_stats, wmle)
from .initial_queue import (InitialQueueState, adjust_observations, conservation_estimate,
                            cv_bounds, finalize_initial_queue)
from .prior import PhaseCountSeries, PriorSpec, build_prior, count_series
from .profile import ArrivalProfile, build_profile, observation_weights, uniform_profile
from .trajectory import (QUEUE_SPEED_THRESHOLD_MPS, ArrivalObservation, CvKind, CvType,
                         InsufficientDataError, classify_cv, crossing_index, crossing_time,
                         derive_observation, detect_queue_events, expected_arrival_time,
                         fit_saturation_rate)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreparedVehicle:
    """Everything estimation needs from one trajectory."""

    phase_id: str
    expected_arrival_s: float                 # NaN when neither stopped nor crossed
    cycle_index: int                          # cycle of the expected arrival, 0 if outside the plan
    observation: ArrivalObservation | None    # first stop, raw queuing position
    cv_type: CvType | None
    # (cycle of the leave instant, leave time, leave distance, stopline speed)
    departures: tuple[tuple[int, float, float, float], ...] = ()


def prepare_vehicle(traj: Trajectory, plan: ValidatedPlan, cfg: PhaseConfig,
                    threshold: float = QUEUE_SPEED_THRESHOLD_MPS) -> PreparedVehicle:
    events = detect_queue_events(traj, threshold, cfg.jam_spacing_m)
    ctype = classify_cv(traj, events, cfg.jam_spacing_m, plan)
    obs = None
    if events:
        exp_t = expected_arrival_time(events[0], traj, cfg, threshold)
        try:
            obs = derive_observation(events[0], traj, plan, cfg, threshold)
        except PlanError:
            obs = None
        if obs is not None and (obs.arrival_offset_s <= 0 or events[0].join_time_s
                                < plan.cycle(traj.phase_id, obs.cycle_index).red_start_s):
            # joined a queue still discharging in the previous cycle: the vehicles
            # ahead were neither this cycle's arrivals nor its initial queue
            obs = None
    else:
        exp_t = crossing_time(traj)
    k = 0
    if math.isfinite(exp_t):
        try:
            k = locate_cycle(plan, traj.phase_id, exp_t)
        except PlanError:
            k = 0
    if ctype is not None and ctype.kind is CvKind.TYPE3 and k > 0 \
            and exp_t < plan.cycle(traj.phase_id, k).green_start_s:
        # crossed on the amber at red onset: says nothing about the queue clearing
        ctype = None
    deps = []
    ci = crossing_index(traj)
    if events and ci >= 0:
        v_stop = float(traj.speeds[ci])
        for ev in events:
            try:
                kc = locate_cycle(plan, traj.phase_id, ev.leave_time_s)
            except PlanError:
                continue
            c = plan.cycle(traj.phase_id, kc)
            if c.green_start_s <= ev.leave_time_s <= c.green_end_s:
                deps.append((kc, ev.leave_time_s, ev.leave_distance_m, v_stop))
    return PreparedVehicle(traj.phase_id, float(exp_t), k, obs, ctype, tuple(deps))


def prepare_population(trajectories: Sequence[Trajectory], plan: ValidatedPlan,
                       threshold: float = QUEUE_SPEED_THRESHOLD_MPS) -> list[PreparedVehicle]:
    return [prepare_vehicle(t, plan, plan.phases[t.phase_id], threshold) for t in trajectories]


@dataclass
class CycleEvidence:
    """CV evidence of one sample grouped by phase and cycle."""

    observations: dict[str, dict[int, list[ArrivalObservation]]]
    types: dict[str, dict[int, list[CvType]]]
    type1_positions: dict[str, dict[int, list[int]]]
    departures: dict[str, dict[int, list[tuple[float, float, float]]]]


def group_evidence(prepared: Sequence[PreparedVehicle], mask: np.ndarray | None,
                   phase_ids: Iterable[str]) -> CycleEvidence:
    obs = {p: {} for p in phase_ids}
    types = {p: {} for p in obs}
    t1 = {p: {} for p in obs}
    deps = {p: {} for p in obs}
    idx = range(len(prepared)) if mask is None else np.flatnonzero(mask)
    for i in idx:
        pv = prepared[i]
        if pv.phase_id not in obs:
            continue
        if pv.observation is not None:
            obs[pv.phase_id].setdefault(pv.observation.cycle_index, []).append(pv.observation)
        if pv.cv_type is not None and pv.cycle_index > 0:
            types[pv.phase_id].setdefault(pv.cycle_index, []).append(pv.cv_type)
            # any first stop joined in this red sits behind the whole initial queue,
            # whether or not the vehicle then clears on this green
            if pv.cv_type.kind is not CvKind.TYPE3 and pv.observation is not None:
                t1[pv.phase_id].setdefault(pv.cycle_index, []).append(pv.observation.vehicles_ahead)
        for kc, t, d, v in pv.departures:
            deps[pv.phase_id].setdefault(kc, []).append((t, d, v))
    return CycleEvidence(obs, types, t1, deps)


def departure_pool(prepared: Sequence[PreparedVehicle], masks: Iterable[np.ndarray | None],
                   plan: ValidatedPlan) -> dict[str, list[tuple[float, float, float]]]:
    """Queue-leaving points mapped into a common cycle (time since green start)."""
    pool: dict[str, list] = {p: [] for p in plan.phase_ids}
    for mask in masks:
        idx = range(len(prepared)) if mask is None else np.flatnonzero(mask)
        for i in idx:
            pv = prepared[i]
            for kc, t, d, v in pv.departures:
                pool[pv.phase_id].append((t - plan.cycle(pv.phase_id, kc).green_start_s, d, v))
    return pool


@dataclass
class HistoricalModel:
    """Profile, prior and saturation pool learned from held-out CV samples."""

    profiles: dict[str, ArrivalProfile]
    prior: PriorSpec
    departure_pool: dict[str, list[tuple[float, float, float]]] = field(default_factory=dict)


def build_historical(prepared: Sequence[PreparedVehicle], masks: Sequence[np.ndarray | None],
                     plan: ValidatedPlan, phase_configs: Sequence[PhaseConfig],
                     horizon: tuple[float, float], sat_headway_s: float | None = None,
                     bin_count: int = 20) -> HistoricalModel:
    """Per-phase profiles and the joint prior from several CV samples of one period.

    Every sample contributes all its CVs with an expected arrival to the
    profile histograms. The samples cover the same clock period, so their
    5-minute counts are summed bin by bin before the share statistics.
    Without ``sat_headway_s`` the headway comes from the pooled
    departure-wave fit.
    """
    ids = [c.phase_id for c in phase_configs]
    offsets = {p: [] for p in ids}
    series_counts: dict[str, np.ndarray] = {}
    for mask in masks:
        idx = range(len(prepared)) if mask is None else np.flatnonzero(mask)
        times = {p: [] for p in ids}
        for i in idx:
            pv = prepared[i]
            if pv.phase_id not in times or pv.cycle_index <= 0:
                continue
            c = plan.cycle(pv.phase_id, pv.cycle_index)
            offsets[pv.phase_id].append((pv.expected_arrival_s - c.red_start_s, c.cycle_length_s))
            times[pv.phase_id].append(pv.expected_arrival_s)
        for s in count_series(times, horizon[0], horizon[1]):
            c = np.asarray(s.counts, dtype=np.int64)
            series_counts[s.phase_id] = series_counts.get(s.phase_id, 0) + c
    series = [PhaseCountSeries(p, tuple(int(x) for x in series_counts.get(p, ()))) for p in ids]
    pool = departure_pool(prepared, masks, plan)
    if sat_headway_s is None:
        sat_headway_s = pooled_headway(pool, phase_configs)
    profiles = {p: build_profile(offsets[p], bin_count, phase_id=p) for p in ids}
    prior = build_prior(series, phase_configs, sat_headway_s)
    return HistoricalModel(profiles, prior, pool)


def pooled_headway(pool: dict[str, list], phase_configs: Sequence[PhaseConfig],
                   default: float = 2.0) -> float:
    """Mean saturation headway over phases whose pooled departures support a fit."""
    hs = []
    for cfg in phase_configs:
        try:
            hs.append(fit_saturation_rate(pool.get(cfg.phase_id, ()), cfg.jam_spacing_m).sat_headway_s)
        except InsufficientDataError:
            continue
    return float(np.mean(hs)) if hs else default


@dataclass
class RunOutput:
    estimates: list[DemandEstimate]
    queues: dict[str, list[InitialQueueState]]   # per method


def _sat_rate(evidence: CycleEvidence, pid: str, k: int, cfg: PhaseConfig,
              pool: dict[str, list], fallback_rate: float, cache: dict) -> float:
    key = (pid, k)
    if key not in cache:
        try:
            est = fit_saturation_rate(evidence.departures[pid].get(k, ()), cfg.jam_spacing_m,
                                      pool.get(pid, ()))
            cache[key] = est.sat_rate_vps
        except InsufficientDataError:
            cache[key] = fallback_rate
    return cache[key]


def estimate_cycles(evidence: CycleEvidence, plan: ValidatedPlan, model: HistoricalModel,
                    cycles: Sequence[int], methods: Sequence[str] = METHODS,
                    report_cycles: Iterable[int] | None = None,
                    solver: SolverConfig = SolverConfig()) -> RunOutput:
    """Real-time estimation: cycles in order, each using only cycles up to itself.

    ``cycles`` must be consecutive; the recursion starts from an empty
    initial queue at the first one. Estimates are kept for ``report_cycles``
    (default all).
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    prior = model.prior
    ids = list(prior.phase_ids)
    cfgs = [plan.phases[p] for p in ids]
    lanes = [c.lane_count for c in cfgs]
    mu = prior.mu()
    fallback_lane_rate = {p: mu[i] * 0.5 * prior.lambda0_upper / lanes[i] for i, p in enumerate(ids)}
    fallback_sat = prior.lambda0_upper / sum(lanes)
    report = set(cycles if report_cycles is None else report_cycles)
    sat_cache: dict = {}
    out: list[DemandEstimate] = []
    queues = {m: [] for m in methods}
    state = {m: {p: (0.0, None) for p in ids} for m in methods}   # (q_hat, lane rate)
    first = cycles[0]
    for k in cycles:
        timings = [plan.cycle(p, k) for p in ids]
        C = np.array([t.cycle_length_s for t in timings])
        for m in methods:
            adjusted = []
            for i, p in enumerate(ids):
                if k == first:
                    q_tilde = 0.0
                else:
                    prev = plan.cycle(p, k - 1)
                    q_prev, lam_prev = state[m][p]
                    if lam_prev is None:
                        lam_prev = fallback_lane_rate[p]
                    s = _sat_rate(evidence, p, k - 1, cfgs[i], model.departure_pool, fallback_sat,
                                  sat_cache)
                    q_tilde = conservation_estimate(q_prev, lam_prev, prev.cycle_length_s, s,
                                                    prev.green_duration_s)
                obs_k = evidence.observations[p].get(k, [])
                lo, hi, bad = cv_bounds(evidence.types[p].get(k - 1, ()),
                                        evidence.type1_positions[p].get(k, ()))
                q_hat = finalize_initial_queue(q_tilde, (lo, hi))
                queues[m].append(InitialQueueState(p, k, q_tilde, lo, hi, q_hat, bad))
                adj = adjust_observations(obs_k, q_hat)
                adjusted.append(observation_weights(adj, model.profiles.get(p) or uniform_profile(p),
                                                    C[i]))
                state[m][p] = (q_hat, None)
            if m == WMLE:
                ests = [wmle(a, C[i], lanes[i], p, k) for i, (p, a) in enumerate(zip(ids, adjusted))]
            else:
                stats = sufficient_stats(adjusted, lanes)
                if m == JOMLE:
                    ests = jomle(stats, prior, C, k, lanes)
                else:
                    ests = jomap(stats, prior, C, k, lanes, solver)[1]
            for p, e in zip(ids, ests):
                q_hat = state[m][p][0]
                state[m][p] = (q_hat, e.lane_rate_vps if e.ok else None)
            if k in report:
                out.extend(ests)
    return RunOutput(out, queues)

