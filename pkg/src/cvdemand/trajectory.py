"""From raw CV trajectories to queue events, arrival observations and CV types."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .domain import PhaseConfig, PlanError, Trajectory, ValidatedPlan, locate_cycle

QUEUE_SPEED_THRESHOLD_MPS = 5.0 / 3.6


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class QueueEvent:
    join_time_s: float
    join_distance_m: float
    leave_time_s: float
    leave_distance_m: float
    episode_index: int


@dataclass(frozen=True)
class ArrivalObservation:
    """One queued CV seen as ``vehicles_ahead`` arrivals in ``[0, arrival_offset_s]``."""

    phase_id: str
    cycle_index: int
    vehicles_ahead: int
    arrival_offset_s: float
    raw_weight: float = float("nan")
    norm_weight: float = float("nan")
    clamped: bool = False

    def with_weights(self, raw: float, norm: float) -> "ArrivalObservation":
        return replace(self, raw_weight=raw, norm_weight=norm)


class CvKind(enum.Enum):
    TYPE1 = 1
    TYPE2 = 2
    TYPE3 = 3


@dataclass(frozen=True)
class CvType:
    kind: CvKind
    secondary_position: int | None = None

    def __post_init__(self):
        if (self.kind is CvKind.TYPE2) != (self.secondary_position is not None):
            raise ValueError("secondary_position is present iff the CV is Type 2")


@dataclass(frozen=True)
class SaturationEstimate:
    sat_rate_vps: float
    sat_headway_s: float
    departure_wave_mps: float
    stopline_speed_mps: float
    source: str  # "per-cycle" | "TOD-aggregate"


def crossing_index(traj: Trajectory) -> int:
    """Index of the first sample past the stopline for good, or -1 if never crossed.

    Samples after the last upstream one count as crossed, so a noisy sample
    near the stopline does not end the approach early.
    """
    upstream = np.flatnonzero(traj.distances > 0)
    if upstream.size == 0:
        return 0
    last = int(upstream[-1])
    return last + 1 if last + 1 < len(traj) else -1


def crossing_time(traj: Trajectory) -> float:
    """Interpolated stopline crossing time, NaN if the stopline is never reached."""
    i = crossing_index(traj)
    if i < 0:
        return float("nan")
    if i == 0:
        return float(traj.times[0])
    d0, d1 = traj.distances[i - 1], traj.distances[i]
    t0, t1 = traj.times[i - 1], traj.times[i]
    return float(t0 + (t1 - t0) * d0 / (d0 - d1))


def detect_queue_events(traj: Trajectory, speed_threshold_mps: float = QUEUE_SPEED_THRESHOLD_MPS,
                        jam_spacing_m: float = 6.0) -> list[QueueEvent]:
    """Stop episodes before the stopline crossing, in time order.

    Join and leave instants are interpolated between samples assuming the
    neighbouring moving sample travelled at its reported speed; the result
    stays within the bracketing sample times.
    """
    # the first sample past the stopline may be the one that closes the last stop
    end = crossing_index(traj)
    end = len(traj) if end < 0 else end + 1
    t, d, v = traj.times, traj.distances, traj.speeds
    joins, anchors, leaves = kernels.scan_episodes(d, v, end, speed_threshold_mps,
                                                   0.5 * jam_spacing_m)
    events = []
    for idx, (j, a, lv) in enumerate(zip(joins.tolist(), anchors.tolist(), leaves.tolist())):
        join_d = max(float(d[j]), 0.0)
        join_t = float(t[j])
        if j > 0 and v[j - 1] >= speed_threshold_mps:
            est = t[j - 1] + (d[j - 1] - d[j]) / v[j - 1]
            join_t = float(min(max(est, t[j - 1]), t[j]))
        leave_d = min(max(float(d[a]), 0.0), join_d)
        est = t[lv] - (d[a] - d[lv]) / v[lv]
        leave_t = float(min(max(est, t[lv - 1]), t[lv]))
        if leave_t <= join_t:
            leave_t = float(t[lv])
        events.append(QueueEvent(join_t, join_d, leave_t, leave_d, idx + 1))
    return events


def approach_speed(traj: Trajectory, join_time_s: float, speed_threshold_mps: float,
                   fallback_mps: float) -> float:
    mask = (traj.times < join_time_s) & (traj.speeds >= speed_threshold_mps)
    if not np.any(mask):
        return fallback_mps
    return float(traj.speeds[mask].mean())


def queuing_position(distance_m: float, jam_spacing_m: float) -> int:
    return max(1, int(np.floor(distance_m / jam_spacing_m + 0.5)))


def expected_arrival_time(event: QueueEvent, traj: Trajectory, cfg: PhaseConfig,
                          speed_threshold_mps: float = QUEUE_SPEED_THRESHOLD_MPS) -> float:
    speed = approach_speed(traj, event.join_time_s, speed_threshold_mps, cfg.free_flow_speed_mps)
    return event.join_time_s + event.join_distance_m / speed


def derive_observation(event: QueueEvent, traj: Trajectory, plan: ValidatedPlan,
                       cfg: PhaseConfig,
                       speed_threshold_mps: float = QUEUE_SPEED_THRESHOLD_MPS) -> ArrivalObservation:
    """Queuing position and in-cycle expected arrival offset for a first stop."""
    n = queuing_position(event.join_distance_m, cfg.jam_spacing_m)
    t = expected_arrival_time(event, traj, cfg, speed_threshold_mps)
    k = locate_cycle(plan, traj.phase_id, t)
    offset = t - plan.cycle(traj.phase_id, k).red_start_s
    return ArrivalObservation(traj.phase_id, k, n, offset)


def classify_cv(traj: Trajectory, events: Sequence[QueueEvent], jam_spacing_m: float = 6.0,
                plan: ValidatedPlan | None = None) -> CvType | None:
    """Type 1/2/3 by number of stops before the stopline; None if never crossed.

    With ``plan``, a vehicle is Type 2 when it starts a stop at or after the
    red that follows its expected arrival, and that stop gives the secondary
    position: every vehicle ahead of it then arrived earlier and is still
    upstream at red onset. Long queues that compact, or that are still
    discharging when that red starts, make vehicles stop more than once
    without meeting this condition.
    """
    if crossing_index(traj) < 0:
        return None
    if not events:
        return CvType(CvKind.TYPE3)
    later = list(events[1:])
    if plan is not None:
        cfg = plan.phases[traj.phase_id]
        t = expected_arrival_time(events[0], traj, cfg)
        try:
            r_next = plan.cycle(traj.phase_id, locate_cycle(plan, traj.phase_id, t)).end_s
            later = [e for e in events if e.join_time_s >= r_next]
        except PlanError:
            pass
    if not later:
        return CvType(CvKind.TYPE1)
    return CvType(CvKind.TYPE2, queuing_position(later[0].join_distance_m, jam_spacing_m))


def _fit_wave(points: np.ndarray) -> float:
    t, d = points[:, 0], points[:, 1]
    tc = t - t.mean()
    denom = float(tc @ tc)
    if denom <= 0:
        return 0.0
    return float(tc @ (d - d.mean())) / denom


def fit_saturation_rate(queued_departures: Iterable[tuple[float, float, float]], d0_m: float,
                        fallback: Iterable[tuple[float, float, float]] | None = None,
                        ) -> SaturationEstimate:
    """Saturation rate from the departure wave through queue-leaving points.

    ``queued_departures`` are ``(leave_time_s, leave_distance_m,
    stopline_speed_mps)`` for one cycle. Distances grow upstream, so the wave
    speed is the fitted slope of distance against time. When fewer than two
    points are given, ``fallback`` (departures pooled into a common cycle,
    times relative to green start) is fitted instead.
    """
    pts = np.asarray(list(queued_departures), dtype=float).reshape(-1, 3)
    source = "per-cycle"
    if pts.shape[0] < 2:
        pts = np.asarray(list(fallback or ()), dtype=float).reshape(-1, 3)
        source = "TOD-aggregate"
        if pts.shape[0] < 2:
            raise InsufficientDataError("insufficient departures")
    wave = _fit_wave(pts[:, :2])
    if not wave > 0:
        raise InsufficientDataError("degenerate wave")
    vl = float(pts[:, 2].mean())
    if not vl > 0:
        raise InsufficientDataError("degenerate wave")
    s = wave * vl / ((wave + vl) * d0_m)
    return SaturationEstimate(s, 1.0 / s, wave, vl, source)
