"""Per-phase initial-queue recursion bounded by CV-type evidence."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .trajectory import ArrivalObservation, CvKind, CvType

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InitialQueueState:
    phase_id: str
    cycle_index: int
    conservation_estimate: float
    lower_bound: float
    upper_bound: float
    final_estimate: float
    inconsistent: bool = False


def conservation_estimate(prev_q: float, prev_lambda: float, prev_C: float,
                          sat_rate: float, prev_G: float) -> float:
    """Residual queue carried into the next cycle by flow conservation."""
    accumulated = prev_q + prev_lambda * prev_C
    served = sat_rate * prev_G
    if accumulated <= served:
        return 0.0
    return accumulated - served


def cv_bounds(types_prev_cycle: Iterable[CvType],
              type1_positions_this_cycle: Iterable[int]) -> tuple[float, float, bool]:
    """Lower and upper bound on the initial queue from classified CVs.

    Type 2 CVs of the previous cycle give the lower bound (largest second-stop
    position), a Type 3 CV there proves the previous cycle cleared, and the
    smallest first-stop position in this cycle caps the queue from above
    (the pipeline passes first stops of Type 1 and Type 2 CVs alike). Returns
    ``(lower, upper, inconsistent)``; inconsistent evidence widens to
    ``[0, upper]``.
    """
    lower = 0.0
    upper3 = math.inf
    for cv in types_prev_cycle:
        if cv.kind is CvKind.TYPE2:
            lower = max(lower, float(cv.secondary_position))
        elif cv.kind is CvKind.TYPE3:
            upper3 = 0.0
    upper1 = min((float(n) for n in type1_positions_this_cycle), default=math.inf)
    upper = min(upper1, upper3)
    if lower > upper:
        log.debug("inconsistent initial-queue evidence: lower %s > upper %s", lower, upper)
        return 0.0, upper, True
    return lower, upper, False


def finalize_initial_queue(q_tilde: float, bounds: Sequence[float]) -> float:
    lower, upper = bounds[0], bounds[1]
    if q_tilde < lower:
        return float(lower)
    if q_tilde > upper:
        return float(upper)
    return float(q_tilde)


def adjust_observations(observations: Iterable[ArrivalObservation],
                        q_hat: float) -> list[ArrivalObservation]:
    """Remove the initial queue from each queuing position (clamped at 0)."""
    shift = int(math.floor(q_hat + 0.5))
    if shift == 0:
        return list(observations)
    out = []
    for ob in observations:
        n = ob.vehicles_ahead - shift
        if n < 0:
            out.append(replace(ob, vehicles_ahead=0, clamped=True))
        else:
            out.append(replace(ob, vehicles_ahead=n))
    return out
