import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvdemand.domain import (CycleTiming, PhaseConfig, PlanError, SignalPlan, Trajectory,
                             TrajectoryError, locate_cycle, validate_signal_plan)

from conftest import make_plan


def _plan(cycles):
    return SignalPlan({"A": PhaseConfig("A", 1)}, {"A": tuple(cycles)})


def test_contiguous_plan_accepted():
    plan = validate_signal_plan(_plan([CycleTiming(1, 0, 60, 40, 100), CycleTiming(2, 100, 160, 40, 100)]))
    assert plan.cycle_indices("A") == [1, 2]
    assert plan.horizon("A") == (0.0, 200.0)


def test_gap_rejected():
    with pytest.raises(PlanError, match="gap"):
        validate_signal_plan(_plan([CycleTiming(1, 0, 60, 40, 100), CycleTiming(2, 110, 170, 40, 100)]))


def test_overlap_rejected():
    with pytest.raises(PlanError, match="overlap"):
        validate_signal_plan(_plan([CycleTiming(1, 0, 60, 40, 100), CycleTiming(2, 90, 150, 40, 100)]))


def test_green_not_shorter_than_cycle_rejected():
    with pytest.raises(PlanError, match="green >= cycle"):
        validate_signal_plan(_plan([CycleTiming(1, 0, 0, 100, 100)]))


def test_empty_phase_rejected():
    with pytest.raises(PlanError, match="empty"):
        validate_signal_plan(_plan([]))
    with pytest.raises(PlanError):
        validate_signal_plan(SignalPlan({}, {}))


def test_phase_config_guards():
    with pytest.raises(PlanError):
        PhaseConfig("A", 0)
    with pytest.raises(PlanError):
        PhaseConfig("A", 1, jam_spacing_m=0.0)


@pytest.mark.parametrize("t,k", [(150.0, 2), (100.0, 2), (0.0, 1), (99.999, 1)])
def test_locate_cycle_half_open(t, k):
    assert locate_cycle(make_plan(n=2), "A", t) == k


@pytest.mark.parametrize("t", [250.0, 200.0, -0.1])
def test_locate_cycle_outside_horizon(t):
    with pytest.raises(PlanError):
        locate_cycle(make_plan(n=2), "A", t)


def test_trajectory_validation():
    with pytest.raises(TrajectoryError):
        Trajectory("v", "A", np.array([0.0]), np.array([1.0]), np.array([1.0]))
    with pytest.raises(TrajectoryError):
        Trajectory("v", "A", np.array([0.0, 0.0]), np.array([1.0, 0.5]), np.array([1.0, 1.0]))
    with pytest.raises(TrajectoryError):
        Trajectory("v", "A", np.array([0.0, 1.0]), np.array([1.0, 0.5]), np.array([1.0, -1.0]))
    with pytest.raises(TrajectoryError):
        Trajectory("v", "A", np.array([0.0, np.inf]), np.array([1.0, 0.5]), np.array([1.0, 1.0]))
    tr = Trajectory.from_points("v", "A", [(0, 10, 2), (1, 8, 2)])
    assert len(tr) == 2 and tr.points[1].distance_to_stopline_m == 8


@st.composite
def plans(draw):
    n = draw(st.integers(1, 6))
    start = draw(st.floats(-1e4, 1e4, allow_nan=False))
    lengths = draw(st.lists(st.floats(10, 300), min_size=n, max_size=n))
    cycles, r = [], start
    for k, C in enumerate(lengths, 1):
        G = 0.4 * C
        cycles.append(CycleTiming(k, r, r + C - G, G, C))
        r += C
    return cycles


@given(plans(), st.floats(0, 1, exclude_max=True))
@settings(max_examples=200, deadline=None)
def test_locate_cycle_total_and_piecewise_constant(cycles, frac):
    plan = validate_signal_plan(_plan(cycles))
    start, end = plan.horizon("A")
    t = start + frac * (end - start)
    k = locate_cycle(plan, "A", t)
    c = plan.cycle("A", k)
    assert c.red_start_s <= t < c.end_s
    # breakpoints sit exactly at red starts
    for c in cycles:
        assert locate_cycle(plan, "A", c.red_start_s) == c.k


# shifts kept clear of the tolerance edge, where rounding of the start times decides
@given(plans(), st.integers(0, 5), st.one_of(st.floats(-0.9e-9, 0.9e-9), st.floats(1.1e-9, 1e-6),
                                             st.floats(-1e-6, -1.1e-9)))
@settings(max_examples=200, deadline=None)
def test_validation_iff_contiguous(cycles, i, eps):
    if len(cycles) < 2:
        return
    i = i % (len(cycles) - 1) + 1
    c = cycles[i]
    shifted = [*cycles[:i], CycleTiming(c.k, c.red_start_s + eps, c.green_start_s + eps,
                                        c.green_duration_s, c.cycle_length_s), *cycles[i + 1:]]
    ok = abs(eps) <= 1e-9
    try:
        validate_signal_plan(_plan(shifted))
        accepted = True
    except PlanError:
        accepted = False
    # later cycles keep their starts, so shifting one start breaks both neighbouring joints
    assert accepted == ok
