import numpy as np
import pytest

from cvdemand.domain import CycleTiming, PhaseConfig, SignalPlan, Trajectory, validate_signal_plan

# filled by test_acceptance.py, one line per criterion
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


def make_plan(phases=("A",), n=3, C=100.0, G=40.0, start=0.0, lanes=1):
    """Plan where every phase runs red then green in [start + (k-1) C, start + k C)."""
    cfgs = {p: PhaseConfig(p, lanes) for p in phases}
    cycles = {p: tuple(CycleTiming(k, start + (k - 1) * C, start + (k - 1) * C + C - G, G, C)
                       for k in range(1, n + 1)) for p in phases}
    return validate_signal_plan(SignalPlan(cfgs, cycles))


def stop_trajectory(d_stop, t_stop, t_go, v=12.0, d0=None, dt=1.0, vid="v", pid="A"):
    """Cruise at ``v`` to ``d_stop`` reached at ``t_stop``, wait until ``t_go``, then leave at ``v``."""
    d0 = d_stop + 10 * v if d0 is None else d0
    t0 = t_stop - (d0 - d_stop) / v
    ts, ds, vs = [], [], []
    t = t0
    end = t_go + (d_stop + 3 * v) / v
    while t <= end + 1e-9:
        if t < t_stop:
            d, s = d_stop + v * (t_stop - t), v
        elif t < t_go:
            d, s = d_stop, 0.0
        else:
            d, s = d_stop - v * (t - t_go), v
        ts.append(t)
        ds.append(d)
        vs.append(s)
        t += dt
    return Trajectory(vid, pid, np.array(ts), np.array(ds), np.array(vs))


@pytest.fixture
def plan3():
    return make_plan(("A", "B"), n=3)
