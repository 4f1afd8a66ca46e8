from dataclasses import replace

import numpy as np
import pytest

from cvdemand.domain import PhaseConfig
from cvdemand.estimators import METHODS
from cvdemand.evaluation import prepare_scenario
from cvdemand.pipeline import estimate_cycles, group_evidence
from cvdemand.scenarios import reference_scenario
from cvdemand.sim import PLATOON, ArrivalPattern, PhaseScenario, ScenarioConfig, cv_mask


def undersaturated(seed):
    """Three single-lane phases well below capacity, no demand or position noise."""
    layout = [("A", 0.0, 9.0, ArrivalPattern(PLATOON, 0.3, 0.3, 0.7)), ("B", 33.0, 9.0, ArrivalPattern()),
              ("C", 66.0, 8.0, ArrivalPattern())]
    phases = tuple(PhaseScenario(PhaseConfig(p, 1), 30.0, (gs + 30.0) % 100.0, m, pat, demand_shift_rad=i)
                   for i, (p, gs, m, pat) in enumerate(layout))
    return ScenarioConfig(phases, cycle_length_s=100.0, n_cycles=40, seed=seed)


@pytest.fixture(scope="module")
def full_penetration_runs():
    out = []
    for seed in range(8):
        ps = prepare_scenario(undersaturated(seed))
        out.append((ps, ps.run_cell(1.0, 0)))
    return out


def _errors(runs, method="JO-MAP"):
    errs = []
    for ps, out in runs:
        for st in out.queues[method]:
            errs.append(abs(st.final_estimate - ps.truth.initial_queue[st.phase_id][st.cycle_index - 1]))
    return np.array(errs)


def test_initial_queue_within_one_vehicle_nearly_always(full_penetration_runs):
    for m in METHODS:
        errs = _errors(full_penetration_runs, m)
        assert errs.size == 8 * 40 * 3
        assert np.mean(errs <= 1) >= 0.99


@pytest.mark.xfail(strict=True, reason="vehicles arriving within one headway of red onset count as "
                   "initial queue while a Type 3 CV of the same cycle caps the bound at zero; see ledger")
def test_initial_queue_within_one_vehicle_every_cycle(full_penetration_runs):
    assert np.all(_errors(full_penetration_runs) <= 1)


def test_final_estimate_inside_bounds(full_penetration_runs):
    for _, out in full_penetration_runs:
        for states in out.queues.values():
            for st in states:
                assert st.lower_bound <= st.final_estimate <= st.upper_bound


def test_recursion_is_causal():
    ps = prepare_scenario(replace(reference_scenario(), n_cycles=12))
    ev = group_evidence(ps.prepared, cv_mask(len(ps.prepared), 0.2, 3), ps.phase_ids)
    model = ps.historical_model(0.2)
    full = estimate_cycles(ev, ps.plan, model, list(range(1, 13)))
    head = estimate_cycles(ev, ps.plan, model, list(range(1, 8)))
    # repr so that failed estimates (nan fields) compare equal
    assert repr(head.estimates) == repr([e for e in full.estimates if e.cycle_index < 8])
    for m in METHODS:
        assert repr(head.queues[m]) == repr([s for s in full.queues[m] if s.cycle_index < 8])


def test_estimate_cycles_rejects_unknown_method():
    ps = prepare_scenario(replace(reference_scenario(), n_cycles=3))
    ev = group_evidence(ps.prepared, None, ps.phase_ids)
    with pytest.raises(ValueError):
        estimate_cycles(ev, ps.plan, ps.historical_model(1.0), [1, 2], ["EM"])
