import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvdemand.estimators import (JOMAP, JOMLE, WMLE, SolverConfig, SufficientStats,
                                 alpha_positive_root, jomap, jomle, log_posterior,
                                 log_posterior_gradient, phase_stats, solve_map, sufficient_stats, wmle)
from cvdemand.prior import PriorSpec
from cvdemand.profile import observation_weights, uniform_profile
from cvdemand.trajectory import ArrivalObservation

from oracles import grid_max, random_instance

# optima found by golden-section search on the share with lambda0 profiled out in closed form
FROZEN = [
    # (N, W, mu, sigma2, upper) -> (lambda0, alpha_1, log posterior)
    (((3.0, 5.0), (30.0, 40.0), (0.4, 0.6), (0.01, 0.02), 2.0),
     (0.2226946835260351, 0.407637634930461, -25.330317220215246)),
    (((4.0, 0.0), (25.0, 0.0), (0.3, 0.7), (0.0025, 0.0025), 1.0),
     (0.5333333333333333, 0.3, -11.330325854993243)),
    (((12.0, 2.0), (20.0, 30.0), (0.5, 0.5), (0.04, 0.04), 0.5),
     (0.5, 0.7548157692339545, -28.740128250574)),
]


def _prior(mu, s2, upper):
    return PriorSpec(tuple(str(i) for i in range(len(mu))), tuple(mu), tuple(s2), upper)


@pytest.mark.parametrize("inst,expected", FROZEN)
def test_frozen_oracle_optima(inst, expected):
    N, W, mu, s2, upper = inst
    stats = SufficientStats(N, W, [1 if n > 0 else 0 for n in N])
    th = solve_map(stats, _prior(mu, s2, upper))
    lam, a1, lp = expected
    assert th.lambda0 == pytest.approx(lam, rel=1e-7)
    assert th.shares[0] == pytest.approx(a1, abs=1e-7)
    assert log_posterior(th.lambda0, th.shares, stats, mu, s2, upper) >= lp - 1e-9 * abs(lp)


def _obs(n, t, phase="A"):
    return ArrivalObservation(phase, 1, n, t)


def _weighted(obs, C=100.0):
    return observation_weights(obs, uniform_profile("A"), C)


def test_stats_examples():
    s = sufficient_stats([[], []], [1, 2])
    np.testing.assert_array_equal(s.weighted_count, [0, 0])
    np.testing.assert_array_equal(s.weighted_exposure, [0, 0])
    s = sufficient_stats([_weighted([_obs(2, 40.0)])], [2])
    assert (s.weighted_count[0], s.weighted_exposure[0]) == (2.0, 20.0)
    a = [_weighted([_obs(2, 40.0), _obs(5, 10.0)])]
    b = [_weighted([_obs(1, 70.0)])]
    sa, sb = sufficient_stats(a, [1]), sufficient_stats(b, [1])
    both = sa + sb
    assert both.observation_count[0] == 3
    assert both.weighted_count[0] == pytest.approx(sa.weighted_count[0] + sb.weighted_count[0])


def test_log_posterior_prior_only():
    stats = SufficientStats([0, 0, 0], [0, 0, 0], [0, 0, 0])
    mu, s2 = np.array([0.2, 0.3, 0.5]), np.full(3, 0.01)
    base = log_posterior(0.3, mu, stats, mu, s2)
    assert base == 0.0
    for step in (0.01, 0.05, 0.1):
        a = mu + np.array([step, -step, 0.0])
        assert log_posterior(0.3, a, stats, mu, s2) < base
    assert log_posterior(0.3, mu, stats, mu, s2, lambda0_upper=0.2) == -math.inf
    assert log_posterior(0.3, [1.1, -0.1, 0.0], stats, mu, s2) == -math.inf


def test_log_posterior_hand_evaluation():
    # one observation: n=3 in phase A with Lambda=40, omega=1, u=2 -> N=3, W=20
    stats = sufficient_stats([_weighted([_obs(3, 40.0)]), []], [2, 1])
    mu, s2 = np.array([0.4, 0.6]), np.array([0.01, 0.04])
    lam, a = 0.5, np.array([0.45, 0.55])
    hand = (-0.5 * ((0.05 ** 2) / 0.01 + (0.05 ** 2) / 0.04)
            + 3 * math.log(0.45) + 3 * math.log(0.5) - 0.5 * 0.45 * 20)
    assert log_posterior(lam, a, stats, mu, s2) == pytest.approx(hand, rel=1e-14)


@pytest.mark.parametrize("t,rate", [(2.0, 0.5), (1.0, 1.0), (3.0, 1 / 3)])
def test_wmle_sensitivity_example(t, rate):
    e = wmle(_weighted([_obs(1, t)]), 100.0, 1)
    assert e.lane_rate_vps == pytest.approx(rate, abs=1e-9)
    assert e.demand_veh == pytest.approx(rate * 100.0)


def test_wmle_two_observations():
    obs = _weighted([_obs(2, 20.0), _obs(4, 40.0)])
    np.testing.assert_allclose([o.norm_weight for o in obs], [2 / 3, 4 / 3])
    e = wmle(obs, 100.0, 1)
    assert e.lane_rate_vps == pytest.approx(0.1)
    assert e.status == "ok" and e.method == WMLE


def test_wmle_multi_lane_demand():
    e = wmle(_weighted([_obs(2, 20.0)]), 100.0, 3, "A", 4)
    assert e.demand_veh == pytest.approx(3 * e.lane_rate_vps * 100.0)
    assert (e.phase_id, e.cycle_index) == ("A", 4)


def test_wmle_no_observations_fails():
    e = wmle([], 100.0, 1)
    assert e.status == "failed" and not e.ok and math.isnan(e.demand_veh)


@given(st.lists(st.tuples(st.integers(0, 20), st.floats(1.0, 100.0)), min_size=1, max_size=8))
@settings(max_examples=200, deadline=None)
def test_wmle_closed_form_is_weighted_likelihood_max(obs):
    ws = _weighted([_obs(n, t) for n, t in obs])
    e = wmle(ws, 100.0, 1)
    omega = np.array([o.norm_weight for o in ws])
    n = np.array([o.vehicles_ahead for o in ws], dtype=float)
    lam_ = np.array([o.raw_weight for o in ws])

    def wll(r):
        return float(np.sum(omega * (n * np.log(r) - r * lam_)))

    r = e.lane_rate_vps
    if n.sum() == 0:
        assert r == 0.0
        return
    # stationary point: derivative of the weighted log-likelihood vanishes
    assert np.sum(omega * (n / r - lam_)) == pytest.approx(0.0, abs=1e-9 * np.sum(omega * lam_))
    for f in (1 - 1e-4, 1 + 1e-4):
        assert wll(r) >= wll(r * f)


def test_jomle_examples():
    stats = SufficientStats([3, 3], [30, 30], [1, 1])
    prior = _prior((0.5, 0.5), (0.01, 0.01), 8.0)
    ests = jomle(stats, prior, 100.0)
    assert ests[0].lambda0 == pytest.approx(0.2)
    assert ests[0].demand_veh == pytest.approx(ests[1].demand_veh) == pytest.approx(10.0)
    assert all(e.method == JOMLE for e in ests)
    empty = jomle(SufficientStats([0, 0], [0, 0], [0, 0]), prior, 100.0)
    assert all(e.status == "failed" for e in empty)


def test_jomle_clamps_to_support():
    ests = jomle(SufficientStats([30, 0], [10, 0], [2, 0]), _prior((0.5, 0.5), (0.01, 0.01), 1.0), 100.0)
    assert ests[0].lambda0 == 1.0


def test_alpha_root_examples():
    assert alpha_positive_root(0.3, 2.0, 0.4, 0.01, 0.0, 0.0) == pytest.approx(0.4 - 0.01 * 2.0)
    assert alpha_positive_root(0.3, 50.0, 0.4, 0.01, 0.0, 0.0) == 0.0
    lam, d, mu, s2, N, W = 0.4, 3.0, 0.3, 0.02, 4.5, 25.0
    a = alpha_positive_root(lam, d, mu, s2, N, W)
    assert a > 0
    # plug back into -(a - mu)/s2 + N/a - lam W - delta = 0
    assert -(a - mu) / s2 + N / a - lam * W - d == pytest.approx(0.0, abs=1e-12)
    assert alpha_positive_root(2.0, 1e6, 0.3, 0.02, 1e-3, 50.0) > 0


def test_jomap_symmetric():
    stats = SufficientStats([3, 3], [30, 30], [2, 2])
    theta, ests = jomap(stats, _prior((0.5, 0.5), (0.01, 0.01), 8.0), 100.0)
    np.testing.assert_allclose(theta.shares, [0.5, 0.5], atol=1e-12)
    assert theta.converged
    assert ests[0].demand_veh == pytest.approx(ests[1].demand_veh)


def test_jomap_demand_arithmetic():
    # with lambda0 = 0.4 and equal shares the demands are 20 each and sum to lambda0 C
    stats = SufficientStats([2, 2], [10, 10], [1, 1])
    theta, ests = jomap(stats, _prior((0.5, 0.5), (0.01, 0.01), 8.0), 100.0)
    assert theta.lambda0 == pytest.approx(0.4)
    np.testing.assert_allclose([e.demand_veh for e in ests], [20.0, 20.0])
    assert sum(e.demand_veh for e in ests) == pytest.approx(theta.lambda0 * 100.0)
    assert all(e.method == JOMAP and e.ok for e in ests)


def test_jomap_no_observations_fails():
    theta, ests = jomap(SufficientStats([0, 0], [0, 0], [0, 0]), _prior((0.5, 0.5), (0.01, 0.01), 8.0), 100.0)
    assert theta is None and all(not e.ok for e in ests)


def test_jomap_all_observations_inside_initial_queue():
    # observations exist but every n was absorbed by the initial queue: zero estimate, still a success
    theta, ests = jomap(SufficientStats([0, 0], [40, 10], [2, 1]), _prior((0.5, 0.5), (0.01, 0.01), 8.0), 100.0)
    assert theta.status == "zero" and theta.lambda0 == 0.0
    assert all(e.ok and e.demand_veh == 0.0 for e in ests)


def test_unobserved_phase_gets_defined_share():
    stats = SufficientStats([5, 0, 0], [40, 0, 0], [2, 0, 0])
    theta = solve_map(stats, _prior((0.5, 0.3, 0.2), (0.001, 0.001, 0.001), 4.0))
    for z in (1, 2):
        assert theta.shares[z] == pytest.approx(alpha_positive_root(theta.lambda0, theta.multiplier,
                                                                    (0.5, 0.3, 0.2)[z], 0.001, 0, 0))


def test_prior_dominance_limit():
    # tight priors: phases without data sit at the prior mean renormalized with the observed ones
    stats = SufficientStats([6, 0, 0], [30, 0, 0], [2, 0, 0])
    mu = (0.3, 0.45, 0.25)
    theta = solve_map(stats, _prior(mu, (0.02 ** 2,) * 3, 4.0))
    rest = theta.shares[1:] / theta.shares[1:].sum()
    np.testing.assert_allclose(rest, np.array(mu[1:]) / sum(mu[1:]), atol=1e-3)


def test_solver_matches_grid_oracle_small():
    rng = np.random.default_rng(7)
    for _ in range(10):
        stats, prior = random_instance(rng, 2)
        th = solve_map(stats, prior)
        lp = log_posterior(th.lambda0, th.shares, stats, prior.mu(), prior.sigma2(), prior.lambda0_upper)
        g = grid_max(stats, prior)
        assert lp >= g - 1e-6 * abs(g)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(50):
        stats, prior = random_instance(rng)
        lam = rng.uniform(0.1, 0.9) * prior.lambda0_upper
        a = rng.dirichlet(np.full(stats.Z, 4.0))
        g_lam, g_a = log_posterior_gradient(lam, a, stats, prior.mu(), prior.sigma2())
        h = 1e-6 * lam
        fd = (log_posterior(lam + h, a, stats, prior.mu(), prior.sigma2())
              - log_posterior(lam - h, a, stats, prior.mu(), prior.sigma2())) / (2 * h)
        assert g_lam == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_solver_config_limits_iterations():
    rng = np.random.default_rng(11)
    stats, prior = random_instance(rng, 3)
    th = solve_map(stats, prior, SolverConfig(max_iter=1))
    assert th.iterations <= 1 or th.status in ("fallback", "renormalized")


def test_phase_stats_empty():
    assert phase_stats([], 2) == (0.0, 0.0, 0)
