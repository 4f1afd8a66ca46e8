"""Brute-force references for the MAP solver, independent of its reduced system."""

import itertools

import numpy as np

from cvdemand.estimators import SufficientStats, log_posterior
from cvdemand.prior import PriorSpec
from cvdemand.profile import observation_weights, uniform_profile
from cvdemand.estimators import sufficient_stats
from cvdemand.trajectory import ArrivalObservation


def simplex_grid(Z: int, steps: int) -> np.ndarray:
    """All share vectors with coordinates on multiples of 1/steps."""
    pts = [c for c in itertools.product(range(steps + 1), repeat=Z - 1) if sum(c) <= steps]
    a = np.array(pts, dtype=float) / steps
    return np.column_stack([a, 1.0 - a.sum(axis=1)])


SIMPLEX_STEPS = {2: 400, 3: 120, 4: 40}


def grid_max(stats: SufficientStats, prior: PriorSpec, n_lambda: int = 400) -> float:
    """Maximum log posterior over a dense (lambda0 x shares) grid of the feasible box."""
    Z = stats.Z
    shares = simplex_grid(Z, SIMPLEX_STEPS[Z])
    lam = np.linspace(prior.lambda0_upper / n_lambda, prior.lambda0_upper, n_lambda)
    best = -np.inf
    for chunk in np.array_split(shares, max(1, shares.shape[0] // 2000)):
        v = log_posterior(lam[:, None], chunk[None, :, :], stats, prior.mu(), prior.sigma2(),
                          prior.lambda0_upper)
        best = max(best, float(np.max(v)))
    return best


def random_instance(rng: np.random.Generator, Z: int | None = None):
    """Random feasible cycle: 0-6 weighted observations per phase, at least one vehicle ahead."""
    Z = Z or int(rng.integers(2, 5))
    C = 100.0
    lanes = rng.integers(1, 4, Z)
    while True:
        obs = []
        for z in range(Z):
            x = int(rng.integers(0, 7))
            raw = [ArrivalObservation(str(z), 1, int(rng.integers(0, 12)), float(rng.uniform(1, C)))
                   for _ in range(x)]
            obs.append(observation_weights(raw, uniform_profile(str(z)), C))
        stats = sufficient_stats(obs, lanes)
        if stats.weighted_count.sum() > 0:
            break
    mu = rng.dirichlet(np.full(Z, 3.0))
    s2 = rng.uniform(0.02, 0.15, Z) ** 2
    upper = float(lanes.sum()) / rng.uniform(1.8, 2.5)
    prior = PriorSpec(tuple(str(z) for z in range(Z)), tuple(mu), tuple(s2), upper)
    return stats, prior
