"""WMLE, JO-MLE and JO-MAP cycle demand estimators.

All three share the same per-phase sufficient statistics. With ``omega`` the
normalized observation weights, ``n`` the (adjusted) vehicles ahead and
``Lam`` the integrated arrival profile at each observation's arrival offset:

    N_z = sum(omega * n)            weighted count
    W_z = sum(omega * Lam) / u_z    weighted exposure per lane

The joint estimators parametrize the lane rate of phase ``z`` as
``alpha_z * lambda0 / u_z`` with shares ``alpha`` on the simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .prior import PriorSpec
from .trajectory import ArrivalObservation

WMLE = "WMLE"
JOMLE = "JO-MLE"
JOMAP = "JO-MAP"
METHODS = (WMLE, JOMLE, JOMAP)


@dataclass(frozen=True)
class SufficientStats:
    weighted_count: np.ndarray
    weighted_exposure: np.ndarray
    observation_count: np.ndarray

    def __post_init__(self):
        for name in ("weighted_count", "weighted_exposure", "observation_count"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def Z(self) -> int:
        return self.weighted_count.size

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        return SufficientStats(self.weighted_count + other.weighted_count,
                               self.weighted_exposure + other.weighted_exposure,
                               self.observation_count + other.observation_count)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 200
    max_halvings: int = 30


@dataclass
class ThetaEstimate:
    lambda0: float
    shares: np.ndarray
    multiplier: float
    converged: bool
    iterations: int
    residual_norm: float
    status: str = "interior"  # interior | clamped | renormalized | fallback | zero


@dataclass(frozen=True)
class DemandEstimate:
    phase_id: str
    cycle_index: int
    demand_veh: float
    lane_rate_vps: float
    method: str
    status: str  # "ok" | "failed"
    lambda0: float = float("nan")
    alpha: float = float("nan")
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def phase_stats(observations: Sequence[ArrivalObservation], lane_count: int) -> tuple[float, float, int]:
    """(N, W, x) for one phase from weighted observations; raw weight is the integrated profile."""
    if not observations:
        return 0.0, 0.0, 0
    omega = np.array([ob.norm_weight for ob in observations])
    n = np.array([ob.vehicles_ahead for ob in observations], dtype=float)
    lam = np.array([ob.raw_weight for ob in observations])
    return float(omega @ n), float(omega @ lam) / lane_count, len(observations)


def sufficient_stats(observations_by_phase: Sequence[Sequence[ArrivalObservation]],
                     lane_counts: Sequence[int]) -> SufficientStats:
    rows = [phase_stats(obs, u) for obs, u in zip(observations_by_phase, lane_counts)]
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return SufficientStats(arr[:, 0], arr[:, 1], arr[:, 2])


def log_posterior(lambda0, shares, stats: SufficientStats, mu, sigma2,
                  lambda0_upper: float = math.inf):
    """Log posterior of (lambda0, shares) up to a theta-independent constant.

    Vectorized over leading axes: ``lambda0`` broadcasts against
    ``shares[..., z]``. Returns -inf outside the support.
    """
    lam = np.asarray(lambda0, dtype=float)
    a = np.asarray(shares, dtype=float)
    N = stats.weighted_count
    W = stats.weighted_exposure
    mu = np.asarray(mu, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        prior = -0.5 * np.sum((a - mu) ** 2 / s2, axis=-1)
        loga = np.where(N > 0, N * np.log(np.where(a > 0, a, 1.0)), 0.0)
        loga = np.where((N > 0) & (a <= 0), -np.inf, loga)
        like = np.sum(loga, axis=-1) + N.sum() * np.log(lam) - lam * np.sum(a * W, axis=-1)
    out = prior + like
    bad = (lam <= 0) | (lam > lambda0_upper) | np.any(a < 0, axis=-1)
    out = np.where(bad, -np.inf, out)
    return float(out) if np.ndim(out) == 0 else out


def log_posterior_gradient(lambda0: float, shares, stats: SufficientStats, mu, sigma2):
    """Partial derivatives of the log posterior in lambda0 and each share."""
    a = np.asarray(shares, dtype=float)
    N = stats.weighted_count
    W = stats.weighted_exposure
    d_lam = N.sum() / lambda0 - float(np.sum(W * a))
    d_alpha = -(a - mu) / sigma2 + N / a - lambda0 * W
    return d_lam, d_alpha


def wmle(observations: Sequence[ArrivalObservation], C: float, lane_count: int,
         phase_id: str = "", cycle_index: int = 0) -> DemandEstimate:
    """Single-phase weighted MLE: lane rate ``sum(omega n) / sum(omega Lam)``."""
    if not observations:
        return DemandEstimate(phase_id, cycle_index, float("nan"), float("nan"), WMLE, "failed")
    N, W, _ = phase_stats(observations, lane_count)
    rate = N / (W * lane_count)
    return DemandEstimate(phase_id, cycle_index, lane_count * rate * C, rate, WMLE, "ok")


def _failed(phase_ids, cycle_index, method):
    return [DemandEstimate(p, cycle_index, float("nan"), float("nan"), method, "failed")
            for p in phase_ids]


def jomle_lambda0(stats: SufficientStats, mu, lambda0_upper: float) -> float:
    den = float(np.dot(stats.weighted_exposure, mu))
    lam = stats.weighted_count.sum() / den
    return min(lam, lambda0_upper)


def jomle(stats: SufficientStats, prior: PriorSpec, C, cycle_index: int = 0,
          lane_counts: Sequence[int] | None = None) -> list[DemandEstimate]:
    """Joint MLE with shares fixed at the prior means."""
    mu = prior.mu()
    if stats.observation_count.sum() == 0:
        return _failed(prior.phase_ids, cycle_index, JOMLE)
    lam0 = jomle_lambda0(stats, mu, prior.lambda0_upper)
    return _demands(prior.phase_ids, lam0, mu, C, lane_counts, cycle_index, JOMLE, 0)


def _demands(phase_ids, lam0, shares, C, lane_counts, cycle_index, method, iterations):
    C = np.broadcast_to(np.asarray(C, dtype=float), (len(phase_ids),))
    u = np.ones(len(phase_ids)) if lane_counts is None else np.asarray(lane_counts, dtype=float)
    return [DemandEstimate(p, cycle_index, float(lam0 * a * c), float(lam0 * a / lu), method, "ok",
                           float(lam0), float(a), iterations)
            for p, a, c, lu in zip(phase_ids, shares, C, u)]


def alpha_positive_root(lambda0: float, delta: float, mu_z: float, sigma2_z: float,
                        N_z: float, W_z: float) -> float:
    """Nonnegative root of the per-phase quadratic stationarity condition."""
    a = mu_z / sigma2_z - lambda0 * W_z - delta
    disc = math.sqrt(a * a + 4.0 * N_z / sigma2_z)
    if a >= 0:
        return 0.5 * sigma2_z * (a + disc)
    return 2.0 * N_z / (disc - a)


def initial_point(stats: SufficientStats, mu, lambda0_upper: float) -> tuple[float, float]:
    lam0 = 0.5 * lambda0_upper
    seen = stats.observation_count > 0
    delta = float(np.mean(stats.weighted_count[seen] / mu[seen] - lam0 * stats.weighted_exposure[seen]))
    return lam0, delta


def solve_map(stats: SufficientStats, prior: PriorSpec,
              cfg: SolverConfig = SolverConfig()) -> ThetaEstimate:
    """MAP estimate of (lambda0, shares); requires at least one observed phase.

    Substituting each share's positive root reduces the stationarity system to
    two unknowns, lambda0 and the simplex multiplier, solved by damped Newton.
    """
    mu = prior.mu()
    s2 = prior.sigma2()
    N = np.ascontiguousarray(stats.weighted_count, dtype=float)
    W = np.ascontiguousarray(stats.weighted_exposure, dtype=float)
    upper = prior.lambda0_upper
    if stats.observation_count.sum() == 0:
        raise ValueError("no observed phase")
    if N.sum() == 0:
        # every observation sits inside the initial queue: the posterior peaks at lambda0 -> 0
        delta = _delta_at(0.0, N, W, mu, s2)
        alpha = np.array([alpha_positive_root(0.0, delta, m, s, n, w)
                          for m, s, n, w in zip(mu, s2, N, W)])
        return ThetaEstimate(0.0, alpha, delta, False, 0, abs(alpha.sum() - 1), "zero")
    _, delta_init = initial_point(stats, mu, upper)
    lam0, delta, alpha, code, it, res = kernels.solve_reduced(
        N, W, mu, s2, upper, delta_init, cfg.tol, cfg.max_iter, cfg.max_halvings)
    alpha = np.asarray(alpha, dtype=float)
    if code == kernels.SOLVE_OK:
        return ThetaEstimate(lam0, _snap(alpha), delta, True, it, res, "interior")
    if code == kernels.SOLVE_CLAMPED:
        return ThetaEstimate(lam0, _snap(alpha), delta, True, it, res, "clamped")
    if code == kernels.SOLVE_RENORMALIZED:
        return ThetaEstimate(lam0, alpha, delta, False, it, res, "renormalized")
    return ThetaEstimate(jomle_lambda0(stats, mu, upper), mu.copy(), float("nan"), False, it, res,
                         "fallback")


def _snap(alpha: np.ndarray) -> np.ndarray:
    # the solve leaves |sum - 1| below the residual tolerance; remove the remainder
    return alpha / alpha.sum()


def _delta_at(lam0, N, W, mu, s2):
    """Multiplier putting the share roots on the simplex at fixed lambda0 (bisection)."""
    def excess(d):
        return sum(alpha_positive_root(lam0, d, m, s, n, w) for m, s, n, w in zip(mu, s2, N, W)) - 1.0
    lo, hi = -1.0, 1.0
    while excess(lo) < 0:
        lo *= 2.0
    while excess(hi) > 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def jomap(stats: SufficientStats, prior: PriorSpec, C, cycle_index: int = 0,
          lane_counts: Sequence[int] | None = None,
          cfg: SolverConfig = SolverConfig()) -> tuple[ThetaEstimate | None, list[DemandEstimate]]:
    """Joint MAP demand estimates for every phase of one cycle."""
    if stats.observation_count.sum() == 0:
        return None, _failed(prior.phase_ids, cycle_index, JOMAP)
    theta = solve_map(stats, prior, cfg)
    return theta, _demands(prior.phase_ids, theta.lambda0, theta.shares, C, lane_counts,
                           cycle_index, JOMAP, theta.iterations)
