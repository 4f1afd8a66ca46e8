"""Joint prior: Gaussian phase shares from historical CV counts, uniform total rate."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import PhaseConfig

log = logging.getLogger(__name__)

SIGMA_MIN = 0.02
MIN_USABLE_BINS = 6
FLAT_SIGMA = 0.25
BIN_SECONDS = 300.0


@dataclass(frozen=True)
class PhaseCountSeries:
    phase_id: str
    counts: tuple[int, ...]

    def __post_init__(self):
        if any(int(c) != c or c < 0 for c in self.counts):
            raise ValueError(f"phase {self.phase_id}: counts must be nonnegative integers")


@dataclass(frozen=True)
class PriorSpec:
    phase_ids: tuple[str, ...]
    mean_share: tuple[float, ...]
    variance: tuple[float, ...]
    lambda0_upper: float
    sample_count: int = 0
    flat: bool = False

    def mu(self) -> np.ndarray:
        return np.asarray(self.mean_share, dtype=float)

    def sigma2(self) -> np.ndarray:
        return np.asarray(self.variance, dtype=float)

    def index(self, phase_id: str) -> int:
        return self.phase_ids.index(phase_id)

    def to_json(self) -> dict:
        return {
            "phases": [{"phase_id": p, "mu": m, "sigma2": s}
                       for p, m, s in zip(self.phase_ids, self.mean_share, self.variance)],
            "lambda0_upper": self.lambda0_upper,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PriorSpec":
        phases = obj["phases"]
        return cls(tuple(str(p["phase_id"]) for p in phases),
                   tuple(float(p["mu"]) for p in phases),
                   tuple(float(p["sigma2"]) for p in phases),
                   float(obj["lambda0_upper"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "PriorSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


def share_statistics(shares: np.ndarray, sigma_min: float = SIGMA_MIN) -> tuple[np.ndarray, np.ndarray]:
    """Per-phase sample mean and floored sample variance of share samples (bins x phases)."""
    mu = shares.mean(axis=0)
    var = shares.var(axis=0, ddof=1) if shares.shape[0] > 1 else np.zeros(shares.shape[1])
    return mu, np.maximum(var, sigma_min ** 2)


def build_alpha_prior(series: Sequence[PhaseCountSeries], sigma_min: float = SIGMA_MIN,
                      min_bins: int = MIN_USABLE_BINS) -> tuple[tuple[str, ...], np.ndarray, np.ndarray, int]:
    """Gaussian prior on each phase's share of the total arrival rate.

    Returns ``(phase_ids, mu, sigma2, usable_bins)``. Bins with no CVs at all
    are dropped; with fewer than ``min_bins`` usable bins the prior falls back
    to equal shares with standard deviation 0.25.
    """
    ids = tuple(s.phase_id for s in series)
    z = len(ids)
    lengths = {len(s.counts) for s in series}
    if len(lengths) != 1:
        raise ValueError("count series must share the same bins")
    counts = np.array([s.counts for s in series], dtype=float).T.reshape(-1, z)
    totals = counts.sum(axis=1)
    usable = totals > 0
    n_usable = int(usable.sum())
    if n_usable < min_bins:
        log.info("only %d usable count bins; using a flat share prior", n_usable)
        return ids, np.full(z, 1.0 / z), np.full(z, FLAT_SIGMA ** 2), n_usable
    shares = counts[usable] / totals[usable, None]
    mu, var = share_statistics(shares, sigma_min)
    return ids, mu, var, n_usable


def lambda0_support(phase_configs: Sequence[PhaseConfig], sat_headway_s: float) -> tuple[float, float]:
    """Open-closed support ``(0, sum(lanes) / h_s]`` of the total arrival rate."""
    if not sat_headway_s > 0:
        raise ValueError("saturation headway must be positive")
    return 0.0, sum(c.lane_count for c in phase_configs) / sat_headway_s


def build_prior(series: Sequence[PhaseCountSeries], phase_configs: Sequence[PhaseConfig],
                sat_headway_s: float, sigma_min: float = SIGMA_MIN,
                min_bins: int = MIN_USABLE_BINS) -> PriorSpec:
    ids, mu, var, n = build_alpha_prior(series, sigma_min, min_bins)
    order = [c.phase_id for c in phase_configs]
    if list(ids) != order:
        raise ValueError("count series and phase configs are in different phase order")
    _, upper = lambda0_support(phase_configs, sat_headway_s)
    return PriorSpec(ids, tuple(mu.tolist()), tuple(var.tolist()), upper, n, n < min_bins)


def count_series(arrival_times: dict[str, Sequence[float]], start_s: float, end_s: float,
                 bin_s: float = BIN_SECONDS) -> list[PhaseCountSeries]:
    """Bin CV arrival times per phase into fixed-width count bins over [start, end)."""
    nbins = max(1, int(np.floor((end_s - start_s) / bin_s)))
    edges = start_s + bin_s * np.arange(nbins + 1)
    out = []
    for pid, times in arrival_times.items():
        c, _ = np.histogram(np.asarray(times, dtype=float), bins=edges)
        out.append(PhaseCountSeries(pid, tuple(int(x) for x in c)))
    return out
