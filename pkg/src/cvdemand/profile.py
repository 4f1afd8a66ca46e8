"""Within-cycle arrival profile and observation weights."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .trajectory import ArrivalObservation

DEFAULT_BINS = 20
DEFAULT_FLOOR = 0.05


@dataclass(frozen=True, eq=False)
class ArrivalProfile:
    """Histogram of arrival intensity over normalized cycle position, mean 1."""

    phase_id: str
    bin_values: np.ndarray
    floor_epsilon: float = DEFAULT_FLOOR

    def __post_init__(self):
        vals = np.asarray(self.bin_values, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise ValueError("profile needs at least one bin")
        object.__setattr__(self, "bin_values", vals)
        # cumulative mass at bin edges, H(0)=0 and H(1)=1
        edges = np.concatenate(([0.0], np.cumsum(vals))) / vals.size
        edges[-1] = 1.0
        object.__setattr__(self, "_edges", edges)

    @property
    def bin_count(self) -> int:
        return self.bin_values.size

    def cumulative_fraction(self, tau):
        """H(tau): piecewise-linear integral of the profile over [0, tau]."""
        return np.interp(tau, np.linspace(0.0, 1.0, self.bin_count + 1), self._edges)

    def to_json(self) -> dict:
        return {"phase_id": self.phase_id, "bin_values": self.bin_values.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "ArrivalProfile":
        return cls(str(obj["phase_id"]), np.asarray(obj["bin_values"], dtype=float))


def uniform_profile(phase_id: str, bin_count: int = DEFAULT_BINS) -> ArrivalProfile:
    return ArrivalProfile(phase_id, np.ones(bin_count))


def build_profile(historical_offsets: Iterable[tuple[float, float]], bin_count: int = DEFAULT_BINS,
                  floor_epsilon: float = DEFAULT_FLOOR, phase_id: str = "") -> ArrivalProfile:
    """Histogram ``offset / cycle_length`` into bins, floor, renormalize to mean 1."""
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    pairs = np.asarray(list(historical_offsets), dtype=float).reshape(-1, 2)
    if pairs.shape[0] == 0:
        return ArrivalProfile(phase_id, np.ones(bin_count), floor_epsilon)
    tau = np.clip(pairs[:, 0] / pairs[:, 1], 0.0, 1.0)
    idx = np.minimum((tau * bin_count).astype(int), bin_count - 1)
    counts = np.bincount(idx, minlength=bin_count).astype(float)
    values = counts * bin_count / counts.sum()
    values = np.maximum(values, floor_epsilon)
    values *= bin_count / values.sum()
    return ArrivalProfile(phase_id, values, floor_epsilon)


def cumulative_arrivals(profile: ArrivalProfile, t_s, C_s: float):
    """Integrated profile over ``[0, t_s]`` in seconds; equals ``C_s`` at the cycle end."""
    t = np.asarray(t_s, dtype=float)
    if np.any(t < 0) or np.any(t > C_s):
        raise ValueError("time outside [0, C]")
    out = C_s * profile.cumulative_fraction(t / C_s)
    return float(out) if out.ndim == 0 else out


def observation_weights(observations: Sequence[ArrivalObservation], profile: ArrivalProfile,
                        C: float) -> list[ArrivalObservation]:
    """Attach raw weights (integrated profile) and weights normalized to sum to x."""
    if not observations:
        return []
    w = np.asarray(cumulative_arrivals(profile, [ob.arrival_offset_s for ob in observations], C),
                   dtype=float).reshape(-1)
    total = w.sum()
    # all offsets at the red start leave the normalization undefined: weigh equally
    omega = w * len(observations) / total if total > 0 else np.ones(w.size)
    return [ob.with_weights(float(a), float(b)) for ob, a, b in zip(observations, w, omega)]


def save_profiles(profiles: dict[str, ArrivalProfile], path) -> None:
    Path(path).write_text(json.dumps([p.to_json() for p in profiles.values()], indent=2))


def load_profiles(path) -> dict[str, ArrivalProfile]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = [data]
    return {str(d["phase_id"]): ArrivalProfile.from_json(d) for d in data}
