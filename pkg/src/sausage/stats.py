"""Monte Carlo estimate container and comparison helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .rng import SeedSpec


@dataclass
class MCEstimate:
    """Mean with standard error and an optional one-sided bias interval.

    ``bias_bound = (lo, hi)`` means the limit quantity lies in
    ``[mean + lo, mean + hi]`` up to sampling error.
    """

    mean: float
    stderr: float
    replicas: int
    seed: SeedSpec
    bias_bound: tuple[float, float] | None = None
    params: dict[str, Any] = field(default_factory=dict)
    samples: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, samples, seed, bias_bound=None, params=None):
        x = np.asarray(samples, dtype=np.float64)
        r = x.shape[0]
        mean = float(np.mean(x)) if r else float("nan")
        se = float(np.std(x, ddof=1) / math.sqrt(r)) if r >= 2 else float("nan")
        return cls(mean, se, r, seed, bias_bound, dict(params or {}), x)

    @property
    def bias_width(self) -> float:
        if self.bias_bound is None:
            return 0.0
        return max(abs(self.bias_bound[0]), abs(self.bias_bound[1]))

    def interval(self, z: float = 3.0) -> tuple[float, float]:
        lo, hi = self.bias_bound or (0.0, 0.0)
        return self.mean + lo - z * self.stderr, self.mean + hi + z * self.stderr

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "replicas": self.replicas,
            "seed": {"master_seed": self.seed.master_seed, "stream_id": self.seed.stream_id},
            "bias_bound": list(self.bias_bound) if self.bias_bound else None,
            "params": self.params,
        }


def agree(m1: MCEstimate, m2: MCEstimate, z: float = 3.0) -> bool:
    """True if the two estimates' shifted 3-sigma intervals overlap."""
    lo1, hi1 = m1.interval(z=0.0)
    lo2, hi2 = m2.interval(z=0.0)
    sd = z * math.hypot(m1.stderr, m2.stderr)
    return lo1 - hi2 <= sd and lo2 - hi1 <= sd


def agree_value(m: MCEstimate, value: float, z: float = 3.0, margin: float = 0.0) -> bool:
    lo, hi = m.interval(z)
    return lo - margin <= value <= hi + margin


def ratio_error(a: float, sa: float, b: float, sb: float) -> tuple[float, float]:
    """First-order propagated error of a / b."""
    r = a / b
    if a == 0:
        return r, sa / abs(b)
    return r, abs(r) * math.hypot(sa / a, sb / b)


def doubling_bias(full, half, rate: float) -> tuple[float, float]:
    """Bias interval for a mean m(n) = L + c n^-rate, from paired values
    at n and n/2: the limit is m(n) - (m(n/2) - m(n)) / (2^rate - 1)."""
    if rate <= 0:
        return (0.0, 0.0)
    b = float(np.mean(half) - np.mean(full)) / (2.0**rate - 1.0)
    return (min(0.0, -b), max(0.0, -b))


def lln_rate(d: int, N: int) -> float:
    """Assumed decay exponent of the bias of |R^1_n + ... + R^N_n + A| / n^N."""
    return 0.5 if d - 2 * N <= 3 else 1.0
