"""Critical offspring distributions with exact rational weights."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

LAW_NAMES = ("geometric_half", "binary", "poisson_trunc", "delta_one")

# geometric_half is stored on {0..GEOM_CUT+1}: 2^-(k+1) for k < GEOM_CUT and the
# remaining mass 2^-GEOM_CUT at GEOM_CUT+1, which keeps sum and mean exact.
GEOM_CUT = 58
POISSON_CUT = 30


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring pmf mu (exact rationals) with its size-biased and root laws.

    ``variance`` is the variance of the named law; for ``geometric_half``
    that is the untruncated value 2 (the stored tail differs from it by
    less than 2^-50).
    """

    name: str
    weights: tuple[Fraction, ...]
    variance: float

    @property
    def pmf(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    @property
    def mean(self) -> Fraction:
        return sum((k * w for k, w in enumerate(self.weights)), Fraction(0))

    @property
    def total(self) -> Fraction:
        return sum(self.weights, Fraction(0))

    @property
    def degenerate(self) -> bool:
        return self.variance == 0

    @property
    def size_biased(self) -> tuple[Fraction, ...]:
        """mu_sb(k) = k mu(k)."""
        return tuple(k * w for k, w in enumerate(self.weights))

    @property
    def root(self) -> tuple[Fraction, ...]:
        """mu~(k) = mu(k - 1) for k >= 1."""
        return (Fraction(0),) + self.weights

    def exact_variance(self) -> Fraction:
        return sum((k * k * w for k, w in enumerate(self.weights)), Fraction(0)) - 1

    def pgf(self, s):
        """f(s) = sum_k mu(k) s^k."""
        return np.polynomial.polynomial.polyval(s, self.pmf)

    def psi(self, s):
        """(1 - f(s)) / (1 - s): pgf of the number of siblings on one side of
        a spine child."""
        return np.polynomial.polynomial.polyval(s, side_count_pmf(self))

    def cdf(self, which: str = "mu") -> np.ndarray:
        return _cdf({"mu": self.weights, "sb": self.size_biased, "root": self.root}[which])


def side_count_pmf(law: OffspringLaw) -> np.ndarray:
    """P(R = r) = P(mu > r), the law of the siblings to one side of the spine child."""
    w = law.pmf
    tail = np.cumsum(w[::-1])[::-1]  # tail[r] = P(mu >= r)
    return tail[1:]


def _cdf(weights) -> np.ndarray:
    c = np.cumsum([float(w) for w in weights])
    c[-1] = 1.0
    # trailing zero-mass entries keep the same value; searchsorted picks the first
    return c


@lru_cache(maxsize=None)
def make_law(name: str) -> OffspringLaw:
    if name == "geometric_half":
        w = [Fraction(1, 2 ** (k + 1)) for k in range(GEOM_CUT)]
        w += [Fraction(0), Fraction(1, 2**GEOM_CUT)]
        # sum_{k >= K} k 2^-(k+1) = (K + 1) 2^-K: the lumped atom sits at K + 1
        return OffspringLaw(name, tuple(w), 2.0)
    if name == "binary":
        return OffspringLaw(name, (Fraction(1, 2), Fraction(0), Fraction(1, 2)), 1.0)
    if name == "delta_one":
        return OffspringLaw(name, (Fraction(0), Fraction(1)), 0.0)
    if name == "poisson_trunc":
        w = [Fraction(math.exp(-1.0) / math.factorial(k)) for k in range(POISSON_CUT + 1)]
        rest = 1 - sum(w)
        deficit = 1 - sum(k * p for k, p in enumerate(w))
        # move mass to k=1 to restore the mean, balance the total at k=0
        w[1] += deficit
        w[0] += rest - deficit
        law = OffspringLaw(name, tuple(w), 0.0)
        return OffspringLaw(name, law.weights, float(law.exact_variance()))
    raise ValueError(f"unknown offspring law {name!r}; choose from {LAW_NAMES}")
