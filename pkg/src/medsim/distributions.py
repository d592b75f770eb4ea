"""Parametric families used to generate arm-level data.

Four families are supported: exponential (rate), normal (mean, sd),
lognormal (meanlog, sdlog) and Cauchy (location, scale). Densities, CDFs,
medians and quantiles are closed form; sampling goes through a numpy
``Generator`` owned by the caller.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtri

from medsim.errors import DomainError, EmptySampleError, InsufficientDataError

LN2 = math.log(2.0)

# probabilities reported as (q1, median, q3)
QUARTILE_PROBS = (0.25, 0.5, 0.75)


class Family(str, Enum):
    EXPONENTIAL = "exponential"
    NORMAL = "normal"
    LOGNORMAL = "lognormal"
    CAUCHY = "cauchy"


_ARITY = {
    Family.EXPONENTIAL: 1,
    Family.NORMAL: 2,
    Family.LOGNORMAL: 2,
    Family.CAUCHY: 2,
}


def _finite(x):
    return isinstance(x, numbers.Real) and not isinstance(x, bool) and math.isfinite(x)


@dataclass(frozen=True)
class DistributionSpec:
    """A family tag plus its ordered parameters.

    The last parameter is always the positive scale-type one (rate, sd,
    sdlog or Cauchy scale).
    """

    family: Family
    params: tuple[float, ...]

    def __post_init__(self):
        try:
            fam = Family(self.family)
        except ValueError:
            raise DomainError(f"unknown distribution family {self.family!r}") from None
        object.__setattr__(self, "family", fam)
        params = tuple(self.params)
        if len(params) != _ARITY[fam]:
            raise DomainError(f"{fam.value} takes {_ARITY[fam]} parameter(s), got {len(params)}")
        if not all(_finite(p) for p in params):
            raise DomainError(f"{fam.value} parameters must be finite reals, got {params}")
        if params[-1] <= 0:
            raise DomainError(f"{fam.value} scale-type parameter must be > 0, got {params[-1]}")
        object.__setattr__(self, "params", tuple(float(p) for p in params))

    @classmethod
    def exponential(cls, rate):
        return cls(Family.EXPONENTIAL, (rate,))

    @classmethod
    def normal(cls, mean, sd):
        return cls(Family.NORMAL, (mean, sd))

    @classmethod
    def lognormal(cls, meanlog, sdlog):
        return cls(Family.LOGNORMAL, (meanlog, sdlog))

    @classmethod
    def cauchy(cls, location, scale):
        return cls(Family.CAUCHY, (location, scale))


@dataclass(frozen=True)
class SummaryStats:
    """Per-arm reported values: size, median and first/third quartiles."""

    n: int
    median: float
    q1: float
    q3: float

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise InsufficientDataError(f"summary needs n >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        for name in ("median", "q1", "q3"):
            if not _finite(getattr(self, name)):
                raise DomainError(f"{name} must be finite, got {getattr(self, name)}")
        if not self.q1 <= self.median <= self.q3:
            raise DomainError(f"need q1 <= median <= q3, got ({self.q1}, {self.median}, {self.q3})")


def density_at(dist: DistributionSpec, x: float) -> float:
    """Population density f(x); zero outside the support."""
    fam = dist.family
    if fam is Family.EXPONENTIAL:
        (rate,) = dist.params
        return rate * math.exp(-rate * x) if x >= 0 else 0.0
    if fam is Family.NORMAL:
        mu, sd = dist.params
        z = (x - mu) / sd
        return math.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))
    if fam is Family.LOGNORMAL:
        mu, sd = dist.params
        if x <= 0:
            return 0.0
        z = (math.log(x) - mu) / sd
        return math.exp(-0.5 * z * z) / (x * sd * math.sqrt(2.0 * math.pi))
    x0, s = dist.params
    z = (x - x0) / s
    return 1.0 / (math.pi * s * (1.0 + z * z))


def cdf(dist: DistributionSpec, x: float) -> float:
    fam = dist.family
    if fam is Family.EXPONENTIAL:
        (rate,) = dist.params
        return -math.expm1(-rate * x) if x > 0 else 0.0
    if fam is Family.NORMAL:
        mu, sd = dist.params
        return 0.5 * math.erfc(-(x - mu) / (sd * math.sqrt(2.0)))
    if fam is Family.LOGNORMAL:
        mu, sd = dist.params
        if x <= 0:
            return 0.0
        return 0.5 * math.erfc(-(math.log(x) - mu) / (sd * math.sqrt(2.0)))
    x0, s = dist.params
    return 0.5 + math.atan((x - x0) / s) / math.pi


def quantile(dist: DistributionSpec, p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile probability must lie in (0, 1), got {p}")
    fam = dist.family
    if fam is Family.EXPONENTIAL:
        (rate,) = dist.params
        return -math.log1p(-p) / rate
    if fam is Family.NORMAL:
        mu, sd = dist.params
        return mu + sd * float(ndtri(p))
    if fam is Family.LOGNORMAL:
        mu, sd = dist.params
        return math.exp(mu + sd * float(ndtri(p)))
    x0, s = dist.params
    return x0 + s * math.tan(math.pi * (p - 0.5))


def median_of(dist: DistributionSpec) -> float:
    fam = dist.family
    if fam is Family.EXPONENTIAL:
        return LN2 / dist.params[0]
    if fam is Family.LOGNORMAL:
        return math.exp(dist.params[0])
    # symmetric families
    return dist.params[0]


def population_summary(dist: DistributionSpec, n: int) -> SummaryStats:
    """Summary a sample of size ``n`` would report if it hit the population quartiles."""
    q1, m, q3 = (quantile(dist, p) for p in QUARTILE_PROBS)
    return SummaryStats(n=n, median=median_of(dist), q1=q1, q3=q3)


def sample(dist: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. values from ``dist`` using ``rng``."""
    if n < 1:
        raise EmptySampleError(f"sample size must be >= 1, got {n}")
    fam = dist.family
    if fam is Family.EXPONENTIAL:
        return rng.exponential(scale=1.0 / dist.params[0], size=n)
    if fam is Family.NORMAL:
        return rng.normal(dist.params[0], dist.params[1], size=n)
    if fam is Family.LOGNORMAL:
        return rng.lognormal(dist.params[0], dist.params[1], size=n)
    # inverse CDF; no truncation of the tails
    x0, s = dist.params
    u = rng.random(n)
    return x0 + s * np.tan(np.pi * (u - 0.5))


def summarize(values) -> SummaryStats:
    """Size, median and quartiles of a sample.

    Quantiles use linear interpolation between order statistics (the
    "type 7" rule that R and numpy use by default).
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise InsufficientDataError(f"need at least 2 values to summarise, got {arr.size}")
    q1, m, q3 = np.percentile(arr, [25.0, 50.0, 75.0], method="linear")
    return SummaryStats(n=arr.size, median=float(m), q1=float(q1), q3=float(q3))
