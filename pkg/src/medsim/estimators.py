"""Density-based standard errors for the sample median.

Each ``g_*`` estimator assumes a family, fits its parameters from the
reported median (and quartiles where needed), then evaluates the large-sample
approximation

    se(m) = 1 / (2 * sqrt(n) * f(median))

at the fitted density. ``estimate_se`` dispatches by name so pooling code does
not need to know which estimator is in use.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from typing import Callable

from scipy.special import ndtri

from medsim.distributions import LN2, DistributionSpec, Family, SummaryStats, density_at
from medsim.errors import DegenerateSpreadError, DomainError, UnknownEstimatorError

Z75 = float(ndtri(0.75))


@dataclass(frozen=True)
class SeEstimate:
    se: float
    assumed_family: Family
    fitted_params: tuple[float, ...]

    def __post_init__(self):
        if not (math.isfinite(self.se) and self.se > 0):
            raise DomainError(f"standard error must be finite and positive, got {self.se}")

    def __float__(self):
        return self.se


def _check_n(n):
    if isinstance(n, bool) or not isinstance(n, numbers.Real) or not math.isfinite(n) or n != int(n):
        raise DomainError(f"sample size must be an integer, got {n!r}")
    if n < 2:
        raise DomainError(f"sample size must be >= 2, got {n}")
    return int(n)


def _check_real(name, x):
    if isinstance(x, bool) or not isinstance(x, numbers.Real) or not math.isfinite(x):
        raise DomainError(f"{name} must be a finite real, got {x!r}")
    return float(x)


def _check_spread(q1, q3):
    if q1 >= q3:
        raise DegenerateSpreadError(f"need q1 < q3 to fit a spread, got q1={q1}, q3={q3}")


def _from_density(n, median, dist):
    se = 1.0 / (2.0 * math.sqrt(n) * density_at(dist, median))
    return SeEstimate(se=se, assumed_family=dist.family, fitted_params=dist.params)


def g_exp(n, median) -> SeEstimate:
    """Exponential assumption: rate fitted as ln 2 / median."""
    n = _check_n(n)
    median = _check_real("median", median)
    if median <= 0:
        raise DomainError(f"median must be > 0 under an exponential assumption, got {median}")
    return _from_density(n, median, DistributionSpec.exponential(LN2 / median))


def g_norm(n, median, q1, q3) -> SeEstimate:
    """Normal assumption: mean = median, sd = IQR / (2 z_0.75)."""
    n = _check_n(n)
    median, q1, q3 = (_check_real(k, v) for k, v in (("median", median), ("q1", q1), ("q3", q3)))
    _check_spread(q1, q3)
    sd = (q3 - q1) / (2.0 * Z75)
    return _from_density(n, median, DistributionSpec.normal(median, sd))


def g_lnorm(n, median, q1, q3) -> SeEstimate:
    """Lognormal assumption: meanlog = log(median), sdlog from the log-IQR."""
    n = _check_n(n)
    median, q1, q3 = (_check_real(k, v) for k, v in (("median", median), ("q1", q1), ("q3", q3)))
    if min(q1, median, q3) <= 0:
        raise DomainError(f"lognormal fit needs positive quartiles, got ({q1}, {median}, {q3})")
    _check_spread(q1, q3)
    if not q1 < median < q3:
        raise DegenerateSpreadError(f"lognormal fit needs q1 < median < q3, got ({q1}, {median}, {q3})")
    sdlog = (math.log(q3) - math.log(q1)) / (2.0 * Z75)
    return _from_density(n, median, DistributionSpec.lognormal(math.log(median), sdlog))


def g_cauchy(n, median, q1, q3) -> SeEstimate:
    # Cauchy IQR is exactly twice the scale
    n = _check_n(n)
    median, q1, q3 = (_check_real(k, v) for k, v in (("median", median), ("q1", q1), ("q3", q3)))
    _check_spread(q1, q3)
    return _from_density(n, median, DistributionSpec.cauchy(median, (q3 - q1) / 2.0))


ESTIMATORS: dict[str, Callable[[SummaryStats], SeEstimate]] = {
    "g_exp": lambda s: g_exp(s.n, s.median),
    "g_norm": lambda s: g_norm(s.n, s.median, s.q1, s.q3),
    "g_lnorm": lambda s: g_lnorm(s.n, s.median, s.q1, s.q3),
    "g_cauchy": lambda s: g_cauchy(s.n, s.median, s.q1, s.q3),
}


def check_estimator(name: str) -> str:
    if name not in ESTIMATORS:
        raise UnknownEstimatorError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}")
    return name


def estimate_se(name: str, stats: SummaryStats) -> SeEstimate:
    return ESTIMATORS[check_estimator(name)](stats)
