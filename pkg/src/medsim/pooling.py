"""Study effects on the log-ratio-of-medians scale and their pooling.

Fixed-effect, DerSimonian-Laird and REML random-effects pooling are
provided. REML maximises the restricted log-likelihood over tau^2 with a
bounded golden-section search; when the search does not converge the fit
falls back to the fixed-effect model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from medsim.distributions import SummaryStats
from medsim.errors import DomainError, EmptySampleError, InsufficientDataError
from medsim.estimators import estimate_se

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

REML_TOL = 1e-8
REML_MAX_ITER = 200
# coarse scan used to bracket the REML maximum before refining
REML_SCAN_POINTS = 41


@dataclass(frozen=True)
class StudyEffect:
    y: float
    v: float

    def __post_init__(self):
        if not math.isfinite(self.y):
            raise DomainError(f"effect must be finite, got {self.y}")
        if not (math.isfinite(self.v) and self.v > 0):
            raise DomainError(f"effect variance must be finite and > 0, got {self.v}")


@dataclass(frozen=True)
class PooledEstimate:
    effect: float
    variance: float
    tau2_hat: float
    method_used: str
    fell_back: bool
    ci_low: float
    ci_high: float

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low


def z_quantile(alpha: float) -> float:
    """Two-sided critical value z_{1 - alpha/2}."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return float(ndtri(1.0 - alpha / 2.0))


def confidence_interval(effect: float, variance: float, alpha: float = 0.05) -> tuple[float, float]:
    if not (math.isfinite(variance) and variance > 0):
        raise DomainError(f"variance must be > 0, got {variance}")
    half = z_quantile(alpha) * math.sqrt(variance)
    return effect - half, effect + half


def study_effect(control: SummaryStats, intervention: SummaryStats, estimator: str) -> StudyEffect:
    """Log-ratio of medians, log(m_I / m_C), with a delta-method variance.

    var(log m) is approximated by se(m)^2 / m^2 and the arms are independent.
    """
    if control.median <= 0 or intervention.median <= 0:
        raise DomainError(
            f"log-ratio needs positive medians, got control={control.median}, intervention={intervention.median}"
        )
    se_c = estimate_se(estimator, control).se
    se_i = estimate_se(estimator, intervention).se
    y = math.log(intervention.median / control.median)
    v = (se_c / control.median) ** 2 + (se_i / intervention.median) ** 2
    return StudyEffect(y, v)


def _arrays(effects: Sequence[StudyEffect]):
    if len(effects) == 0:
        raise EmptySampleError("no study effects to pool")
    y = np.array([e.y for e in effects], dtype=float)
    v = np.array([e.v for e in effects], dtype=float)
    return y, v


def _estimate(y, v, tau2, method, fell_back, alpha):
    w = 1.0 / (v + tau2)
    sw = w.sum()
    effect = float(np.dot(w, y) / sw)
    variance = float(1.0 / sw)
    lo, hi = confidence_interval(effect, variance, alpha)
    return PooledEstimate(effect, variance, float(tau2), method, fell_back, lo, hi)


def pool_fixed(effects: Sequence[StudyEffect], alpha: float = 0.05) -> PooledEstimate:
    """Inverse-variance weighted mean, tau^2 fixed at zero."""
    y, v = _arrays(effects)
    return _estimate(y, v, 0.0, "FE", False, alpha)


def tau2_dl(effects: Sequence[StudyEffect]) -> float:
    """DerSimonian-Laird moment estimate of tau^2, truncated at zero."""
    y, v = _arrays(effects)
    if y.size < 2:
        raise InsufficientDataError(f"tau^2 needs at least 2 studies, got {y.size}")
    w = 1.0 / v
    sw = w.sum()
    mu = np.dot(w, y) / sw
    q = float(np.dot(w, (y - mu) ** 2))
    c = sw - np.dot(w, w) / sw
    return max(0.0, (q - (y.size - 1)) / c)


def pool_dl(effects: Sequence[StudyEffect], alpha: float = 0.05) -> PooledEstimate:
    y, v = _arrays(effects)
    return _estimate(y, v, tau2_dl(effects), "DL", False, alpha)


def restricted_loglik(tau2, y, v):
    """Restricted log-likelihood of the random-effects model.

    ``tau2`` may be a scalar or an array; the result has the same shape.
    """
    t = np.asarray(tau2, dtype=float)
    tot = v[None, :] + t.reshape(-1, 1)
    w = 1.0 / tot
    sw = w.sum(axis=1)
    mu = (w * y).sum(axis=1) / sw
    resid = (w * (y[None, :] - mu[:, None]) ** 2).sum(axis=1)
    ll = -0.5 * ((y.size - 1) * math.log(2.0 * math.pi) + np.log(tot).sum(axis=1) + np.log(sw) + resid)
    return ll.reshape(t.shape) if t.ndim else float(ll[0])


def reml_upper_bound(y, v) -> float:
    return float(10.0 * v.max() + y.var(ddof=1))


def golden_section_max(f, lo, hi, tol=REML_TOL, max_iter=REML_MAX_ITER):
    """Maximise a unimodal ``f`` on [lo, hi].

    Returns ``(x, fx, iterations, converged)``. Convergence means the bracket
    shrank below ``tol`` within ``max_iter`` steps with finite objective
    values throughout. The bracket endpoints are kept as candidates so a
    maximum on the boundary is returned exactly.
    """
    f_lo, f_hi = f(lo), f(hi)
    a, b = lo, hi
    x1 = b - INVPHI * (b - a)
    x2 = a + INVPHI * (b - a)
    f1, f2 = f(x1), f(x2)
    finite = all(math.isfinite(z) for z in (f_lo, f_hi, f1, f2))
    it = 0
    while finite and b - a > tol and it < max_iter:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INVPHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INVPHI * (b - a)
            f2 = f(x2)
        finite = math.isfinite(f1) and math.isfinite(f2)
        it += 1
    converged = finite and b - a <= tol
    x, fx = (x1, f1) if f1 >= f2 else (x2, f2)
    for cand, fc in ((lo, f_lo), (hi, f_hi)):
        if fc > fx:
            x, fx = cand, fc
    return x, fx, it, converged


def fit_reml_tau2(y, v, tol=REML_TOL, max_iter=REML_MAX_ITER):
    """REML estimate of tau^2 on [0, 10 max(v) + var(y)].

    A coarse scan brackets the best grid point, then golden-section refines
    inside the bracket. Returns ``(tau2, converged)``.
    """
    upper = reml_upper_bound(y, v)
    if max_iter <= 0 or not math.isfinite(upper):
        return math.nan, False
    if upper <= 0:
        return 0.0, True
    grid = np.linspace(0.0, upper, REML_SCAN_POINTS)
    ll = restricted_loglik(grid, y, v)
    if not np.all(np.isfinite(ll)):
        return math.nan, False
    i = int(np.argmax(ll))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    x, _, _, converged = golden_section_max(lambda t: restricted_loglik(t, y, v), lo, hi, tol, max_iter)
    return max(float(x), 0.0), converged


def pool_reml(
    effects: Sequence[StudyEffect],
    alpha: float = 0.05,
    max_iter: int = REML_MAX_ITER,
    tol: float = REML_TOL,
) -> PooledEstimate:
    """REML random-effects pooling with fixed-effect fallback.

    A search that exhausts ``max_iter`` or meets a non-finite objective is
    treated as non-convergence; the fixed-effect fit is then returned with
    ``fell_back`` set.
    """
    y, v = _arrays(effects)
    if y.size < 2:
        raise InsufficientDataError(f"REML needs at least 2 studies, got {y.size}")
    tau2, converged = fit_reml_tau2(y, v, tol, max_iter)
    if not converged:
        return _estimate(y, v, 0.0, "FE", True, alpha)
    return _estimate(y, v, tau2, "REML", False, alpha)


def pool(effects: Sequence[StudyEffect], method: str, alpha: float = 0.05, reml_max_iter: int = REML_MAX_ITER):
    if method == "FE":
        return pool_fixed(effects, alpha)
    if method == "DL":
        return pool_dl(effects, alpha)
    if method == "REML":
        return pool_reml(effects, alpha, max_iter=reml_max_iter)
    raise DomainError(f"unknown pooling method {method!r}")
