"""Synthetic meta-analytic data.

A trial's data set is K studies, each with a control and an intervention arm.
For study k:

* the total size N_k is uniform on the integers [n_min, n_max] and the
  intervention share is Beta(alloc_shape) distributed;
* a random effect gamma_k ~ N(0, tau2) is split equally between the arms, so
  the control median is scaled by exp(-gamma_k/2) and the intervention median
  by exp(+gamma_k/2);
* each arm is sampled from its family and summarised by (n, median, q1, q3).

Random draws are consumed from a single generator in a fixed order (sizes,
then effects, then per study control before intervention), which is part of
the reproducibility contract.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from medsim.distributions import LN2, DistributionSpec, Family, SummaryStats, sample, summarize
from medsim.errors import ConfigError, DomainError
from medsim.estimators import ESTIMATORS

POOLING_METHODS = ("FE", "DL", "REML")

# Defaults for values the method leaves open; overridable everywhere.
DEFAULT_N_MIN = 20
DEFAULT_N_MAX = 200
DEFAULT_ALLOC_SHAPE = (10.0, 10.0)
DEFAULT_SHAPE = 0.2


@dataclass(frozen=True)
class SimConfig:
    """One simulation cell.

    ``base_rate`` is the control-arm exponential rate; the control population
    median is ``ln 2 / base_rate`` for every family. Non-exponential families
    hold their spread parameter (normal sd, lognormal sdlog, Cauchy scale)
    fixed at ``shape`` and place the median by their location parameter.
    ``rho`` is control median over intervention median.
    """

    K: int = 5
    tau2: float = 0.0
    rho: float = 1.0
    base_rate: float = 1.0
    family: str = "exponential"
    shape: float = DEFAULT_SHAPE
    n_min: int = DEFAULT_N_MIN
    n_max: int = DEFAULT_N_MAX
    alloc_shape: tuple[float, float] = DEFAULT_ALLOC_SHAPE
    alpha: float = 0.05
    estimator: str = "g_exp"
    pooling: str = "REML"
    trials: int = 100

    def __post_init__(self):
        object.__setattr__(self, "alloc_shape", tuple(float(x) for x in self.alloc_shape))
        self.validate(single_study=True)
        for name in ("tau2", "rho", "base_rate", "shape", "alpha"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "K", int(self.K))

    def validate(self, single_study: bool = False) -> "SimConfig":
        def need(ok, key, msg):
            if not ok:
                raise ConfigError(f"{key}: {msg}", key=key)

        need(_is_int(self.K) and self.K >= 1, "K", f"study count must be an integer >= 1, got {self.K!r}")
        need(_is_real(self.tau2) and self.tau2 >= 0, "tau2", f"must be >= 0, got {self.tau2!r}")
        need(_is_real(self.rho) and self.rho > 0, "rho", f"must be > 0, got {self.rho!r}")
        need(_is_real(self.base_rate) and self.base_rate > 0, "base_rate", f"must be > 0, got {self.base_rate!r}")
        need(self.family in {f.value for f in Family}, "family", f"unknown family {self.family!r}")
        need(_is_real(self.shape) and self.shape > 0, "shape", f"must be > 0, got {self.shape!r}")
        # both arms need at least two observations
        need(_is_int(self.n_min) and self.n_min >= 4, "n_min", f"must be an integer >= 4, got {self.n_min!r}")
        need(_is_int(self.n_max) and self.n_max >= self.n_min, "n_max", f"must be an integer >= n_min, got {self.n_max!r}")
        need(
            len(self.alloc_shape) == 2 and all(_is_real(b) and b > 0 for b in self.alloc_shape),
            "alloc_shape",
            f"must be two positive Beta parameters, got {self.alloc_shape!r}",
        )
        need(_is_real(self.alpha) and 0 < self.alpha < 1, "alpha", f"must lie in (0, 1), got {self.alpha!r}")
        need(self.estimator in ESTIMATORS, "estimator", f"unknown estimator {self.estimator!r}")
        need(self.pooling in POOLING_METHODS, "pooling", f"must be one of {POOLING_METHODS}, got {self.pooling!r}")
        need(_is_int(self.trials) and self.trials >= 1, "trials", f"must be an integer >= 1, got {self.trials!r}")
        if not single_study and self.pooling != "FE":
            need(self.K >= 2, "K", f"{self.pooling} pooling needs K >= 2, got {self.K}")
        return self

    @property
    def control_median(self) -> float:
        return LN2 / self.base_rate

    @property
    def true_effect(self) -> float:
        """log(intervention median / control median) = -log(rho)."""
        return -math.log(self.rho)

    def flat(self) -> dict:
        d = asdict(self)
        d["alloc_shape_1"], d["alloc_shape_2"] = d.pop("alloc_shape")
        return d


def _is_int(x):
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _is_real(x):
    return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass(frozen=True)
class StudyArms:
    gamma: float
    control: DistributionSpec
    intervention: DistributionSpec
    n_control: int
    n_intervention: int

    @property
    def rate_control(self) -> float:
        return self.control.params[0]

    @property
    def rate_intervention(self) -> float:
        return self.intervention.params[0]


@dataclass(frozen=True)
class StudySummary:
    control: SummaryStats
    intervention: SummaryStats
    arms: StudyArms


@dataclass(frozen=True)
class MetaSample:
    studies: tuple[StudySummary, ...]

    def __len__(self):
        return len(self.studies)

    def __iter__(self):
        return iter(self.studies)

    def rows(self) -> list[dict]:
        out = []
        for k, st in enumerate(self.studies, start=1):
            for arm, stats, dist in (
                ("control", st.control, st.arms.control),
                ("intervention", st.intervention, st.arms.intervention),
            ):
                out.append(
                    {
                        "study": k,
                        "arm": arm,
                        "n": stats.n,
                        "median": stats.median,
                        "q1": stats.q1,
                        "q3": stats.q3,
                        "gamma": st.arms.gamma,
                        "rate": dist.params[0],
                    }
                )
        return out


META_SAMPLE_COLUMNS = ("study", "arm", "n", "median", "q1", "q3", "gamma", "rate")


def fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def write_meta_sample_csv(ms: MetaSample, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(META_SAMPLE_COLUMNS)
        for row in ms.rows():
            w.writerow([fmt(row[c]) for c in META_SAMPLE_COLUMNS])


def sim_n(
    K: int = 5,
    a: int = DEFAULT_N_MIN,
    b: int = DEFAULT_N_MAX,
    alloc_shape: Sequence[float] = DEFAULT_ALLOC_SHAPE,
    rng: np.random.Generator | None = None,
) -> list[tuple[int, int]]:
    """Per-study (n_control, n_intervention) pairs.

    The intervention count is round-half-even(p_k * N_k) clamped to
    [2, N_k - 2].
    """
    if not _is_int(K) or K < 1:
        raise ConfigError(f"K must be an integer >= 1, got {K!r}", key="K")
    if not (_is_int(a) and _is_int(b)) or a < 4 or b < a:
        raise ConfigError(f"need integer bounds 4 <= a <= b, got a={a!r}, b={b!r}", key="n_min")
    b1, b2 = alloc_shape
    if not (b1 > 0 and b2 > 0):
        raise ConfigError(f"Beta parameters must be > 0, got {alloc_shape!r}", key="alloc_shape")
    if rng is None:
        rng = np.random.default_rng()
    totals = rng.integers(a, b, size=K, endpoint=True)
    props = rng.beta(b1, b2, size=K)
    out = []
    for total, p in zip(totals.tolist(), props.tolist()):
        n_i = min(max(round(p * total), 2), total - 2)
        out.append((total - n_i, n_i))
    return out


def draw_random_effects(K: int, tau2: float, rng: np.random.Generator) -> np.ndarray:
    if not _is_real(tau2) or tau2 < 0:
        raise DomainError(f"tau2 must be >= 0, got {tau2!r}")
    if tau2 == 0:
        return np.zeros(K)
    return rng.normal(0.0, math.sqrt(tau2), size=K)


def solve_arm_rates(base_rate: float, rho: float, gamma: float) -> tuple[float, float]:
    """Exponential arm rates for one study.

    With medians ln2/rate, rho = control median / intervention median means
    the intervention rate is rho * base_rate.
    """
    if not (_is_real(base_rate) and base_rate > 0):
        raise DomainError(f"base_rate must be > 0, got {base_rate!r}")
    if not (_is_real(rho) and rho > 0):
        raise DomainError(f"rho must be > 0, got {rho!r}")
    rate_i = rho * base_rate
    return base_rate * math.exp(gamma / 2.0), rate_i * math.exp(-gamma / 2.0)


def arm_distributions(config: SimConfig, gamma: float) -> tuple[DistributionSpec, DistributionSpec]:
    fam = Family(config.family)
    if fam is Family.EXPONENTIAL:
        rc, ri = solve_arm_rates(config.base_rate, config.rho, gamma)
        return DistributionSpec.exponential(rc), DistributionSpec.exponential(ri)
    # same median construction as the exponential case, expressed on the median scale
    m_c = config.control_median * math.exp(-gamma / 2.0)
    m_i = config.control_median / config.rho * math.exp(gamma / 2.0)
    if fam is Family.LOGNORMAL:
        return (
            DistributionSpec.lognormal(math.log(m_c), config.shape),
            DistributionSpec.lognormal(math.log(m_i), config.shape),
        )
    return DistributionSpec(fam, (m_c, config.shape)), DistributionSpec(fam, (m_i, config.shape))


def sim_stats(config: SimConfig, rng: np.random.Generator, K: int | None = None) -> MetaSample:
    """Simulate one meta-analytic data set; ``K`` overrides ``config.K``."""
    K = config.K if K is None else K
    sizes = sim_n(K, config.n_min, config.n_max, config.alloc_shape, rng)
    gammas = draw_random_effects(K, config.tau2, rng)
    studies = []
    for (n_c, n_i), gamma in zip(sizes, gammas.tolist()):
        d_c, d_i = arm_distributions(config, gamma)
        s_c = summarize(sample(d_c, n_c, rng))
        s_i = summarize(sample(d_i, n_i, rng))
        studies.append(StudySummary(s_c, s_i, StudyArms(gamma, d_c, d_i, n_c, n_i)))
    return MetaSample(tuple(studies))


AXIS_FIELDS = ("K", "tau2", "rho", "base_rate", "family", "estimator", "pooling")


def sim_df(axes: Mapping[str, Iterable] | None = None, **settings) -> list[SimConfig]:
    """Cartesian product of axis values, one ``SimConfig`` per cell.

    ``axes`` maps any ``SimConfig`` field to a list of values; ``settings``
    fixes scalar fields for every cell. Cells are ordered with the first
    axis varying slowest, and duplicate values are kept.
    """
    axes = dict(axes or {})
    names = {f.name for f in fields(SimConfig)}
    for key in list(axes) + list(settings):
        if key not in names:
            raise ConfigError(f"unknown field {key!r}", key=key)
    lists = {}
    for key, values in axes.items():
        values = list(values)
        if not values:
            raise ConfigError(f"{key}: axis must be non-empty", key=key)
        lists[key] = values
    base = SimConfig(**settings) if settings else SimConfig()
    keys = list(lists)
    return [replace(base, **dict(zip(keys, combo))) for combo in itertools.product(*(lists[k] for k in keys))]
