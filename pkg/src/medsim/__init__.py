"""Coverage-probability simulations for estimators of the standard error of
the sample median, as used when meta-analysing log-ratios of medians."""

from medsim._version import __version__

from medsim.distributions import DistributionSpec, SummaryStats, density_at, median_of, sample, summarize
from medsim.estimators import SeEstimate, estimate_se, g_cauchy, g_exp, g_lnorm, g_norm
from medsim.simulate import SimConfig, sim_df, sim_n, sim_stats
from medsim.pooling import (
    PooledEstimate,
    StudyEffect,
    confidence_interval,
    pool_dl,
    pool_fixed,
    pool_reml,
    study_effect,
    tau2_dl,
)
from medsim.engine import CoverageReport, CoverageResult, TrialResult, metasim, metasims, metatrial, singletrial

__all__ = [
    "CoverageReport",
    "CoverageResult",
    "DistributionSpec",
    "PooledEstimate",
    "SeEstimate",
    "SimConfig",
    "StudyEffect",
    "SummaryStats",
    "TrialResult",
    "confidence_interval",
    "density_at",
    "estimate_se",
    "g_cauchy",
    "g_exp",
    "g_lnorm",
    "g_norm",
    "median_of",
    "metasim",
    "metasims",
    "metatrial",
    "pool_dl",
    "pool_fixed",
    "pool_reml",
    "sample",
    "sim_df",
    "sim_n",
    "sim_stats",
    "singletrial",
    "study_effect",
    "summarize",
    "tau2_dl",
]
