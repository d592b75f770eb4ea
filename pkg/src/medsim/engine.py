"""Coverage-probability engine.

A trial simulates one meta-analytic data set, pools it and checks whether the
confidence interval contains the true log-ratio of medians. ``metasim`` runs
many trials for one cell and ``metasims`` runs a whole grid.

Every trial draws from its own Philox stream keyed by
``(master_seed, config_id, trial_index)``, so results do not depend on the
order trials run in or on how many worker processes are used.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from medsim._version import __version__
from medsim.errors import ConfigError, DegenerateResultError, MedsimError
from medsim.pooling import REML_MAX_ITER, confidence_interval, pool, study_effect
from medsim.simulate import (
    DEFAULT_ALLOC_SHAPE,
    DEFAULT_N_MAX,
    DEFAULT_N_MIN,
    DEFAULT_SHAPE,
    SimConfig,
    fmt,
    sim_stats,
)

TRIAL_LOG_COLUMNS = ("config_id", "trial", "covered", "ci_low", "ci_high", "effect_hat", "method", "fell_back")

SUMMARY_COLUMNS = (
    "config_id",
    "K",
    "tau2",
    "rho",
    "base_rate",
    "family",
    "shape",
    "n_min",
    "n_max",
    "alloc_shape_1",
    "alloc_shape_2",
    "alpha",
    "estimator",
    "pooling",
    "trials",
    "completed",
    "successes",
    "coverage",
    "mean_ci_width",
    "fallback_count",
    "errors_count",
    "seed",
)

# values the simulation design leaves open, reported with every run
DOCUMENTED_DEFAULTS = {
    "n_min": DEFAULT_N_MIN,
    "n_max": DEFAULT_N_MAX,
    "alloc_shape": list(DEFAULT_ALLOC_SHAPE),
    "shape": DEFAULT_SHAPE,
}


def trial_rng(master_seed: int, config_id: int, trial_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(master_seed, spawn_key=(config_id, trial_index))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TrialResult:
    covered: bool
    ci_low: float
    ci_high: float
    effect_hat: float
    true_effect: float
    method_used: str
    fell_back: bool
    trial_index: int = 0
    error: str | None = None

    @property
    def errored(self) -> bool:
        return self.error is not None


def _errored(config, trial_index, exc):
    nan = math.nan
    return TrialResult(False, nan, nan, nan, config.true_effect, "error", False, trial_index, str(exc))


def metatrial(config: SimConfig, rng: np.random.Generator, trial_index: int = 0, reml_max_iter: int = REML_MAX_ITER) -> TrialResult:
    """Simulate K studies, pool them and check coverage of -log(rho)."""
    config.validate()
    theta = config.true_effect
    try:
        data = sim_stats(config, rng)
        effects = [study_effect(s.control, s.intervention, config.estimator) for s in data]
        est = pool(effects, config.pooling, config.alpha, reml_max_iter)
    except MedsimError as exc:
        return _errored(config, trial_index, exc)
    return TrialResult(
        covered=est.ci_low <= theta <= est.ci_high,
        ci_low=est.ci_low,
        ci_high=est.ci_high,
        effect_hat=est.effect,
        true_effect=theta,
        method_used=est.method_used,
        fell_back=est.fell_back,
        trial_index=trial_index,
    )


def singletrial(config: SimConfig, rng: np.random.Generator, trial_index: int = 0, reml_max_iter: int = REML_MAX_ITER) -> TrialResult:
    """One study, no pooling: the interval comes straight from (y, v)."""
    config.validate(single_study=True)
    theta = config.true_effect
    try:
        (study,) = sim_stats(config, rng, K=1)
        eff = study_effect(study.control, study.intervention, config.estimator)
        lo, hi = confidence_interval(eff.y, eff.v, config.alpha)
    except MedsimError as exc:
        return _errored(config, trial_index, exc)
    return TrialResult(lo <= theta <= hi, lo, hi, eff.y, theta, "FE", False, trial_index)


@dataclass(frozen=True)
class CoverageResult:
    config_id: int
    config: SimConfig
    trials: int
    successes: int
    coverage: float
    mean_ci_width: float
    fallback_count: int
    errors_count: int
    trial_results: tuple[TrialResult, ...] = field(default=(), repr=False, compare=False)

    @property
    def requested(self) -> int:
        return self.trials + self.errors_count


def aggregate(config_id: int, config: SimConfig, results: Sequence[TrialResult]) -> CoverageResult:
    """Fold trial results into a cell summary. Errored trials leave the denominator."""
    results = tuple(sorted(results, key=lambda r: r.trial_index))
    done = [r for r in results if not r.errored]
    if not done:
        raise DegenerateResultError(f"cell {config_id}: all {len(results)} trials errored")
    successes = sum(r.covered for r in done)
    return CoverageResult(
        config_id=config_id,
        config=config,
        trials=len(done),
        successes=successes,
        coverage=successes / len(done),
        mean_ci_width=math.fsum(r.ci_high - r.ci_low for r in done) / len(done),
        fallback_count=sum(r.fell_back for r in done),
        errors_count=len(results) - len(done),
        trial_results=results,
    )


def _run_chunk(task):
    config_id, config, start, stop, master_seed, single_study, reml_max_iter = task
    run = singletrial if single_study else metatrial
    return config_id, [
        run(config, trial_rng(master_seed, config_id, t), t, reml_max_iter) for t in range(start, stop)
    ]


def _chunks(trials, workers):
    size = max(1, math.ceil(trials / (4 * workers)))
    return [(s, min(s + size, trials)) for s in range(0, trials, size)]


def _execute(cells, trials, master_seed, single_study, reml_max_iter, workers, progress):
    tasks = [
        (cid, cfg, a, b, master_seed, single_study, reml_max_iter)
        for cid, cfg in cells
        for a, b in _chunks(trials, workers)
    ]
    per_cell = {cid: [] for cid, _ in cells}
    remaining = {cid: len(_chunks(trials, workers)) for cid, _ in cells}
    if workers <= 1:
        outputs = map(_run_chunk, tasks)
        pool_ = None
    else:
        pool_ = ProcessPoolExecutor(max_workers=workers)
        outputs = pool_.map(_run_chunk, tasks)
    results = []
    try:
        for cid, chunk in outputs:
            per_cell[cid].extend(chunk)
            remaining[cid] -= 1
            if remaining[cid] == 0:
                cfg = dict(cells)[cid]
                res = aggregate(cid, cfg, per_cell.pop(cid))
                results.append(res)
                if progress:
                    print(
                        f"[medsim] cell {len(results)}/{len(cells)} (id {cid}): coverage={res.coverage:.4f}",
                        file=sys.stderr,
                        flush=True,
                    )
    finally:
        if pool_ is not None:
            pool_.shutdown()
    return sorted(results, key=lambda r: r.config_id)


def metasim(
    config: SimConfig | None = None,
    trials: int | None = None,
    master_seed: int = 0,
    config_id: int = 0,
    single_study: bool = False,
    reml_max_iter: int = REML_MAX_ITER,
    workers: int = 1,
) -> CoverageResult:
    """Coverage of one cell over ``trials`` independent trials."""
    config = SimConfig() if config is None else config
    trials = config.trials if trials is None else trials
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ConfigError(f"trials must be an integer >= 1, got {trials!r}", key="trials")
    config = replace(config, trials=trials).validate(single_study=single_study)
    (res,) = _execute([(config_id, config)], trials, master_seed, single_study, reml_max_iter, workers, False)
    return res


@dataclass
class CoverageReport:
    results: list[CoverageResult]
    master_seed: int
    trials: int
    single_study: bool = False
    reml_max_iter: int = REML_MAX_ITER
    engine_version: str = __version__

    def metadata(self) -> dict:
        return {
            "engine_version": self.engine_version,
            "seed": self.master_seed,
            "trials": self.trials,
            "single_study": self.single_study,
            "reml_max_iter": self.reml_max_iter,
            "defaults": DOCUMENTED_DEFAULTS,
        }

    def summary_records(self) -> list[dict]:
        out = []
        for r in self.results:
            rec = {"config_id": r.config_id, **r.config.flat()}
            rec.update(
                trials=r.requested,
                completed=r.trials,
                successes=r.successes,
                coverage=r.coverage,
                mean_ci_width=r.mean_ci_width,
                fallback_count=r.fallback_count,
                errors_count=r.errors_count,
                seed=self.master_seed,
            )
            out.append({k: rec[k] for k in SUMMARY_COLUMNS})
        return out

    def trial_log_rows(self) -> list[dict]:
        rows = []
        for r in self.results:
            for t in r.trial_results:
                rows.append(
                    {
                        "config_id": r.config_id,
                        "trial": t.trial_index,
                        "covered": "" if t.errored else int(t.covered),
                        "ci_low": t.ci_low,
                        "ci_high": t.ci_high,
                        "effect_hat": t.effect_hat,
                        "method": t.method_used,
                        "fell_back": int(t.fell_back),
                    }
                )
        return rows

    def write_summary_csv(self, path) -> None:
        _write_csv(path, SUMMARY_COLUMNS, self.summary_records())

    def write_summary_json(self, path) -> None:
        doc = {**self.metadata(), "cells": self.summary_records()}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")

    def write_trial_log(self, path) -> None:
        _write_csv(path, TRIAL_LOG_COLUMNS, self.trial_log_rows())


def _write_csv(path, columns, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for rec in records:
            w.writerow([fmt(rec[c]) for c in columns])


def metasims(
    grid: Sequence[SimConfig] | None = None,
    trials: int = 3,
    master_seed: int = 0,
    progress: bool = False,
    single_study: bool = False,
    workers: int = 1,
    reml_max_iter: int = REML_MAX_ITER,
) -> CoverageReport:
    """Run every cell of ``grid``; cell ids are positions in the grid.

    All cells are validated before any trial runs.
    """
    if grid is None:
        from medsim.simulate import sim_df

        grid = sim_df()
    grid = list(grid)
    if not grid:
        raise ConfigError("grid is empty", key="grid")
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ConfigError(f"trials must be an integer >= 1, got {trials!r}", key="trials")
    cells = [(i, replace(cfg, trials=trials).validate(single_study=single_study)) for i, cfg in enumerate(grid)]
    results = _execute(cells, trials, master_seed, single_study, reml_max_iter, max(1, workers), progress)
    return CoverageReport(results, master_seed, trials, single_study, reml_max_iter)
