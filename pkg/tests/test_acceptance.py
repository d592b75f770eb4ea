"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria".
"""

import contextlib
import csv
import json
import math
import time
from collections import defaultdict

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from medsim.cli import main
from medsim.distributions import DistributionSpec, population_summary, sample
from medsim.engine import metasim
from medsim.estimators import estimate_se, g_exp
from medsim.pooling import StudyEffect, fit_reml_tau2, pool_fixed, reml_upper_bound, tau2_dl
from medsim.simulate import SimConfig, solve_arm_rates
from oracles import fuzz_datasets, reml_loglik_matrix


@contextlib.contextmanager
def criterion(number, title):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        ACCEPTANCE_LINES.append(f"[FAIL] {number:>2}. {title}: {type(exc).__name__}: {str(exc).splitlines()[0]}")
        raise
    ACCEPTANCE_LINES.append(f"[PASS] {number:>2}. {title} ({time.perf_counter() - start:.1f}s)")


def test_01_estimator_oracle():
    with criterion(1, "g_exp(10, 4) = 1.824891 within 1e-5"):
        # hand evaluation of 1 / (2 sqrt(n) f(m)) with rate ln2 / m
        rate = math.log(2) / 4
        hand = 1.0 / (2.0 * math.sqrt(10) * rate * math.exp(-4 * rate))
        got = g_exp(10, 4).se
        assert got == pytest.approx(hand, abs=1e-12)
        assert abs(got - 1.824891) <= 1e-5, f"|{got!r} - 1.824891| = {abs(got - 1.824891):.3e} > 1e-5"


def test_02_closed_form_identity():
    with criterion(2, "g_exp(n, ln 2) = 1/sqrt(n) to 1e-12"):
        for n in (2, 4, 100, 10**6):
            assert abs(g_exp(n, math.log(2)).se - 1 / math.sqrt(n)) <= 1e-12


FAMILIES = {
    "g_exp": DistributionSpec.exponential(1.0),
    "g_norm": DistributionSpec.normal(3.0, 0.2),
    "g_lnorm": DistributionSpec.lognormal(0.0, 0.5),
    "g_cauchy": DistributionSpec.cauchy(0.0, 1.0),
}


def test_03_empirical_consistency():
    with criterion(3, "sd of sample median over 1e4 samples (n=1000) within 10% of g_*"):
        reps, n = 10_000, 1000
        for i, (name, dist) in enumerate(FAMILIES.items()):
            rng = np.random.default_rng([2019, i])
            medians = np.concatenate(
                [np.median(sample(dist, 1000 * n, rng).reshape(1000, n), axis=1) for _ in range(reps // 1000)]
            )
            empirical = medians.std(ddof=1)
            predicted = estimate_se(name, population_summary(dist, n)).se
            assert abs(empirical / predicted - 1) < 0.10, f"{name}: empirical {empirical:.5f} vs {predicted:.5f}"


def test_04_arm_rate_identity():
    with criterion(4, "arm-rate log identity to 1e-12 on 1e4 fuzzed triples"):
        gen = np.random.default_rng(4)
        rates = 10 ** gen.uniform(-3, 3, 10_000)
        rhos = 10 ** gen.uniform(-2, 2, 10_000)
        gammas = gen.normal(0, 1.5, 10_000)
        worst = 0.0
        for rate, rho, gamma in zip(rates.tolist(), rhos.tolist(), gammas.tolist()):
            rc, ri = solve_arm_rates(rate, rho, gamma)
            resid = math.log(rc) - math.log(ri) - math.log(rate / (rho * rate)) - gamma
            worst = max(worst, abs(resid))
        assert worst <= 1e-12, f"worst residual {worst:.3e}"


def test_05_pooling_oracles():
    with criterion(5, "pooling oracles (FE exact, DL exact, REML beats 1000-point grid within 1e-8)"):
        fe = pool_fixed([StudyEffect(y, 1.0) for y in (1.0, 2.0, 3.0)])
        assert (fe.effect, fe.variance) == (2.0, 1 / 3)
        assert tau2_dl([StudyEffect(y, 1.0) for y in (0.0, 2.0, 4.0)]) == 3.0
        for y, v in fuzz_datasets(100, seed=5):
            t, converged = fit_reml_tau2(y, v)
            assert converged
            grid = np.linspace(0.0, reml_upper_bound(y, v), 1000)
            best = max(reml_loglik_matrix(g, y, v) for g in grid)
            assert reml_loglik_matrix(t, y, v) >= best - 1e-8


def test_06_coverage_sanity():
    with criterion(6, "coverage in [0.90, 0.98] (exp, rho=1, tau2=0, K=5, a=b=1000, REML, T=2000)"):
        cfg = SimConfig(
            K=5, tau2=0.0, rho=1.0, family="exponential", n_min=1000, n_max=1000,
            estimator="g_exp", pooling="REML", alpha=0.05,
        )
        start = time.perf_counter()
        res = metasim(cfg, trials=2000, master_seed=38)
        assert time.perf_counter() - start < 300
        assert res.errors_count == 0
        assert 0.90 <= res.coverage <= 0.98, f"coverage {res.coverage}"
        # brute-force recount over the per-trial records
        recount = sum(1 for t in res.trial_results if t.ci_low <= t.true_effect <= t.ci_high)
        assert recount == res.successes


def test_07_scalability():
    with criterion(7, "metasim completes for trials in {1, 100, 1000} on defaults"):
        for trials in (1, 100, 1000):
            res = metasim(trials=trials, master_seed=38)
            assert res.trials + res.errors_count == trials
            assert 0.0 <= res.coverage <= 1.0
            assert res.coverage == res.successes / res.trials


def _coverage(tmp_path, name, *extra):
    out = tmp_path / name
    cfg = tmp_path / "grid.json"
    if not cfg.exists():
        cfg.write_text(json.dumps({"K": [3, 6], "tau2": [0.0, 0.1], "rho": [1, 1.5]}))
    argv = ["coverage", str(cfg), "--trials", "25", "--seed", "38", "--no-progress", "--out", str(out), *extra]
    assert main(argv) == 0
    return out


def test_08_determinism(tmp_path):
    with criterion(8, "coverage runs byte-identical across reruns and 1 vs 8 workers"):
        a = _coverage(tmp_path, "a", "--workers", "1")
        b = _coverage(tmp_path, "b", "--workers", "1")
        c = _coverage(tmp_path, "c", "--workers", "8")
        for name in ("summary.csv", "summary.json", "trials.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes(), name


def test_09_recount(tmp_path):
    with criterion(9, "coverage recounted from trial log equals every reported cell"):
        out = _coverage(tmp_path, "r")
        hits, done = defaultdict(int), defaultdict(int)
        with open(out / "trials.csv") as fh:
            for row in csv.DictReader(fh):
                if row["covered"] == "":
                    continue
                done[row["config_id"]] += 1
                hits[row["config_id"]] += row["covered"] == "1"
        cells = json.loads((out / "summary.json").read_text())["cells"]
        assert len(cells) == 8
        for cell in cells:
            cid = str(cell["config_id"])
            assert cell["completed"] == done[cid] and cell["successes"] == hits[cid]
            assert cell["coverage"] == hits[cid] / done[cid]
        with open(out / "summary.csv") as fh:
            for row in csv.DictReader(fh):
                cid = row["config_id"]
                assert row["coverage"] == f"{hits[cid] / done[cid]:.9g}"


def test_10_fallback_contract(tmp_path):
    with criterion(10, "REML budget 0: every cell FE with fell_back == trials, run succeeds"):
        out = _coverage(tmp_path, "f", "--reml-max-iter", "0")
        cells = json.loads((out / "summary.json").read_text())["cells"]
        for cell in cells:
            assert cell["pooling"] == "REML"
            assert cell["fallback_count"] == cell["completed"] == cell["trials"]
        with open(out / "trials.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["method"] for r in rows} == {"FE"}
        assert {r["fell_back"] for r in rows} == {"1"}
