import csv
import json

import pytest

from medsim.cli import main, parse_config
from medsim.errors import ConfigError
from medsim.simulate import SimConfig


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def run_json(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


class TestEstimate:
    def test_g_exp(self, capsys):
        out = run_json(capsys, ["estimate", "--estimator", "g_exp", "--n", "10", "--median", "4"])
        assert out["se"] == pytest.approx(1.8248809, abs=1e-7)
        assert out["assumed_family"] == "exponential"

    def test_negative_n(self, capsys):
        assert main(["estimate", "--estimator", "g_exp", "--n", "-3", "--median", "4"]) != 0
        err = capsys.readouterr().err
        assert "error" in err

    def test_g_norm(self, capsys):
        argv = ["estimate", "--estimator", "g_norm", "--n", "100", "--median", "0", "--q1", "-0.6744898", "--q3", "0.6744898"]
        assert run_json(capsys, argv)["se"] == pytest.approx(0.1253314, abs=1e-7)

    def test_missing_quartiles(self, capsys):
        assert main(["estimate", "--estimator", "g_cauchy", "--n", "10", "--median", "1"]) == 1

    def test_nine_significant_digits(self, capsys):
        out = run_json(capsys, ["estimate", "--n", "10", "--median", "4"])
        assert out["se"] == 1.82488092


class TestParseConfig:
    def test_minimal(self, tmp_path):
        rc = parse_config(write(tmp_path / "c.json", {"K": [3]}))
        assert rc.grid == [SimConfig(K=3)]
        assert "tau2" in rc.defaults_applied and "K" not in rc.defaults_applied

    def test_negative_tau2(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config(write(tmp_path / "c.json", {"tau2": [-1]}))
        assert exc.value.key == "tau2"

    def test_grid(self, tmp_path):
        assert len(parse_config(write(tmp_path / "c.json", {"K": [3, 7], "rho": [1, 2]})).grid) == 4

    @pytest.mark.parametrize(
        "cfg, key",
        [
            ({"bogus": 1}, "bogus"),
            ({"K": 3}, "K"),
            ({"K": []}, "K"),
            ({"alpha": [0.05]}, "alpha"),
            ({"alpha": 1.5}, "alpha"),
            ({"alloc_shape": [1]}, "alloc_shape"),
            ({"n_min": 2}, "n_min"),
            ({"trials": 0}, "trials"),
            ({"family": ["weibull"]}, "family"),
            ({"estimator": ["g_foo"]}, "estimator"),
        ],
    )
    def test_errors_name_key(self, tmp_path, cfg, key):
        with pytest.raises(ConfigError) as exc:
            parse_config(write(tmp_path / "c.json", cfg))
        assert exc.value.key == key

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "nope.json")

    def test_scalars(self, tmp_path):
        rc = parse_config(write(tmp_path / "c.json", {"n_min": 30, "n_max": 40, "alloc_shape": [2, 3], "alpha": 0.1}))
        (cfg,) = rc.grid
        assert (cfg.n_min, cfg.n_max, cfg.alloc_shape, cfg.alpha) == (30, 40, (2.0, 3.0), 0.1)


class TestSimulate:
    def test_rows_and_idempotent(self, tmp_path):
        cfg = write(tmp_path / "c.json", {"K": [4]})
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["simulate", str(cfg), "--seed", "38", "--out", str(a)]) == 0
        assert main(["simulate", str(cfg), "--seed", "38", "--out", str(b)]) == 0
        lines = a.read_text().splitlines()
        assert len(lines) == 2 * 4 + 1
        assert lines[0] == "study,arm,n,median,q1,q3,gamma,rate"
        assert a.read_bytes() == b.read_bytes()
        manifest = json.loads((tmp_path / "a.csv.manifest.json").read_text())
        assert manifest["seed"] == 38 and manifest["command"] == "simulate"

    def test_missing_config(self, tmp_path):
        assert main(["simulate", str(tmp_path / "none.json"), "--seed", "1", "--out", str(tmp_path / "x.csv")]) != 0

    def test_env_seed(self, tmp_path, monkeypatch):
        cfg = write(tmp_path / "c.json", {"K": [2]})
        monkeypatch.setenv("MEDSIM_SEED", "38")
        main(["simulate", str(cfg), "--out", str(tmp_path / "env.csv")])
        main(["simulate", str(cfg), "--seed", "38", "--out", str(tmp_path / "flag.csv")])
        assert (tmp_path / "env.csv").read_bytes() == (tmp_path / "flag.csv").read_bytes()
        assert json.loads((tmp_path / "env.csv.manifest.json").read_text())["seed_source"] == "env"

    def test_generated_seed_recorded(self, tmp_path, monkeypatch):
        monkeypatch.delenv("MEDSIM_SEED", raising=False)
        cfg = write(tmp_path / "c.json", {"K": [2]})
        main(["simulate", str(cfg), "--out", str(tmp_path / "g.csv")])
        manifest = json.loads((tmp_path / "g.csv.manifest.json").read_text())
        assert manifest["seed_source"] == "generated" and isinstance(manifest["seed"], int)
        assert main(["rerun", str(tmp_path / "g.csv.manifest.json"), "--out", str(tmp_path / "g2.csv")]) == 0
        assert (tmp_path / "g.csv").read_bytes() == (tmp_path / "g2.csv").read_bytes()


class TestCoverage:
    def test_four_cells(self, tmp_path, capsys):
        cfg = write(tmp_path / "c.json", {"K": [3, 7], "rho": [1, 2]})
        out = tmp_path / "out"
        assert main(["coverage", str(cfg), "--trials", "3", "--no-progress", "--seed", "38", "--out", str(out)]) == 0
        assert capsys.readouterr().err == ""
        with open(out / "summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert all(r["trials"] == "3" for r in rows)
        summary = json.loads((out / "summary.json").read_text())
        assert summary["seed"] == 38 and len(summary["cells"]) == 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 38 and manifest["command"] == "coverage"
        with open(out / "trials.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 12

    def test_single_study(self, tmp_path):
        cfg = write(tmp_path / "c.json", {"K": [3, 5]})
        out = tmp_path / "out"
        assert main(["coverage", str(cfg), "--trials", "4", "--seed", "1", "--single-study", "--out", str(out)]) == 0
        with open(out / "trials.csv") as fh:
            assert {r["method"] for r in csv.DictReader(fh)} == {"FE"}
        assert json.loads((out / "summary.json").read_text())["single_study"] is True

    def test_fail_fast(self, tmp_path):
        cfg = write(tmp_path / "c.json", {"K": [1, 3], "pooling": ["REML"]})
        out = tmp_path / "out"
        assert main(["coverage", str(cfg), "--trials", "2", "--seed", "1", "--out", str(out)]) == 1
        assert not out.exists()

    def test_progress_on_stderr(self, tmp_path, capsys):
        cfg = write(tmp_path / "c.json", {"K": [3]})
        main(["coverage", str(cfg), "--trials", "2", "--seed", "1", "--progress", "--out", str(tmp_path / "o")])
        captured = capsys.readouterr()
        assert "[medsim]" in captured.err and captured.out == ""

    def test_config_engine_settings(self, tmp_path):
        cfg = write(tmp_path / "c.json", {"K": [3], "trials": 5, "seed": 12})
        out = tmp_path / "o"
        assert main(["coverage", str(cfg), "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert (manifest["trials"], manifest["seed"], manifest["seed_source"]) == (5, 12, "config")

    def test_rerun(self, tmp_path):
        cfg = write(tmp_path / "c.json", {"K": [3], "tau2": [0, 0.1]})
        a, b = tmp_path / "a", tmp_path / "b"
        main(["coverage", str(cfg), "--trials", "4", "--seed", "8", "--out", str(a)])
        assert main(["rerun", str(a / "manifest.json"), "--out", str(b)]) == 0
        for name in ("summary.csv", "summary.json", "trials.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
