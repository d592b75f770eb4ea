"""Command line front end.

    medsim estimate --estimator g_exp --n 10 --median 4
    medsim simulate config.json --seed 38 --out sample.csv
    medsim coverage config.json --trials 3 --seed 38 --out results/

The config file is JSON. Axis keys (``K``, ``tau2``, ``rho``, ``base_rate``,
``family``, ``estimator``, ``pooling``) take lists and are crossed into a
grid; ``n_min``, ``n_max``, ``alloc_shape``, ``alpha`` and ``shape`` are
scalars shared by every cell. ``trials``, ``seed`` and ``reml_max_iter`` are
optional engine settings that command-line flags override.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from medsim._version import __version__
from medsim.distributions import SummaryStats
from medsim.engine import metasims, trial_rng
from medsim.errors import ConfigError, MedsimError
from medsim.estimators import ESTIMATORS, estimate_se, g_exp
from medsim.pooling import REML_MAX_ITER
from medsim.simulate import AXIS_FIELDS, SimConfig, fmt, sim_df, sim_stats, write_meta_sample_csv

SCALAR_FIELDS = ("n_min", "n_max", "alloc_shape", "alpha", "shape")
ENGINE_FIELDS = ("trials", "seed", "reml_max_iter")
SEED_ENV = "MEDSIM_SEED"


@dataclass
class RunConfig:
    axes: dict
    settings: dict
    engine: dict
    defaults_applied: list = field(default_factory=list)

    @property
    def grid(self) -> list[SimConfig]:
        return sim_df(self.axes, **self.settings)


def parse_config(path) -> RunConfig:
    """Load and validate a JSON grid config; errors name the offending key."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", key="config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", key="config") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", key="config")

    axes, settings, engine = {}, {}, {}
    for key, value in raw.items():
        if key in AXIS_FIELDS:
            if not isinstance(value, list) or not value:
                raise ConfigError(f"{key}: must be a non-empty list", key=key)
            axes[key] = value
        elif key in SCALAR_FIELDS:
            if key == "alloc_shape":
                if not isinstance(value, list) or len(value) != 2:
                    raise ConfigError("alloc_shape: must be a list of two Beta parameters", key=key)
                value = tuple(value)
            elif isinstance(value, list):
                raise ConfigError(f"{key}: must be a scalar", key=key)
            settings[key] = value
        elif key in ENGINE_FIELDS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key}: must be an integer", key=key)
            if key == "trials" and value < 1 or key == "reml_max_iter" and value < 0:
                raise ConfigError(f"{key}: out of range ({value})", key=key)
            engine[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}", key=key)

    applied = [k for k in (*AXIS_FIELDS, *SCALAR_FIELDS) if k not in raw]
    rc = RunConfig(axes, settings, engine, applied)
    rc.grid  # validates every cell
    return rc


def _resolve_seed(flag, rc: RunConfig | None):
    if flag is not None:
        return flag, "flag"
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env), "env"
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}", key=SEED_ENV) from None
    if rc is not None and "seed" in rc.engine:
        return rc.engine["seed"], "config"
    return secrets.randbits(32), "generated"


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_manifest(path, **entries):
    with open(path, "w") as fh:
        json.dump({"engine_version": __version__, **entries}, fh, indent=2)
        fh.write("\n")


def _json_num(x):
    return float(fmt(float(x)))


def cmd_estimate(args) -> int:
    if args.estimator == "g_exp":
        est = g_exp(args.n, args.median)
    else:
        if args.q1 is None or args.q3 is None:
            raise ConfigError(f"{args.estimator} needs --q1 and --q3", key="q1")
        est = estimate_se(args.estimator, SummaryStats(args.n, args.median, args.q1, args.q3))
    out = {
        "estimator": args.estimator,
        "se": _json_num(est.se),
        "assumed_family": est.assumed_family.value,
        "fitted_params": [_json_num(p) for p in est.fitted_params],
    }
    print(json.dumps(out))
    return 0


def cmd_simulate(args) -> int:
    started = _now()
    rc = parse_config(args.config)
    grid = rc.grid
    if not 0 <= args.cell < len(grid):
        raise ConfigError(f"--cell {args.cell} out of range for a {len(grid)}-cell grid", key="cell")
    seed, source = _resolve_seed(args.seed, rc)
    config = grid[args.cell]
    data = sim_stats(config, trial_rng(seed, args.cell, 0))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_meta_sample_csv(data, out)
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        command="simulate",
        config=str(args.config),
        seed=seed,
        seed_source=source,
        cell=args.cell,
        output=str(out),
        defaults_applied=rc.defaults_applied,
        started=started,
        finished=_now(),
    )
    return 0


def cmd_coverage(args) -> int:
    started = _now()
    rc = parse_config(args.config)
    seed, source = _resolve_seed(args.seed, rc)
    trials = args.trials if args.trials is not None else rc.engine.get("trials", 3)
    reml_max_iter = args.reml_max_iter if args.reml_max_iter is not None else rc.engine.get("reml_max_iter", REML_MAX_ITER)
    report = metasims(
        rc.grid,
        trials=trials,
        master_seed=seed,
        progress=args.progress,
        single_study=args.single_study,
        workers=args.workers,
        reml_max_iter=reml_max_iter,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_summary_csv(out / "summary.csv")
    report.write_summary_json(out / "summary.json")
    report.write_trial_log(out / "trials.csv")
    _write_manifest(
        out / "manifest.json",
        command="coverage",
        config=str(args.config),
        seed=seed,
        seed_source=source,
        trials=trials,
        single_study=args.single_study,
        reml_max_iter=reml_max_iter,
        workers=args.workers,
        output_dir=str(out),
        defaults_applied=rc.defaults_applied,
        started=started,
        finished=_now(),
    )
    return 0


def cmd_rerun(args) -> int:
    """Replay a run from its manifest, optionally into a different location."""
    try:
        manifest = json.loads(Path(args.manifest).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest: {exc}", key="manifest") from None
    command = manifest.get("command")
    if command == "coverage":
        argv = [
            "coverage",
            manifest["config"],
            "--seed", str(manifest["seed"]),
            "--trials", str(manifest["trials"]),
            "--reml-max-iter", str(manifest["reml_max_iter"]),
            "--workers", str(manifest.get("workers", 1)),
            "--out", args.out or manifest["output_dir"],
        ]
        if manifest["single_study"]:
            argv.append("--single-study")
    elif command == "simulate":
        argv = [
            "simulate",
            manifest["config"],
            "--seed", str(manifest["seed"]),
            "--cell", str(manifest["cell"]),
            "--out", args.out or manifest["output"],
        ]
    else:
        raise ConfigError(f"manifest has unknown command {command!r}", key="command")
    new = build_parser().parse_args(argv)
    return new.func(new)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medsim", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="standard error of a sample median")
    p.add_argument("--estimator", choices=sorted(ESTIMATORS), default="g_exp")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--median", type=float, required=True)
    p.add_argument("--q1", type=float)
    p.add_argument("--q3", type=float)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="write one simulated meta-analytic data set as CSV")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help=f"master seed (falls back to ${SEED_ENV}, then the config)")
    p.add_argument("--out", required=True)
    p.add_argument("--cell", type=int, default=0, help="grid cell to simulate (default 0)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("coverage", help="run coverage simulations over a config grid")
    p.add_argument("config")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, help=f"master seed (falls back to ${SEED_ENV}, then the config)")
    p.add_argument("--out", default="medsim-out")
    p.add_argument("--progress", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--single-study", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--reml-max-iter", type=int)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("rerun", help="reproduce a run from its manifest.json")
    p.add_argument("manifest")
    p.add_argument("--out", help="write outputs here instead of the recorded location")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MedsimError as exc:
        print(f"medsim {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
