"""Command line interface: ``sparsema {fit,simulate,verify,bench}``.

Exit codes: 0 success, 1 suite or replication failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .aggregate import AggregationError
from .harness import (ConfigError, ExperimentConfig, _normalized_regression_dictionary, fit,
                      gen_sparse_regression, resolve_tuning, run_experiment)
from .langevin import LangevinError
from .models import (Dataset, LossModel, coordinate_dictionary, stump_dictionary,
                     trigonometric_dictionary)
from .prior import PriorConfig
from .verify import SUITES, format_table, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _load_config(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "method", None):
        raw["method"] = args.method
    if getattr(args, "out", None):
        raw["out_dir"] = args.out
    try:
        return ExperimentConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _dictionary_for(cfg: ExperimentConfig):
    if cfg.family == "regression":
        return _normalized_regression_dictionary(cfg, coordinate_dictionary(cfg.M))
    if cfg.family == "density":
        return trigonometric_dictionary(cfg.M)
    return stump_dictionary(cfg.M)


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    if not args.data:
        raise ConfigError("fit needs --data")
    try:
        data = Dataset.from_csv(args.data, has_response=cfg.family != "density")
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read data {args.data}: {exc}") from None
    if data.X.shape[1] < (1 if cfg.family == "density" else cfg.M):
        raise ConfigError(f"data has {data.X.shape[1]} covariate columns, config says M={cfg.M}")
    dictionary = _dictionary_for(cfg)
    try:
        prior, beta, _ = resolve_tuning(cfg, data, dictionary)
        res = fit(data, LossModel(cfg.model), dictionary, prior, beta, cfg.method,
                  cfg.aggregate, seed=cfg.seed, budget=cfg.budget, grid_size=cfg.grid_size,
                  langevin_steps=cfg.langevin_steps, total_time=cfg.total_time, h=cfg.h,
                  burn_in=cfg.burn_in)
    except (AggregationError, LangevinError, ValueError) as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    payload = res.to_dict()
    payload["tuning"] = {"beta": beta, "tau": prior.tau, "R": prior.radius,
                         "alpha": prior.alpha}
    text = json.dumps(payload, indent=2)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "fit.json").write_text(text)
    print(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    progress = None
    if args.verbose:
        progress = lambda row: print(f"replication {row['replication']}: {row['status']} "
                                     f"risk={row['risk']}", file=sys.stderr)
    report = run_experiment(cfg, progress)
    print(json.dumps(report.summary, indent=2, sort_keys=True))
    if cfg.out_dir:
        print(f"wrote {Path(cfg.out_dir) / 'replications.csv'} and summary.json",
              file=sys.stderr)
    return EXIT_FAIL if report.all_failed else EXIT_OK


def cmd_verify(args) -> int:
    try:
        checks = run_suite(args.suite)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    print(format_table(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def cmd_bench(args) -> int:
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    model = LossModel("reg-squared")
    plan = {"quadrature": (1, 2), "rejection": (1, 2, 4, 8), "langevin": (2, 10, 50)}
    methods = [args.method] if args.method else list(plan)
    print("method\tM\tn\tseconds")
    for method in methods:
        for M in plan[method]:
            data, _, _ = gen_sparse_regression(args.n, M, 1, 0.5, "rademacher", rng)
            d = coordinate_dictionary(M)
            prior = PriorConfig(min(0.25, 2.0 / (4 * M)), 2.0, M)
            t0 = time.perf_counter()
            fit(data, model, d, prior, 18.5, method, langevin_steps=args.steps,
                budget=args.budget, seed=0)
            print(f"{method}\t{M}\t{args.n}\t{time.perf_counter() - t0:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsema",
                                description="Mirror-averaging aggregates with a sparsity prior")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, method=True):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", help="output directory")
        if method:
            sp.add_argument("--method", choices=["quadrature", "rejection", "langevin"])

    sp = sub.add_parser("fit", help="fit one dataset from a CSV file")
    common(sp)
    sp.add_argument("--data", help="CSV with covariate columns (and a final response column)")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("simulate", help="run a replicated experiment")
    common(sp)
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="run an invariant suite")
    sp.add_argument("suite", choices=sorted(SUITES) + ["all"])
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("bench", help="timing table for methods x M")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--method", choices=["quadrature", "rejection", "langevin"])
    sp.add_argument("--n", type=int, default=50)
    sp.add_argument("--steps", type=int, default=2000, help="Euler steps per chain")
    sp.add_argument("--budget", type=int, default=100_000, help="prior draws for rejection")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
