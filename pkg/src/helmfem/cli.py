"""Command-line harness around the experiment runners.

Exit codes: 0 on success, 1 on configuration errors, 2 when any row of the
sweep failed at runtime (the CSV is still written with the error column
filled in).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .experiments import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    load_config,
    run_experiment,
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="helmfem",
        description="Benchmark harness for C1-FEM Helmholtz impedance formulations")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="output CSV path (overrides the config)")
        p.add_argument("--threads", type=int, help="row-level worker threads")
        p.add_argument("--seed", type=int, help="seed for randomized eigensolver starts")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = replace(cfg, experiment=args.experiment)
        if args.out is not None:
            cfg = replace(cfg, out=args.out)
        if args.threads is not None:
            cfg = replace(cfg, threads=args.threads)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        ok = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:   # noqa: BLE001 - runtime failures exit with 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if not ok:
        print("some rows failed; see the error column", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
