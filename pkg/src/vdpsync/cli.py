"""Command-line entry point.

One subcommand per experiment family; every run takes a JSON config plus
optional overrides for the output directory, the master seed, worker
count and realization count.  Exit codes: 0 success, 1 config error,
2 partial job failure.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config
from . import runner

SUBCOMMANDS = {
    "meanfield": runner.run_meanfield,
    "spectrum-sweep": runner.run_spectrum_sweep,
    "disorder-sweep": runner.run_disorder_sweep,
    "sync-matrix": runner.run_sync_matrix,
    "exact-compare": runner.run_exact_compare,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vdpsync",
        description="Topological synchronization of van der Pol oscillator "
                    "lattices: batch experiment runner")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in list(SUBCOMMANDS) + ["validate"]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config path")
        sp.add_argument("--out", default=None, help="override output directory")
        sp.add_argument("--seed", type=int, default=None, help="override master seed")
        sp.add_argument("--jobs", type=int, default=None,
                        help="worker processes (default: all cores)")
        sp.add_argument("--realizations", type=int, default=None,
                        help="override sweep realization count")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.out is not None:
        cfg.output_dir = args.out
        cfg.raw["output_dir"] = args.out
    if args.seed is not None:
        cfg.master_seed = args.seed
        cfg.raw["master_seed"] = args.seed
    if args.realizations is not None:
        cfg.n_realizations = args.realizations
        cfg.raw.setdefault("sweep", {})["n_realizations"] = args.realizations
    if args.jobs is not None:
        cfg.jobs = args.jobs

    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)

    if args.command == "validate":
        report = runner.validate_config(cfg)
        print(json.dumps(report, indent=2))
        return 0

    try:
        manifest = SUBCOMMANDS[args.command](cfg)
    except (ValueError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if manifest.n_failed:
        print(f"{manifest.n_failed} job(s) failed; see manifest", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
