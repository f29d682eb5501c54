"""Command-line entry point: ``uitlab <experiment> --config <path> --out <dir>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from uitlab import __version__
from uitlab.errors import ConfigError
from uitlab.harness import EXPERIMENTS, emit_reports, parse_config, run_experiment, validate_config


def build_parser():
    p = argparse.ArgumentParser(prog="uitlab", description="Uniform-in-time error experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON experiment config (optional for metrics-selftest)")
    p.add_argument("--out", help="output directory for curves.csv, summary.json, manifest.json")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, help="worker threads (fallback: UITLAB_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"uitlab {__version__}")
    return p


def _load(args):
    if args.config is None:
        if args.experiment != "metrics-selftest":
            raise ConfigError("--config is required")
        raw = {"experiment": "metrics-selftest"}
    else:
        with open(args.config) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("experiment", args.experiment) != args.experiment:
        raise ConfigError(f"config is for {raw['experiment']!r}, not {args.experiment!r}")
    raw.setdefault("experiment", args.experiment)
    if args.seed is not None:
        raw["seed"] = args.seed
    return validate_config(raw)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"uitlab: invalid config: {exc}", file=sys.stderr)
        return 2
    if args.threads is not None and args.threads < 1:
        print("uitlab: --threads must be at least 1", file=sys.stderr)
        return 2
    bundle = run_experiment(cfg, threads=args.threads)
    out = args.out or cfg.output_dir
    if out:
        try:
            emit_reports(bundle, out)
        except OSError as exc:
            print(f"uitlab: {exc}", file=sys.stderr)
            return 2
    for name, v in bundle.summary["verdicts"].items():
        print(f"{'PASS' if v['pass'] else 'FAIL'}  {name}  value={v['value']}")
    for name, reason in bundle.summary["skipped"].items():
        print(f"SKIP  {name}  ({reason})")
    for reason in bundle.summary["failures"]:
        print(f"ERROR {reason}")
    return 0 if bundle.passed else 1


if __name__ == "__main__":
    sys.exit(main())
