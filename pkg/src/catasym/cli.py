"""Command line entry point: ``catasym <experiment> --config PATH [--mesh F] [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import EXPERIMENTS, ConfigError, load_config, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERTION = 3

log = logging.getLogger("catasym")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="catasym", description="Run a reproducible geometry experiment.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="key=value config file with a section per experiment")
    p.add_argument("--mesh", type=float, help="override the sample mesh")
    p.add_argument("--seed", type=int, help="override the random seed")
    p.add_argument("--out", help="output directory (default: the config's 'out' key, else ./out)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.experiment, args.mesh, args.seed, args.out)
        result, paths = run_scenario(cfg)
    except ConfigError as exc:
        print(f"catasym: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        log.info("wrote %s", p)
    failed = [k for k, ok in result.assertions.items() if not ok]
    if failed:
        print(f"catasym: assertions failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_ASSERTION
    print(f"{args.experiment}: all {len(result.assertions)} assertions passed ({cfg.out})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
