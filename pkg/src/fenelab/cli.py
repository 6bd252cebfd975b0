"""Command-line entry point.

    fenelab <experiment> [--config FILE] [--out DIR] [--seed N] [--strict]

Exit status: 0 when every check of the run passed, 1 when a check failed,
2 on a configuration or runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import yaml

from .errors import FeneLabError
from .experiments import EXPERIMENTS, RUNNERS, resolve_config
from .report import emit_report

log = logging.getLogger("fenelab")


def build_parser():
    ap = argparse.ArgumentParser(prog="fenelab", description="FENE dumbbell experiments")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML configuration file")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, help="overrides the configured seed")
        sp.add_argument("--strict", action="store_true",
                        help="refuse to run outside the validated parameter regime")
    return ap


def load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        cfg = resolve_config(load_config(args.config), args.experiment, args.seed)
        runner = RUNNERS[args.experiment]
        if args.experiment == "stationary":
            res = runner(cfg, strict=args.strict)
        else:
            res = runner(cfg)
        paths = emit_report(res, cfg["output"]["format"], args.out)
    except (FeneLabError, ValueError, OSError, yaml.YAMLError) as exc:
        log.error("error: %s", exc)
        return 2
    for name, ok in res.checks.items():
        log.info("%-28s %s", name, "PASS" if ok else "FAIL")
    for p in paths:
        log.info("wrote %s", p)
    return 0 if res.passed else 1


if __name__ == "__main__":
    sys.exit(main())
