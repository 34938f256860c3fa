"""Command line entry point: ``fpp-cm run --experiment NAME --config FILE``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, load_config
from .harness import ExperimentRefused, emit, run

log = logging.getLogger("fppcm")


def build_parser():
    p = argparse.ArgumentParser(prog="fpp-cm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment and write CSV and JSON output")
    r.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    r.add_argument("--config", required=True, help="flat key = value file")
    r.add_argument("--seed", type=int, help="master seed (overrides the config)")
    r.add_argument("--out", default=".", help="output directory")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--force", action="store_true",
                   help="run distance experiments even with explosive weights")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(experiment=args.experiment, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        res = run(cfg, workers=max(1, args.workers), force=args.force)
        emit(res, "csv", out / f"{cfg.experiment}.csv")
        emit(res, "json", out / f"{cfg.experiment}.json")
    except (ConfigError, ExperimentRefused, OSError) as exc:
        print(f"fpp-cm: error: {exc}", file=sys.stderr)
        return 1
    for name, ok in res.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {cfg.experiment}: {name}")
    return 0 if res.ok else 2


if __name__ == "__main__":
    sys.exit(main())
