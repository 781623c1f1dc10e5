"""``distilled <experiment> --config <path> [--seed N] [--preset desk|paper] [--out DIR]``

Exit codes: 0 success, 2 configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys

from distilled.harness.config import EXPERIMENTS, PRESETS, ConfigError, load_config
from distilled.harness.experiments import run
from distilled.pinn.physics import TrainingDivergence
from distilled.zo import DivergenceError, NonFiniteLossError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="distilled", description="Run a distillation experiment.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="INI file overriding the preset (optional)")
    ap.add_argument("--seed", type=int, help="root seed")
    ap.add_argument("--preset", choices=PRESETS, help="scale preset (default: desk)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, experiment=args.experiment, preset_name=args.preset,
                          seed=args.seed, output_dir=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        paths = run(cfg)
    except (DivergenceError, TrainingDivergence, NonFiniteLossError) as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
