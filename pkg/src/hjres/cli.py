"""Command line entry point: ``python -m hjres <experiment> [options]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from .experiments import EXPERIMENTS, ConfigError, SolverNonConvergence, load_config, run

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjres", description="Residual minimisation experiments for "
                                 "monotone Hamilton-Jacobi schemes.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", type=Path, help="INI file with one section per experiment")
    ap.add_argument("--seed", type=int, help="base seed (overrides the config)")
    ap.add_argument("--out", type=Path, default=Path("runs"), help="output root directory")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for seeded repetitions")
    ap.add_argument("--dry-run", action="store_true", help="validate the config and exit")
    ap.add_argument("--force", action="store_true",
                    help="write into OUT/<experiment> even if it exists, instead of a timestamped directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def output_dir(root: Path, experiment: str, force: bool) -> Path:
    if force:
        return root / experiment
    stamp = time.strftime("%Y%m%d-%H%M%S")
    out = root / f"{experiment}-{stamp}"
    k = 1
    while out.exists():
        out = root / f"{experiment}-{stamp}-{k}"
        k += 1
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("threads: must be >= 1")
        overrides = {} if args.seed is None else {"seed": args.seed}
        cfg = load_config(args.experiment, args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dry_run:
        print(f"{args.experiment}: configuration ok")
        return EXIT_OK
    out = output_dir(args.out, args.experiment, args.force)
    os.makedirs(out, exist_ok=True)
    try:
        run(args.experiment, cfg, out, args.threads)
    except SolverNonConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
