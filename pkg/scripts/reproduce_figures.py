#!/usr/bin/env python3
"""Run the shipped figure-reproduction configs at full trajectory count.

Examples:
    python scripts/reproduce_figures.py --set fig4
    python scripts/reproduce_figures.py --set fig8 --traj 500 --out results/quick
    python scripts/reproduce_figures.py --only fig5_i figcycles_mf
"""

import argparse
import sys
import time
from pathlib import Path

from thermoqec.cli import main as cli_main

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--set", dest="which", default="all",
                        choices=["all", "fig4", "fig5", "fig8", "figcycles"],
                        help="config family to run")
    parser.add_argument("--only", nargs="*", default=None, help="explicit config stems")
    parser.add_argument("--traj", type=int, default=None, help="override n_traj")
    parser.add_argument("--seed", type=int, default=None, help="override master_seed")
    parser.add_argument("--out", default=None, help="output root (default: per-config)")
    args = parser.parse_args(argv)

    if args.only:
        stems = args.only
    else:
        prefix = "" if args.which == "all" else args.which
        stems = sorted(p.stem for p in CONFIGS.glob(f"{prefix}*.cfg"))
    if not stems:
        print("no configs matched", file=sys.stderr)
        return 2

    for stem in stems:
        cfg = CONFIGS / f"{stem}.cfg"
        if not cfg.exists():
            print(f"missing config {cfg}", file=sys.stderr)
            return 2
        argv_run = ["run", "--config", str(cfg)]
        if args.traj is not None:
            argv_run += ["--traj", str(args.traj)]
        if args.seed is not None:
            argv_run += ["--seed", str(args.seed)]
        if args.out is not None:
            argv_run += ["--out", str(Path(args.out) / stem)]
        print(f"=== {stem} ===")
        t0 = time.time()
        code = cli_main(argv_run)
        print(f"--- {stem}: exit {code} in {time.time() - t0:.1f}s\n")
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run())
