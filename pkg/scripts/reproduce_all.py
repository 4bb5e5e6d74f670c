#!/usr/bin/env python3
"""Run every experiment protocol in sequence and emit the CSV reports.

Desk scale by default (a few CPU-hours in total, dominated by the
distribution comparison); pass --scale paper for the published sizes if you
have the budget for them.

    python scripts/reproduce_all.py --out runs/ --seed 2024 [--scale paper]
    python scripts/reproduce_all.py --only spurious shots
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from qforge.workbench import RunConfig, emit_report, run_experiment
from qforge.workbench.config import EXPERIMENT_IDS


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs")
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--scale", choices=("desk", "paper"), default="desk")
    parser.add_argument("--only", nargs="*", choices=EXPERIMENT_IDS, default=None)
    args = parser.parse_args()

    experiments = args.only or list(EXPERIMENT_IDS)
    for experiment in experiments:
        cfg = RunConfig(experiment=experiment, seed=args.seed, scale=args.scale,
                        out_dir=args.out)
        print(f"== {experiment} ({args.scale} scale, seed {args.seed}) ==", flush=True)
        t0 = time.time()
        report = run_experiment(cfg)
        written = emit_report(report, Path(args.out) / experiment)
        print(f"   {len(report.rows)} rows in {time.time() - t0:.0f}s -> {written['summary']}")


if __name__ == "__main__":
    main()
