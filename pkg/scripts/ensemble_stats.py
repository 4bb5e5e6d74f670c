#!/usr/bin/env python3
"""Print Monte Carlo vs closed-form purity expectations for the ensembles.

Quick sanity table for the sampling layer:

    python scripts/ensemble_stats.py --n 20000 --seed 7
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from qforge.ensembles import (
    ma_mean_purity,
    sample_bures,
    sample_hs,
    sample_hs_haar,
    sample_ma,
    sample_z,
    z_mean_purity,
)
from qforge.qcore import purity


def mc(sampler, n):
    p = np.fromiter((purity(sampler()) for _ in range(n)), float, n)
    return p.mean(), p.std() / np.sqrt(n)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=20_000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    n = args.n

    print(f"{'ensemble':28s} {'MC mean':>10s} {'std err':>8s} {'closed form':>12s}")
    rows = [
        ("HS (D=4)", lambda: sample_hs(4, rng), 8 / 17),
        ("Bures (D=4)", lambda: sample_bures(4, rng), None),
        ("HS-Haar (D=4)", lambda: sample_hs_haar(4, rng), None),
        ("MA a=0.1 K=4", lambda: sample_ma(0.1, 4, 4, rng), ma_mean_purity(0.1, 4, 4)),
        ("MA a=0.3394 K=6", lambda: sample_ma(0.3394, 6, 4, rng), ma_mean_purity(0.3394, 6, 4)),
        ("Z b=0.186", lambda: sample_z(0.186, 4, rng), z_mean_purity(0.186, 4)),
        ("Z b=1", lambda: sample_z(1.0, 4, rng), z_mean_purity(1.0, 4)),
    ]
    for name, sampler, expected in rows:
        mean, se = mc(sampler, n)
        closed = f"{expected:.6f}" if expected is not None else "-"
        print(f"{name:28s} {mean:10.6f} {se:8.6f} {closed:>12s}")


if __name__ == "__main__":
    main()
