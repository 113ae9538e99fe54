#!/usr/bin/env python3
"""Time the sampling strategies and ball query over a range of cloud sizes.

Prints a median/p95 table per (operation, size) pair. Use --sizes and --k to
change the sweep.
"""

import argparse
import sys

import numpy as np

from pointdet import benchutil, neighborhood, sampling
from pointdet.sampling import PointCloud


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[4096, 16384])
    parser.add_argument("--k", type=int, default=512)
    parser.add_argument("--reps", type=int, default=10)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    header = f"{'operation':<12} {'n':>7} {'median_ms':>10} {'p95_ms':>10}"
    print(header)
    print("-" * len(header))
    for n in args.sizes:
        cloud = PointCloud(rng.uniform(-40, 40, (n, 3)),
                           features=rng.normal(size=(n, 4)))
        scores = rng.uniform(size=n)
        centers = rng.uniform(-40, 40, (64, 3))
        ops = {
            "random": lambda c=cloud: sampling.sample_random(c, args.k, seed=0),
            "d-fps": lambda c=cloud: sampling.sample_dfps(c, args.k),
            "feat-fps": lambda c=cloud: sampling.sample_featfps(c, args.k),
            "top-k": lambda s=scores: sampling.sample_topk(s, args.k),
            "ball_query": lambda c=cloud, ce=centers: neighborhood.ball_query(
                c, ce, 2.0, 32),
        }
        for name, fn in ops.items():
            t = benchutil.time_callable(fn, warmup=2, reps=args.reps)
            print(f"{name:<12} {n:>7} {t['median_ms']:>10.3f} "
                  f"{t['p95_ms']:>10.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
