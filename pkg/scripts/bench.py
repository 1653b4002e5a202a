"""Precompute time, bundle size and per-point access time as the sample count grows."""

import argparse
import time

import numpy as np

from hjbounds.bounds import BoundEvaluator
from hjbounds.characteristics import bundle_bytes, precompute
from hjbounds.config import preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scales", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0])
    ap.add_argument("--queries", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    c = preset("paper-example-6")
    sys, cost, grid = c.build_system(), c.build_cost(), c.build_grid()
    rng = np.random.default_rng(args.seed)
    Xq = rng.uniform(-1.0, 1.0, (args.queries, 3))
    print(f"{'samples':>8} {'precompute s':>13} {'bundle MB':>10} {'mean ms':>8} {'max ms':>8}")
    for scale in args.scales:
        counts = [max(1, int(round(k * scale))) for k in c.counts]
        s = time.perf_counter()
        b = precompute(sys, cost, c.levels, counts, grid, seed=c.seed)
        pre = time.perf_counter() - s
        ev = BoundEvaluator(b)
        times = []
        for x in Xq:
            s = time.perf_counter()
            ev.interval(0.0, x)
            times.append(time.perf_counter() - s)
        times = np.array(times) * 1e3
        print(f"{b.count:>8d} {pre:>13.2f} {len(bundle_bytes(b)) / 1e6:>10.2f} {times.mean():>8.2f} {times.max():>8.2f}")


if __name__ == "__main__":
    main()
