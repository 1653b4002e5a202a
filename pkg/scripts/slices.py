"""Bound intervals along the three coordinate axes of the 3-D example at t = 0."""

import argparse
from pathlib import Path

import numpy as np

from hjbounds.bounds import BoundEvaluator, intervals_to_csv
from hjbounds.characteristics import precompute
from hjbounds.config import preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("slices"))
    ap.add_argument("--points", type=int, default=151)
    ap.add_argument("--lo", type=float, default=-1.0)
    ap.add_argument("--hi", type=float, default=1.0)
    args = ap.parse_args()

    c = preset("paper-example-6")
    b = precompute(c.build_system(), c.build_cost(), c.levels, c.counts, c.build_grid(), seed=c.seed)
    ev = BoundEvaluator(b)
    args.out.mkdir(parents=True, exist_ok=True)
    for ax in range(3):
        P = np.zeros((args.points, 3))
        P[:, ax] = np.linspace(args.lo, args.hi, args.points)
        ivs = [ev.interval(0.0, x) for x in P]
        path = args.out / f"slice_x{ax + 1}.csv"
        path.write_text(intervals_to_csv(P, ivs))
        gap = max(iv.upper - iv.lower for iv in ivs)
        vmax = max(abs(iv.upper) for iv in ivs)
        print(f"x{ax + 1}: max gap {gap:.4f}, max |upper| {vmax:.4f} -> {path}")


if __name__ == "__main__":
    main()
