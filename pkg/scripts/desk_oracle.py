"""Compare the bounds on the 2-D double integrator with a Lax-Friedrichs solution."""

import argparse

import numpy as np

from hjbounds.bounds import BoundEvaluator
from hjbounds.characteristics import precompute
from hjbounds.config import preset
from hjbounds.oracle import lf_with_estimate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=201)
    ap.add_argument("--time", type=float, default=0.0)
    ap.add_argument("--extent", type=float, default=2.0)
    args = ap.parse_args()

    c = preset("double-integrator")
    sys, cost = c.build_system(), c.build_cost()
    b = precompute(sys, cost, c.levels, c.counts, c.build_grid(), seed=c.seed)
    ev = BoundEvaluator(b)
    est = lf_with_estimate(sys, cost, [(-args.extent, args.extent, args.nodes)] * 2, args.time, cfl=0.5)
    pts, vals, eps = est.grid.points, est.grid.values.ravel(), est.eps.ravel()
    lo = np.empty(vals.size)
    up = np.empty(vals.size)
    for r, x in enumerate(pts):
        iv = ev.interval(args.time, x)
        lo[r], up[r] = iv.lower, iv.upper
    excess = np.maximum(lo - vals, vals - up)
    print(f"nodes {vals.size}, observed order {est.order:.2f}, median eps {np.median(eps):.2e}")
    print(f"within eps   {np.mean(excess <= eps) * 100:.3f}%")
    print(f"within 3 eps {np.mean(excess <= 3 * eps) * 100:.3f}%")
    print(f"largest excess {excess.max():.3e} ({(excess / np.maximum(eps, 1e-300)).max():.2f} eps)")
    print(f"mean gap upper - lower {np.mean(up - lo):.4f}")


if __name__ == "__main__":
    main()
