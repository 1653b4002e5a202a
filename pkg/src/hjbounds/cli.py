"""Command-line front end: ``hjbounds <verb> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .bounds import BoundEvaluator, SandwichViolation, grid_eval, grid_points, intervals_to_csv
from .characteristics import (
    BundleFormatError,
    CharacteristicBundle,
    config_hash,
    load_bundle,
    precompute,
    save_bundle,
)
from .config import ConfigError, RunConfig, preset
from .exprs import ExprSyntaxError
from .ltv_model import AlignmentError, check_assumptions
from .oracle import lf_with_estimate
from .reachability import classify_grid

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


class UsageError(ValueError):
    pass


def default_threads() -> int:
    env = os.environ.get("HJB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"HJB_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def parse_grid(text: str):
    """``"min:max:count,..."`` to ``[(min, max, count), ...]``."""
    axes = []
    for part in text.split(","):
        bits = part.strip().split(":")
        if len(bits) != 3:
            raise UsageError(f"bad grid axis {part!r}; expected min:max:count")
        try:
            lo, hi, cnt = float(bits[0]), float(bits[1]), int(bits[2])
        except ValueError:
            raise UsageError(f"bad grid axis {part!r}") from None
        if cnt < 1 or (cnt > 1 and not hi > lo):
            raise UsageError(f"bad grid axis {part!r}; need count >= 1 and max > min")
        axes.append((lo, hi, cnt))
    return axes


def parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"bad point {text!r}; expected comma-separated numbers") from None


def load_config(args) -> RunConfig:
    if getattr(args, "preset", None) and getattr(args, "config", None):
        raise UsageError("use either --config or --preset")
    if getattr(args, "preset", None):
        cfg = preset(args.preset)
    elif getattr(args, "config", None):
        cfg = RunConfig.load(args.config)
    else:
        raise UsageError("a --config file or --preset name is required")
    if getattr(args, "seed", None) is not None:
        cfg.seed = int(args.seed)
    return cfg


def build_bundle(cfg: RunConfig) -> CharacteristicBundle:
    return precompute(
        cfg.build_system(),
        cfg.build_cost(),
        cfg.levels,
        cfg.counts,
        cfg.build_grid(),
        seed=cfg.seed,
        scheme=cfg.scheme,
        metadata={"config_hash": config_hash(cfg.to_dict()), "name": cfg.name},
    )


def _emit(text: str, out):
    if out:
        Path(out).write_bytes(text.encode())
    else:
        sys.stdout.write(text)


# --- verbs ---------------------------------------------------------------------


def cmd_check(args) -> int:
    cfg = load_config(args)
    sys_ = cfg.build_system()
    cost = cfg.build_cost()
    nodes = cfg.build_grid().nodes
    report = check_assumptions(sys_, nodes)
    problems = [f"t={r.t!r}: {r.message or 'kappa=' + str(list(r.kappas))}" for r in report.failures()]

    rng = np.random.default_rng(cfg.seed)
    n = sys_.n
    L = cost.lipschitz
    for _ in range(200):
        x, y = rng.uniform(-2, 2, (2, n))
        lam = rng.uniform()
        gx, gy = cost.value(x), cost.value(y)
        if cost.value(lam * x + (1 - lam) * y) > lam * gx + (1 - lam) * gy + 1e-9 * (1 + abs(gx) + abs(gy)):
            problems.append(f"cost not convex between {x.tolist()} and {y.tolist()}")
            break
        if abs(gx - gy) > L * np.linalg.norm(x - y) * (1 + 1e-9) + 1e-12:
            problems.append(f"cost Lipschitz constant {L} violated between {x.tolist()} and {y.tolist()}")
            break

    print(f"checked {len(nodes)} grid nodes on [{float(nodes[-1])!r}, {float(nodes[0])!r}]")
    if problems:
        print(f"FAIL: {len(problems)} violation(s)")
        for p in problems[:50]:
            print(f"  {p}")
        return EXIT_VALIDATION
    print("PASS: alignment, non-empty trimmed set, cost convexity and Lipschitz spot checks")
    return EXIT_OK


def cmd_precompute(args) -> int:
    cfg = load_config(args)
    if not args.out:
        raise UsageError("--out is required")
    t0 = time.perf_counter()
    bundle = build_bundle(cfg)
    elapsed = time.perf_counter() - t0
    size = save_bundle(bundle, args.out)
    degen = [k for k, d in enumerate(bundle.degenerate) if d]
    print(f"characteristics: {bundle.count} over {bundle.levels.size} levels, {bundle.nodes.size} nodes")
    if degen:
        print(f"single-point levels (one point, distinct subgradients): {[float(bundle.levels[k]) for k in degen]}")
    print(f"precompute wall time: {elapsed:.3f} s")
    print(f"bundle: {args.out} ({size} bytes)")
    return EXIT_OK


def _points_from_args(args, n: int) -> np.ndarray:
    pts = [parse_point(p) for p in args.points]
    if args.points_file:
        for line in Path(args.points_file).read_text().splitlines():
            line = line.strip()
            if line and not line[0].isalpha() and not line.startswith("#"):
                pts.append(parse_point(line))
    if not pts:
        raise UsageError("no points given")
    for p in pts:
        if p.size != n:
            raise UsageError(f"point {p.tolist()} has {p.size} coordinates, bundle state has {n}")
    return np.array(pts)


def cmd_eval(args) -> int:
    bundle = load_bundle(args.bundle)
    pts = _points_from_args(args, bundle.n)
    ivs = grid_eval(bundle, args.time, pts, threads=args.threads)
    _emit(intervals_to_csv(pts, ivs), args.out)
    return _report_poison(ivs)


def _report_poison(ivs) -> int:
    bad = [iv for iv in ivs if "error" in iv.diagnostics]
    for iv in bad[:10]:
        print(f"error: {iv.diagnostics['error']}", file=sys.stderr)
    if any(iv.snapped for iv in ivs):
        print("note: time snapped to the grid node below", file=sys.stderr)
    return EXIT_RUNTIME if bad else EXIT_OK


def cmd_grid(args) -> int:
    bundle = load_bundle(args.bundle)
    spec = parse_grid(args.grid)
    if len(spec) != bundle.n:
        raise UsageError(f"grid has {len(spec)} axes, bundle state has {bundle.n}")
    pts = grid_points(spec)
    ivs = grid_eval(bundle, args.time, pts, threads=args.threads)
    if args.json:
        doc = {
            "t": args.time,
            "points": pts.tolist(),
            "lower": [iv.lower for iv in ivs],
            "upper": [iv.upper for iv in ivs],
            "k_upper": [iv.k_upper for iv in ivs],
            "argmax_lower": [iv.argmax_lower for iv in ivs],
        }
        _emit(json.dumps(doc) + "\n", args.out)
    else:
        _emit(intervals_to_csv(pts, ivs), args.out)
    return _report_poison(ivs)


def cmd_reach(args) -> int:
    bundle = load_bundle(args.bundle)
    spec = parse_grid(args.grid)
    if len(spec) != bundle.n:
        raise UsageError(f"grid has {len(spec)} axes, bundle state has {bundle.n}")
    if args.gamma is None or not np.isfinite(args.gamma):
        raise UsageError("--gamma must be a finite number")
    labels = classify_grid(bundle, args.time, spec, args.gamma, threads=args.threads)
    _emit(labels.to_csv(), args.out)
    print(labels.summary(), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_RUNTIME if labels.failed else EXIT_OK


def cmd_oracle_compare(args) -> int:
    cfg = load_config(args)
    sys_, cost = cfg.build_system(), cfg.build_cost()
    bundle = load_bundle(args.bundle) if args.bundle else build_bundle(cfg)
    axes = parse_grid(args.grid) if args.grid else [tuple(a) for a in cfg.oracle.axes]
    if len(axes) != sys_.n:
        raise UsageError(f"oracle grid has {len(axes)} axes, state has {sys_.n}")
    est = lf_with_estimate(sys_, cost, axes, args.time, cfg.oracle.cfl)
    pts = est.grid.points
    vals = est.grid.values.ravel()
    eps = est.eps.ravel()
    ivs = grid_eval(bundle, args.time, pts, threads=args.threads)
    lines = [",".join([f"x{i + 1}" for i in range(sys_.n)] + ["lower", "oracle", "upper", "eps", "below_lower", "above_upper"])]
    viol = viol3 = 0
    for x, v, e, iv in zip(pts, vals, eps, ivs):
        lo_bad = iv.lower - e > v
        up_bad = v > iv.upper + e
        viol += lo_bad or up_bad
        viol3 += (iv.lower - 3 * e > v) or (v > iv.upper + 3 * e)
        row = [repr(float(c)) for c in x] + [repr(float(iv.lower)), repr(float(v)), repr(float(iv.upper)), repr(float(e)), str(int(lo_bad)), str(int(up_bad))]
        lines.append(",".join(row))
    _emit("\n".join(lines) + "\n", args.out)
    total = len(pts)
    print(
        f"nodes={total} observed_order={est.order:.3f} within_eps={1 - viol / total:.6f} beyond_3eps={viol3}",
        file=sys.stderr if not args.out else sys.stdout,
    )
    return _report_poison(ivs)


def slice_points(n: int, lo: float, hi: float, count: int) -> list[np.ndarray]:
    """One coordinate-axis line per state dimension, other coordinates zero."""
    out = []
    for ax in range(n):
        P = np.zeros((count, n))
        P[:, ax] = np.linspace(lo, hi, count)
        out.append(P)
    return out


def cmd_bench(args) -> int:
    cfg = load_config(args)
    out = Path(args.out) if args.out else None
    t0 = time.perf_counter()
    bundle = build_bundle(cfg)
    pre_time = time.perf_counter() - t0
    path = (out / "bundle.hjb") if out else Path(os.devnull)
    if out:
        out.mkdir(parents=True, exist_ok=True)
    nbytes = save_bundle(bundle, path)
    ev = BoundEvaluator(bundle, method=args.method)
    j, _ = ev.node(args.time)
    times = []
    for P in slice_points(bundle.n, args.lo, args.hi, args.count):
        for x in P:
            s = time.perf_counter()
            ev.interval(args.time, x)
            times.append(time.perf_counter() - s)
    times = np.array(times)
    report = {
        "name": cfg.name,
        "characteristics": bundle.count,
        "nodes": int(bundle.nodes.size),
        "precompute_seconds": pre_time,
        "bundle_bytes": nbytes,
        "access_points": int(times.size),
        "access_mean_ms": float(times.mean() * 1e3),
        "access_max_ms": float(times.max() * 1e3),
        "method": args.method,
    }
    text = json.dumps(report, indent=2) + "\n"
    if out:
        (out / "bench.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hjbounds", description="Certified value-function bounds for LTV differential games.")
    sub = p.add_subparsers(dest="verb", required=True)

    def cfg_opts(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--preset", help="built-in configuration, e.g. paper-example-6")
        sp.add_argument("--seed", type=int, help="override the configured seed")

    def thread_opt(sp):
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: HJB_THREADS or core count)")

    sp = sub.add_parser("check", help="validate a configuration and its assumptions")
    cfg_opts(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("precompute", help="integrate characteristics and write a bundle")
    cfg_opts(sp)
    thread_opt(sp)
    sp.add_argument("--out", help="bundle output path")
    sp.set_defaults(func=cmd_precompute)

    sp = sub.add_parser("eval", help="bounds at individual points")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--time", type=float, required=True)
    sp.add_argument("points", nargs="*", help="points as comma-separated coordinates")
    sp.add_argument("--points-file", help="file with one comma-separated point per line")
    sp.add_argument("--out")
    thread_opt(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("grid", help="bounds on a rectangular grid")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--time", type=float, required=True)
    sp.add_argument("--grid", required=True, help='"min:max:count,..." per axis')
    sp.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    sp.add_argument("--out")
    thread_opt(sp)
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("reach", help="reach/avoid labels for a level gamma")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--time", type=float, required=True)
    sp.add_argument("--gamma", type=float, required=True)
    sp.add_argument("--grid", required=True)
    sp.add_argument("--out")
    thread_opt(sp)
    sp.set_defaults(func=cmd_reach)

    sp = sub.add_parser("oracle-compare", help="compare the bounds with a grid-based solution")
    cfg_opts(sp)
    sp.add_argument("--bundle", help="reuse a bundle instead of recomputing it")
    sp.add_argument("--time", type=float, default=0.0)
    sp.add_argument("--grid", help="oracle axes; defaults to the configured ones")
    sp.add_argument("--out")
    thread_opt(sp)
    sp.set_defaults(func=cmd_oracle_compare)

    sp = sub.add_parser("bench", help="precompute time, bundle size and access times")
    cfg_opts(sp)
    sp.add_argument("--time", type=float, default=0.0)
    sp.add_argument("--lo", type=float, default=-1.0)
    sp.add_argument("--hi", type=float, default=1.0)
    sp.add_argument("--count", type=int, default=151)
    sp.add_argument("--method", choices=("simplex", "halfspace"), default="simplex")
    sp.add_argument("--out", help="directory for bundle.hjb and bench.json")
    sp.set_defaults(func=cmd_bench)
    return p


def _join_values(argv: list[str]) -> list[str]:
    # "--grid -1:1:5" would be read as an option; glue such values to their flag
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in ("--grid", "--time", "--gamma", "--lo", "--hi") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        # a leading space stops argparse reading "-0.5,1" as an option; float() ignores it
        if len(a) > 1 and a[0] == "-" and (a[1].isdigit() or a[1] == "."):
            a = " " + a
        out.append(a)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_values(list(sys.argv[1:] if argv is None else argv)))
    try:
        if hasattr(args, "threads"):
            args.threads = args.threads if args.threads is not None else default_threads()
            if args.threads < 1:
                raise UsageError("--threads must be >= 1")
        return args.func(args)
    except (ConfigError, UsageError, AlignmentError, ExprSyntaxError, BundleFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SandwichViolation, ArithmeticError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
