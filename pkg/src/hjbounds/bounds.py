"""Evaluate the upper and lower value bounds from a precomputed bundle.

``upper(t, x) = min_k  L_g * min_{xi in conv(xi_ik(t))} ||Phi(T, t)(x - xi)|| + gamma_k``
``lower(t, x) = max_{k,i} <lam_ik(t), x> + q_ik(t)``
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .characteristics import CharacteristicBundle
from .geometry import HalfSpaceRep, VertexHull, half_space, qp_halfspace, qp_simplex

SANDWICH_TOL = 1e-9


class SandwichViolation(AssertionError):
    """Lower bound exceeded the upper bound: a bug or a violated assumption."""


@dataclass
class UpperResult:
    value: float
    level: int
    converged: bool
    snapped: bool
    qp_iterations: int = 0
    levels_solved: int = 0


@dataclass
class BoundInterval:
    lower: float
    upper: float
    k_upper: int
    argmax_lower: int
    snapped: bool
    qp_converged: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def width(self) -> float:
        return self.upper - self.lower


class BoundEvaluator:
    """Caches per-node hull data of a bundle for repeated queries.

    ``method="simplex"`` (default) solves the distance QP on barycentric
    weights; ``method="halfspace"`` converts each hull to inequalities first
    (``n <= 3``).
    """

    def __init__(self, bundle: CharacteristicBundle, method: str = "simplex", tol: float = 1e-10):
        if method not in ("simplex", "halfspace"):
            raise ValueError(f"unknown method {method!r}")
        self.bundle = bundle
        self.method = method
        self.tol = tol
        self._hulls: dict[tuple[int, int], VertexHull] = {}
        self._reps: dict[tuple[int, int], HalfSpaceRep] = {}
        self._members = [bundle.level_members(k) for k in range(bundle.levels.size)]

    def hull(self, k: int, j: int) -> VertexHull:
        key = (k, j)
        h = self._hulls.get(key)
        if h is None:
            h = VertexHull.build(self.bundle.xi[self._members[k], j])
            self._hulls[key] = h
        return h

    def rep(self, k: int, j: int) -> HalfSpaceRep:
        key = (k, j)
        r = self._reps.get(key)
        if r is None:
            r = half_space(self.hull(k, j))
            self._reps[key] = r
        return r

    def node(self, t: float) -> tuple[int, bool]:
        return self.bundle.grid.locate(t)

    def upper(self, t: float, x) -> UpperResult:
        j, snapped = self.node(t)
        return self.upper_at_node(j, x, snapped)

    def upper_at_node(self, j: int, x, snapped: bool = False) -> UpperResult:
        b = self.bundle
        x = np.asarray(x, dtype=float)
        phi = b.phi[j]
        best, best_k, ok, iters, solved = np.inf, -1, True, 0, 0
        for k in np.argsort(b.levels, kind="stable"):
            gamma = b.levels[k]
            # upper_k >= gamma_k, so this level cannot improve the minimum
            if gamma >= best:
                continue
            if self.method == "simplex":
                sol = qp_simplex(self.hull(k, j), phi, x, self.tol)
            else:
                sol = qp_halfspace(self.rep(k, j), phi, x, self.tol)
            solved += 1
            iters += sol.iterations
            val = b.L_g * sol.distance + gamma
            if val < best:
                best, best_k, ok = val, int(k), sol.converged
        return UpperResult(float(best), best_k, ok, snapped, iters, solved)

    def lower(self, t: float, x) -> tuple[float, int]:
        j, _ = self.node(t)
        return self.lower_at_node(j, x)

    def lower_at_node(self, j: int, x) -> tuple[float, int]:
        b = self.bundle
        vals = b.lam[:, j] @ np.asarray(x, dtype=float) + b.q[:, j]
        i = int(np.argmax(vals))
        return float(vals[i]), i

    def interval(self, t: float, x) -> BoundInterval:
        if not np.all(np.isfinite(np.asarray(x, dtype=float))):
            raise ValueError(f"non-finite query point {np.asarray(x).tolist()}")
        j, snapped = self.node(t)
        up = self.upper_at_node(j, x, snapped)
        lo, arg = self.lower_at_node(j, x)
        if lo > up.value + SANDWICH_TOL * max(1.0, abs(up.value)):
            raise SandwichViolation(f"lower {lo!r} > upper {up.value!r} at t={t!r}, x={np.asarray(x).tolist()}")
        return BoundInterval(
            lo,
            up.value,
            up.level,
            arg,
            snapped,
            up.converged,
            {"qp_iterations": up.qp_iterations, "levels_solved": up.levels_solved, "node": j},
        )


def upper_bound(bundle: CharacteristicBundle, t: float, x) -> tuple[float, UpperResult]:
    res = BoundEvaluator(bundle).upper(t, x)
    return res.value, res


def lower_bound(bundle: CharacteristicBundle, t: float, x) -> tuple[float, int]:
    return BoundEvaluator(bundle).lower(t, x)


def bound_interval(bundle: CharacteristicBundle, t: float, x) -> BoundInterval:
    return BoundEvaluator(bundle).interval(t, x)


def grid_points(spec) -> np.ndarray:
    """Row-major points from ``[(min, max, count), ...]`` or an explicit ``(P, n)`` list."""
    if isinstance(spec, np.ndarray) and spec.ndim == 2:
        return spec.astype(float)
    spec = list(spec)
    if spec and isinstance(spec[0], (tuple, list)) and len(spec[0]) == 3 and isinstance(spec[0][2], (int, np.integer)):
        axes = [np.linspace(lo, hi, int(cnt)) for lo, hi, cnt in spec]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])
    return np.atleast_2d(np.asarray(spec, dtype=float))


def grid_eval(
    bundle: CharacteristicBundle,
    t: float,
    spec,
    threads: int = 1,
    evaluator: BoundEvaluator | None = None,
) -> list[BoundInterval]:
    """Per-point intervals in row-major order.

    A point whose evaluation fails comes back with NaN bounds and the error
    message under ``diagnostics["error"]``.
    """
    ev = evaluator or BoundEvaluator(bundle)
    pts = grid_points(spec)
    j, _ = ev.node(t)
    # warm the hull cache so worker threads only read it
    for k in range(bundle.levels.size):
        ev.hull(k, j)
        if ev.method == "halfspace":
            ev.rep(k, j)

    def one(x):
        try:
            return ev.interval(t, x)
        except (SandwichViolation, ArithmeticError, ValueError) as exc:
            return _poisoned(exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, pts))
    return [one(x) for x in pts]


def _poisoned(exc) -> BoundInterval:
    return BoundInterval(np.nan, np.nan, -1, -1, False, False, {"error": str(exc)})


def intervals_to_csv(points, intervals: list[BoundInterval]) -> str:
    """CSV with header ``x1..xn,lower,upper,k_upper,argmax_lower``; floats use ``repr``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    buf = io.StringIO(newline="")
    buf.write(",".join([f"x{i + 1}" for i in range(pts.shape[1])] + ["lower", "upper", "k_upper", "argmax_lower"]) + "\n")
    for x, iv in zip(pts, intervals):
        row = [repr(float(v)) for v in x] + [repr(float(iv.lower)), repr(float(iv.upper)), str(iv.k_upper), str(iv.argmax_lower)]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def intervals_from_csv(text: str) -> tuple[np.ndarray, list[BoundInterval]]:
    rows = list(csv.reader(io.StringIO(text)))
    head, body = rows[0], rows[1:]
    n = len(head) - 4
    pts = np.array([[float(v) for v in r[:n]] for r in body]).reshape(len(body), n)
    ivs = [BoundInterval(float(r[n]), float(r[n + 1]), int(r[n + 2]), int(r[n + 3]), False, True) for r in body]
    return pts, ivs
