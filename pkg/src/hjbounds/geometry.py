"""Distance from a point to a convex hull in a linearly weighted metric.

Two equivalent routes to ``min_{xi in conv(V)} ||Phi (x - xi)||``:

* :func:`qp_simplex` works on barycentric weights.  It runs Wolfe's
  minimum-norm-point method, a fully corrective Frank-Wolfe variant that
  terminates finitely and stops on the Frank-Wolfe duality gap.
* :func:`qp_halfspace` converts the hull to inequalities (:func:`half_space`,
  ``n <= 3``) and solves the QP with a primal active-set method.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

DEDUP_TOL = 1e-12


class UnsupportedDimension(ValueError):
    pass


class InfeasibleRep(ValueError):
    pass


@dataclass(frozen=True)
class QpSolution:
    xi_star: np.ndarray
    distance: float
    weights: np.ndarray | None
    iterations: int
    converged: bool
    gap: float = 0.0


@dataclass(frozen=True, eq=False)
class VertexHull:
    """``conv(vertices)`` with exact duplicates (within ``DEDUP_TOL``) collapsed."""

    vertices: np.ndarray
    index: np.ndarray  # original row -> collapsed row

    @classmethod
    def build(cls, points) -> "VertexHull":
        P = np.atleast_2d(np.asarray(points, dtype=float))
        if P.shape[0] == 0:
            raise ValueError("a hull needs at least one vertex")
        keep: list[int] = []
        index = np.empty(P.shape[0], dtype=int)
        for r in range(P.shape[0]):
            if keep:
                near = np.flatnonzero(np.max(np.abs(P[keep] - P[r]), axis=1) <= DEDUP_TOL)
                if near.size:
                    index[r] = near[0]
                    continue
            index[r] = len(keep)
            keep.append(r)
        V = P[keep]
        V.setflags(write=False)
        return cls(V, index)

    @property
    def count(self) -> int:
        return self.vertices.shape[0]

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]


def _affine_min_norm(S: np.ndarray) -> np.ndarray:
    """Weights ``a`` (sum 1) minimising ``||a @ S||`` over the affine hull of the rows of ``S``."""
    k = S.shape[0]
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = S @ S.T
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    a = sol[:k]
    return a / a.sum()


def min_norm_point(
    points: np.ndarray | None = None,
    *,
    lmo: Callable[[np.ndarray], np.ndarray] | None = None,
    start: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> tuple[np.ndarray, list[np.ndarray], np.ndarray, int, bool, float]:
    """Wolfe's minimum-norm-point algorithm.

    Either pass ``points`` (rows; ``conv`` of them is the feasible set) or a
    linear minimisation oracle ``lmo(y) -> argmin_{z in K} <y, z>`` plus a
    ``start`` point of ``K``.

    Returns ``(z, corral, weights, iterations, converged, gap)`` where ``z =
    weights @ corral`` and ``gap = ||z||^2 - min_{z' in K} <z, z'>`` bounds
    ``0.5 ||z||^2 - 0.5 ||z*||^2``.
    """
    if points is not None:
        Y = np.atleast_2d(points)
        norms = np.einsum("ij,ij->i", Y, Y)
        start = Y[int(np.argmin(norms))]
        scale = max(1.0, float(norms.max()))

        def lmo(y):
            return Y[int(np.argmin(Y @ y))]

        if max_iter is None:
            max_iter = 50 * Y.shape[0] + 50
    else:
        scale = max(1.0, float(start @ start))
        if max_iter is None:
            max_iter = 10000
    floor = 1e-14 * scale

    corral = [np.array(start, dtype=float)]
    lam = np.array([1.0])
    z = corral[0].copy()
    gap = np.inf
    it = 0
    while it < max_iter:
        it += 1
        s = lmo(z)
        gap = float(z @ z - z @ s)
        if gap <= max(tol, floor):
            return z, corral, lam, it, True, max(gap, 0.0)
        if any(np.array_equal(s, c) for c in corral):
            # the oracle proposes a corral member: z is optimal to rounding
            return z, corral, lam, it, gap <= 1e3 * max(tol, floor), max(gap, 0.0)
        corral.append(np.array(s, dtype=float))
        lam = np.append(lam, 0.0)
        while True:
            S = np.array(corral)
            alpha = _affine_min_norm(S)
            if np.all(alpha > 1e-15):
                lam = alpha
                break
            neg = alpha <= 1e-15
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - alpha), np.inf)
            theta = float(np.min(ratios))
            theta = min(max(theta, 0.0), 1.0)
            lam = lam + theta * (alpha - lam)
            drop = lam <= 1e-15
            if neg[np.argmin(ratios)]:
                drop[int(np.argmin(ratios))] = True
            corral = [c for c, d in zip(corral, drop) if not d]
            lam = lam[~drop]
            lam = lam / lam.sum()
        z = lam @ np.array(corral)
    return z, corral, lam, it, False, max(float(gap), 0.0)


def qp_simplex(hull: VertexHull, phi, x, tol: float = 1e-10) -> QpSolution:
    """``min ||Phi (x - V w)||`` over the probability simplex."""
    if not isinstance(hull, VertexHull):
        hull = VertexHull.build(hull)
    phi = np.asarray(phi, dtype=float)
    x = np.asarray(x, dtype=float)
    V = hull.vertices
    Y = (x - V) @ phi.T
    z, corral, lam, it, ok, gap = min_norm_point(Y, tol=tol)
    # recover barycentric weights on the collapsed vertex list
    w = np.zeros(V.shape[0])
    for c, l in zip(corral, lam):
        hits = np.flatnonzero(np.all(Y == c, axis=1))
        w[hits[0]] += l
    xi = w @ V
    dist = float(np.linalg.norm(phi @ (x - xi)))
    return QpSolution(xi, dist, w, it, ok, gap)


# --- half-space representation ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class HalfSpaceRep:
    """``{xi : C xi <= d, Ceq xi = deq}``; ``point`` is any member (used as a start)."""

    C: np.ndarray
    d: np.ndarray
    Ceq: np.ndarray
    deq: np.ndarray
    point: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.C.shape[1] if self.C.size else self.Ceq.shape[1]

    def contains(self, xi, tol: float = 1e-9) -> bool:
        xi = np.asarray(xi, dtype=float)
        ok = np.all(self.C @ xi <= self.d + tol) if self.C.size else True
        if self.Ceq.size:
            ok = ok and np.all(np.abs(self.Ceq @ xi - self.deq) <= tol)
        return bool(ok)


def _dedupe_rows(C: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if C.shape[0] == 0:
        return C, d
    scale = np.linalg.norm(C, axis=1)
    C = C / scale[:, None]
    d = d / scale
    key = np.round(np.hstack([C, d[:, None]]), 9)
    _, first = np.unique(key, axis=0, return_index=True)
    first = np.sort(first)
    return C[first], d[first]


def half_space(hull, tol: float = 1e-9) -> HalfSpaceRep:
    """Inequality (and equality) description of ``conv(vertices)``.

    Full-dimensional hulls need ``n <= 3``.  Hulls of lower affine dimension
    get equality rows for the orthogonal complement of their affine span.
    """
    if not isinstance(hull, VertexHull):
        hull = VertexHull.build(hull)
    V = hull.vertices
    n = V.shape[1]
    c0 = V.mean(axis=0)
    U, svals, _ = np.linalg.svd((V - c0).T, full_matrices=True)
    scale = max(1.0, float(np.abs(V).max()))
    r = int(np.sum(svals > 1e-10 * scale))
    if r == n and n > 3:
        raise UnsupportedDimension(f"facet enumeration supports n <= 3, got a full-dimensional hull in R^{n}; use qp_simplex")
    basis = U[:, :r]
    normal = U[:, r:]
    Ceq = normal.T.copy()
    deq = Ceq @ c0
    if r == 0:
        C = np.zeros((0, n))
        d = np.zeros(0)
    else:
        coords = (V - c0) @ basis
        if r == 1:
            lo, hi = coords[:, 0].min(), coords[:, 0].max()
            Cr = np.array([[1.0], [-1.0]])
            dr = np.array([hi, -lo])
        else:
            try:
                qh = ConvexHull(coords)
            except QhullError as exc:  # pragma: no cover - guarded by the rank test
                raise UnsupportedDimension(f"qhull failed: {exc}") from exc
            Cr = qh.equations[:, :-1]
            dr = -qh.equations[:, -1]
        C = Cr @ basis.T
        d = dr + C @ c0
        C, d = _dedupe_rows(C, d)
    return HalfSpaceRep(C, d, Ceq, deq, c0)


def _feasible_point(rep: HalfSpaceRep) -> np.ndarray:
    n = rep.dim
    res = linprog(
        np.zeros(n),
        A_ub=rep.C if rep.C.size else None,
        b_ub=rep.d if rep.C.size else None,
        A_eq=rep.Ceq if rep.Ceq.size else None,
        b_eq=rep.deq if rep.Ceq.size else None,
        bounds=[(None, None)] * n,
        method="highs",
    )
    if res.status != 0:
        raise InfeasibleRep("half-space representation is empty")
    return res.x


def _null_space(M: np.ndarray, n: int) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(n)
    _, sv, vt = np.linalg.svd(M)
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0])))
    return vt[rank:].T


def qp_halfspace(rep: HalfSpaceRep, phi, x, tol: float = 1e-10, max_iter: int = 500) -> QpSolution:
    """Primal active-set solve of ``min 0.5 <xi, Q xi> - <Q x, xi>`` on the polyhedron, ``Q = Phi^T Phi``."""
    phi = np.asarray(phi, dtype=float)
    x = np.asarray(x, dtype=float)
    Q = phi.T @ phi
    n = Q.shape[0]
    C, d, Ceq, deq = rep.C, rep.d, rep.Ceq, rep.deq
    xi = rep.point if rep.point is not None else _feasible_point(rep)
    xi = np.array(xi, dtype=float)
    # start from an interior/feasible point; project onto equalities if slightly off
    if Ceq.size:
        xi = xi - np.linalg.lstsq(Ceq, Ceq @ xi - deq, rcond=None)[0]
    if C.size and np.any(C @ xi > d + 1e-9):
        xi = _feasible_point(rep)
    scale = max(1.0, float(np.abs(Q).max()))
    neq = Ceq.shape[0] if Ceq.size else 0
    work: list[int] = []
    it = 0
    converged = False
    # a full unblocked step lands on the subspace minimiser, so the multiplier
    # test runs next without waiting for the roundoff step to vanish
    at_min = False
    while it < max_iter:
        it += 1
        grad = Q @ (xi - x)
        rows = [Ceq] if neq else []
        if work:
            rows.append(C[work])
        M = np.vstack(rows) if rows else np.zeros((0, n))
        Z = _null_space(M, n)
        gz = Z.T @ grad
        small = np.linalg.norm(gz) <= tol * scale * max(1.0, np.linalg.norm(xi), np.linalg.norm(x))
        if at_min or Z.shape[1] == 0 or small:
            at_min = False
            if not work:
                converged = True
                break
            mult = np.linalg.lstsq(M.T, -grad, rcond=None)[0][neq:]
            if mult.min() >= -tol * scale:
                converged = True
                break
            work.pop(int(np.argmin(mult)))
            continue
        step = -Z @ np.linalg.lstsq(Z.T @ Q @ Z, gz, rcond=None)[0]
        alpha = 1.0
        block = None
        if C.size:
            Cs = C @ step
            guard = 1e-12 * np.linalg.norm(C, axis=1) * np.linalg.norm(step)
            for i in range(C.shape[0]):
                if i in work or Cs[i] <= guard[i]:
                    continue
                a = (d[i] - C[i] @ xi) / Cs[i]
                if a < alpha:
                    alpha = max(a, 0.0)
                    block = i
        xi = xi + alpha * step
        if block is not None:
            work.append(block)
        else:
            at_min = True
    dist = float(np.linalg.norm(phi @ (x - xi)))
    return QpSolution(xi, dist, None, it, converged)
