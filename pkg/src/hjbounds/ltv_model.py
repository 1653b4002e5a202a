"""LTV game plant, zonotopic control sets and the trimmed control set.

The plant is ``xdot = A(s) x + B(s) u + E(s) d`` with ``u`` in the zonotope
``U`` (minimising player) and ``d`` in the zonotope ``D`` (maximising
player).  When ``-E(s) D`` is *aligned* with ``B(s) U`` (every generator of
the former is a scaling ``kappa_i * b_i`` of a generator of the latter with
``kappa_i`` in [0, 1]) the Minkowski difference ``W(s) = B(s)U - (-E(s)D)``
has the closed form ``c_BU - c_negED + sum [-1, 1] (1 - kappa_i) b_i``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .exprs import Expr, ExprDomainError, evaluate, parse

PARALLEL_TOL = 1e-9
KAPPA_TOL = 1e-12
ZERO_GEN_TOL = 1e-14


class AlignmentError(ValueError):
    """No generator matching with kappa in [0, 1] exists at some time."""


class MatrixEntryError(ArithmeticError):
    pass


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Zonotope:
    """``{center + sum_i theta_i * generators[i] : theta in [-1, 1]^k}``.

    ``generators`` is stored row-wise with shape ``(k, n)``; ``k`` may be 0.
    """

    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        c = _frozen(self.center).reshape(-1)
        g = np.array(self.generators, dtype=float)
        if g.size == 0:
            g = np.zeros((0, c.size))
        g = g.reshape(-1, c.size)
        g.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", g)

    @property
    def dim(self) -> int:
        return self.center.size

    @classmethod
    def box(cls, lower, upper) -> "Zonotope":
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        return cls((lo + hi) / 2, np.diag((hi - lo) / 2))

    @classmethod
    def point(cls, c) -> "Zonotope":
        c = np.asarray(c, dtype=float)
        return cls(c, np.zeros((0, c.size)))

    def linear_map(self, M) -> "Zonotope":
        M = np.asarray(M, dtype=float)
        return Zonotope(M @ self.center, self.generators @ M.T)

    def minkowski_sum(self, other: "Zonotope") -> "Zonotope":
        return Zonotope(
            self.center + other.center, np.vstack([self.generators, other.generators])
        )

    def __add__(self, other):
        return self.minkowski_sum(other)

    def nonzero_generators(self) -> np.ndarray:
        norms = np.linalg.norm(self.generators, axis=1)
        return self.generators[norms > ZERO_GEN_TOL]

    def support(self, p) -> float:
        return zonotope_support(self, p)

    def contains(self, x, tol: float = 1e-9) -> bool:
        return zonotope_contains(self, x, tol)

    def vertices_bruteforce(self) -> np.ndarray:
        """All ``2**k`` sign combinations (small ``k`` only, used by oracles)."""
        g = self.generators
        signs = np.array(list(itertools.product([-1.0, 1.0], repeat=g.shape[0])), dtype=float).reshape(2 ** g.shape[0], g.shape[0])
        return self.center + signs @ g


def zonotope_support(Z: Zonotope, p) -> float | np.ndarray:
    """``max_{z in Z} <p, z>``; ``p`` may be a stack of directions ``(..., n)``."""
    p = np.asarray(p, dtype=float)
    return p @ Z.center + np.abs(p @ Z.generators.T).sum(axis=-1)


def support_argmax(Z: Zonotope, p) -> np.ndarray:
    """Maximiser of ``<p, .>`` over ``Z`` with ``sign(0) = 0`` at ties.

    Accepts a stack of directions ``(..., n)`` and returns matching points.
    """
    p = np.asarray(p, dtype=float)
    return Z.center + np.sign(p @ Z.generators.T) @ Z.generators


def zonotope_contains(Z: Zonotope, x, tol: float = 1e-9) -> bool:
    x = np.asarray(x, dtype=float)
    G = Z.generators
    r = x - Z.center
    if G.shape[0] == 0:
        return bool(np.linalg.norm(r) <= tol)
    k = G.shape[0]
    # min s  s.t.  |G^T theta - r| <= s, -1 <= theta <= 1
    n = Z.dim
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A_ub = np.block([[G.T, -np.ones((n, 1))], [-G.T, -np.ones((n, 1))]])
    b_ub = np.concatenate([r, -r])
    bounds = [(-1.0, 1.0)] * k + [(0.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    return bool(res.status == 0 and res.fun <= tol)


def support_distance(Z1: Zonotope, Z2: Zonotope, directions) -> float:
    """Hausdorff distance estimate ``max_d |h_Z1(d) - h_Z2(d)|`` over unit ``directions``."""
    d = np.asarray(directions, dtype=float)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    return float(np.max(np.abs(zonotope_support(Z1, d) - zonotope_support(Z2, d))))


# --- system -------------------------------------------------------------------


def _parse_matrix(entries, shape, name) -> tuple[tuple[Expr, ...], ...]:
    rows = list(entries)
    if len(rows) != shape[0] or any(len(r) != shape[1] for r in rows):
        raise ValueError(f"{name} must be {shape[0]}x{shape[1]}")
    def entry(v):
        return parse(repr(float(v))) if isinstance(v, (int, float)) else parse(str(v))

    return tuple(tuple(entry(v) for v in r) for r in rows)


@dataclass(frozen=True, eq=False)
class LtvSystem:
    """``xdot = A(s) x + B(s) u + E(s) d`` on ``[t0, T]`` with ``u in U``, ``d in D``."""

    A_entries: tuple
    B_entries: tuple
    E_entries: tuple
    U: Zonotope
    D: Zonotope
    t0: float
    T: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.A_entries)
        if self.T <= self.t0 or self.t0 < 0:
            raise ValueError(f"horizon must satisfy T > t0 >= 0, got [{self.t0}, {self.T}]")
        if any(len(r) != n for r in self.A_entries):
            raise ValueError("A must be square")
        if len(self.B_entries) != n or len(self.E_entries) != n:
            raise ValueError("B and E must have n rows")
        m = len(self.B_entries[0]) if n else 0
        ell = len(self.E_entries[0]) if n else 0
        if self.U.dim != m:
            raise ValueError(f"U has dimension {self.U.dim}, B has {m} columns")
        if self.D.dim != ell:
            raise ValueError(f"D has dimension {self.D.dim}, E has {ell} columns")

    @classmethod
    def from_strings(cls, A, B, E, U: Zonotope, D: Zonotope, t0: float, T: float) -> "LtvSystem":
        A = [list(r) for r in A]
        B = [list(r) for r in B]
        E = [list(r) for r in E]
        n = len(A)
        m = len(B[0]) if B else 0
        ell = len(E[0]) if E else 0
        return cls(
            _parse_matrix(A, (n, n), "A"),
            _parse_matrix(B, (n, m), "B"),
            _parse_matrix(E, (n, ell), "E"),
            U,
            D,
            float(t0),
            float(T),
        )

    @classmethod
    def constant(cls, A, B, E, U: Zonotope, D: Zonotope, t0: float, T: float) -> "LtvSystem":
        to_str = lambda M: [[repr(float(v)) for v in row] for row in np.atleast_2d(M)]
        return cls.from_strings(to_str(A), to_str(B), to_str(E), U, D, t0, T)

    @property
    def n(self) -> int:
        return len(self.A_entries)

    @property
    def m(self) -> int:
        return self.U.dim

    @property
    def ell(self) -> int:
        return self.D.dim


def _eval_matrix(entries, s, name) -> np.ndarray:
    rows = len(entries)
    cols = len(entries[0]) if rows else 0
    M = np.empty((rows, cols))
    for i, row in enumerate(entries):
        for j, e in enumerate(row):
            try:
                M[i, j] = evaluate(e, s)
            except ExprDomainError as exc:
                raise MatrixEntryError(f"{name}[{i}][{j}] at t={s!r}: {exc}") from exc
            if not np.isfinite(M[i, j]):
                raise MatrixEntryError(f"{name}[{i}][{j}] at t={s!r} is not finite")
    return M


def eval_matrices(sys: LtvSystem, s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = float(s)
    hit = sys._cache.get(s)
    if hit is None:
        hit = (
            _eval_matrix(sys.A_entries, s, "A"),
            _eval_matrix(sys.B_entries, s, "B"),
            _eval_matrix(sys.E_entries, s, "E"),
        )
        for M in hit:
            M.setflags(write=False)
        if len(sys._cache) < 65536:
            sys._cache[s] = hit
    return hit


def mapped_control_sets(sys: LtvSystem, s: float) -> tuple[Zonotope, Zonotope]:
    """``(B(s) U, -E(s) D)``."""
    _, B, E = eval_matrices(sys, s)
    return sys.U.linear_map(B), sys.D.linear_map(-E)


def match_generators(BU: Zonotope, negED: Zonotope) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(b, kappa)``: BU generators and per-generator scales.

    Each non-zero generator of ``negED`` is assigned to a parallel generator
    of ``BU`` (angular tolerance ``PARALLEL_TOL``); parallel contributions are
    accumulated.  Raises :class:`AlignmentError` if a generator is unmatched
    or a scale exceeds one.
    """
    b = BU.generators
    bnorm = np.linalg.norm(b, axis=1)
    kappa = np.zeros(b.shape[0])
    for j, g in enumerate(negED.generators):
        gn = np.linalg.norm(g)
        if gn <= ZERO_GEN_TOL:
            continue
        best = None
        for i in range(b.shape[0]):
            if bnorm[i] <= ZERO_GEN_TOL:
                continue
            # sine of the angle between g and b_i
            residual = g - (g @ b[i]) / bnorm[i] ** 2 * b[i]
            if np.linalg.norm(residual) > PARALLEL_TOL * gn:
                continue
            room = 1.0 - kappa[i]
            if best is None or room > 1.0 - kappa[best]:
                best = i
        if best is None:
            raise AlignmentError(f"generator {j} of -E(s)D = {g.tolist()} is not parallel to any generator of B(s)U")
        kappa[best] += gn / bnorm[best]
        if kappa[best] > 1.0 + KAPPA_TOL:
            raise AlignmentError(
                f"generator {j} of -E(s)D = {g.tolist()} exceeds B(s)U generator {best} (kappa={kappa[best]:.6g} > 1)"
            )
    return b, np.minimum(kappa, 1.0)


def trimmed_set(sys: LtvSystem, s: float) -> Zonotope:
    """``W(s) = B(s)U minkowski-minus (-E(s)D)`` under alignment."""
    BU, negED = mapped_control_sets(sys, s)
    try:
        b, kappa = match_generators(BU, negED)
    except AlignmentError as exc:
        raise AlignmentError(f"at t={s!r}: {exc}") from None
    return Zonotope(BU.center - negED.center, (1.0 - kappa)[:, None] * b)


@dataclass(frozen=True)
class AlignmentRecord:
    t: float
    aligned: bool
    kappas: tuple[float, ...]
    w_nonempty: bool
    message: str = ""


@dataclass(frozen=True)
class AlignmentReport:
    records: tuple[AlignmentRecord, ...]

    @property
    def passed(self) -> bool:
        return all(r.aligned and r.w_nonempty for r in self.records)

    def failures(self) -> list[AlignmentRecord]:
        return [r for r in self.records if not (r.aligned and r.w_nonempty)]


def check_assumptions(sys: LtvSystem, time_samples: Sequence[float]) -> AlignmentReport:
    if len(time_samples) == 0:
        raise ValueError("time_samples must be non-empty")
    records = []
    for s in time_samples:
        s = float(s)
        try:
            BU, negED = mapped_control_sets(sys, s)
            _, kappa = match_generators(BU, negED)
        except (AlignmentError, MatrixEntryError) as exc:
            records.append(AlignmentRecord(s, False, (), False, str(exc)))
            continue
        ok = bool(np.all((kappa >= -KAPPA_TOL) & (kappa <= 1.0 + KAPPA_TOL)))
        records.append(AlignmentRecord(s, ok, tuple(float(k) for k in kappa), ok))
    return AlignmentReport(tuple(records))


# --- Hamiltonians -------------------------------------------------------------


def game_hamiltonian(sys: LtvSystem, t: float, x, p) -> float:
    """``max_u min_d <-p, A x + B u + E d>`` through zonotope supports."""
    A, _, _ = eval_matrices(sys, t)
    BU, negED = mapped_control_sets(sys, t)
    p = np.asarray(p, dtype=float)
    ED = Zonotope(-negED.center, -negED.generators)
    return float(-p @ (A @ np.asarray(x, dtype=float)) + zonotope_support(BU, -p) - zonotope_support(ED, p))


def trimmed_hamiltonian(sys: LtvSystem, t: float, x, p) -> float:
    """``max_{w in W(t)} <-p, A x + w>``."""
    A, _, _ = eval_matrices(sys, t)
    W = trimmed_set(sys, t)
    p = np.asarray(p, dtype=float)
    return float(-p @ (A @ np.asarray(x, dtype=float)) + zonotope_support(W, -p))
