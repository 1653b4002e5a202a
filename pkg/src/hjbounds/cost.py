"""Convex, globally Lipschitz terminal costs and their level-set data.

Three families are supported: the Euclidean distance to a centre, a
weighted norm ``||P (x - c)||`` with ``P`` of full column rank, and the
pointwise maximum of affine functions.  Each exposes a value, a subgradient
selection, its Lipschitz constant and a way to put points on a level set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .geometry import VertexHull, qp_simplex

LEVEL_TOL = 1e-10


class LevelInfeasible(ValueError):
    """Requested level lies below ``inf g``."""


class DegenerateLevelWarning(UserWarning):
    """The level set is a single point; requested samples were collapsed."""


def unit_directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic, well spread unit vectors in ``R^n``.

    ``n == 1``: alternating ``-1, +1``; ``n == 2``: equally spaced angles;
    ``n == 3``: a Fibonacci lattice on the upper hemisphere interleaved with
    its antipodes; otherwise seeded Gaussian samples, also in antipodal pairs.
    Antipodal sets keep the bounds symmetric whenever the game is.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if n == 1:
        return np.array([[-1.0] if i % 2 == 0 else [1.0] for i in range(count)])
    if n == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    half = (count + 1) // 2
    if n == 3:
        z = 1 - (np.arange(half) + 0.5) / half
        r = np.sqrt(np.clip(1 - z * z, 0.0, None))
        phi = np.pi * (3 - math.sqrt(5)) * np.arange(half)
        h = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    else:
        rng = np.random.default_rng(seed)
        h = rng.standard_normal((half, n))
        h /= np.linalg.norm(h, axis=1, keepdims=True)
    out = np.empty((2 * half, n))
    out[0::2] = h
    out[1::2] = -h
    return out[:count]


class ConvexCost:
    """Base class; concrete costs are frozen dataclasses."""

    kind: str = ""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError

    def value(self, x) -> float | np.ndarray:
        raise NotImplementedError

    def subgradient(self, x, seed: int = 0) -> np.ndarray:
        raise NotImplementedError

    def minimizer(self) -> tuple[np.ndarray, float]:
        """A point attaining ``inf g`` and the infimum (``-inf`` if unbounded)."""
        raise NotImplementedError

    def kink_subgradients(self, x, count: int) -> np.ndarray:
        """``count`` spread-out elements of the subdifferential at ``x``."""
        raise NotImplementedError

    def ray_to_level(self, origin, direction, gamma) -> float | None:
        """Step ``s >= 0`` with ``g(origin + s * direction) = gamma``; ``None`` if no crossing."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class EuclideanNorm(ConvexCost):
    center: np.ndarray
    kind = "euclidean_norm"

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))

    @property
    def dim(self):
        return self.center.size

    @property
    def lipschitz(self):
        return 1.0

    def value(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float) - self.center, axis=-1)

    def subgradient(self, x, seed=0):
        r = np.asarray(x, dtype=float) - self.center
        nr = np.linalg.norm(r)
        if nr > 0:
            return r / nr
        return _ball_element(self.dim, seed)

    def minimizer(self):
        return self.center.copy(), 0.0

    def kink_subgradients(self, x, count):
        if np.linalg.norm(np.asarray(x) - self.center) > 0:
            return np.tile(self.subgradient(x), (count, 1))
        return _ball_spread(self.dim, count)

    def ray_to_level(self, origin, direction, gamma):
        # |o + s d - c| = gamma, o assumed inside the gamma-ball
        o = np.asarray(origin) - self.center
        d = np.asarray(direction)
        a, b, c = d @ d, 2 * o @ d, o @ o - gamma * gamma
        disc = b * b - 4 * a * c
        if a == 0 or disc < 0:
            return None
        return max(0.0, (-b + math.sqrt(disc)) / (2 * a))

    def to_dict(self):
        return {"type": self.kind, "center": self.center.tolist()}


@dataclass(frozen=True, eq=False)
class WeightedNorm(ConvexCost):
    P: np.ndarray
    center: np.ndarray
    kind = "weighted_norm"

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        c = np.asarray(self.center, dtype=float).reshape(-1)
        if P.shape[1] != c.size:
            raise ValueError("P must have as many columns as the state dimension")
        if np.linalg.matrix_rank(P) < P.shape[1]:
            raise ValueError("P must have full column rank")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "center", c)

    @property
    def dim(self):
        return self.center.size

    @property
    def lipschitz(self):
        return float(np.linalg.norm(self.P, 2))

    def value(self, x):
        r = np.asarray(x, dtype=float) - self.center
        return np.linalg.norm(r @ self.P.T, axis=-1)

    def subgradient(self, x, seed=0):
        y = self.P @ (np.asarray(x, dtype=float) - self.center)
        ny = np.linalg.norm(y)
        if ny > 0:
            return self.P.T @ (y / ny)
        return self.P.T @ _ball_element(self.P.shape[0], seed)

    def minimizer(self):
        return self.center.copy(), 0.0

    def kink_subgradients(self, x, count):
        if np.linalg.norm(np.asarray(x) - self.center) > 0:
            return np.tile(self.subgradient(x), (count, 1))
        return _ball_spread(self.P.shape[0], count) @ self.P

    def ray_to_level(self, origin, direction, gamma):
        o = self.P @ (np.asarray(origin) - self.center)
        d = self.P @ np.asarray(direction)
        a, b, c = d @ d, 2 * o @ d, o @ o - gamma * gamma
        disc = b * b - 4 * a * c
        if a == 0 or disc < 0:
            return None
        return max(0.0, (-b + math.sqrt(disc)) / (2 * a))

    def to_dict(self):
        return {"type": self.kind, "P": self.P.tolist(), "center": self.center.tolist()}


@dataclass(frozen=True, eq=False)
class PolyhedralMax(ConvexCost):
    """``g(x) = max_i <a_i, x> + b_i``; rows of ``a`` are the slopes."""

    a: np.ndarray
    b: np.ndarray
    kind = "polyhedral_max"

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if a.shape[0] != b.size or a.shape[0] == 0:
            raise ValueError("need one offset per affine piece and at least one piece")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.a.shape[1]

    @property
    def lipschitz(self):
        return float(np.max(np.linalg.norm(self.a, axis=1)))

    def value(self, x):
        return np.max(np.asarray(x, dtype=float) @ self.a.T + self.b, axis=-1)

    def subgradient(self, x, seed=0):
        vals = self.a @ np.asarray(x, dtype=float) + self.b
        return self.a[int(np.argmax(vals))].copy()

    def minimizer(self):
        n = self.dim
        # min t  s.t.  a_i x + b_i <= t
        res = linprog(
            np.r_[np.zeros(n), 1.0],
            A_ub=np.hstack([self.a, -np.ones((self.a.shape[0], 1))]),
            b_ub=-self.b,
            bounds=[(None, None)] * (n + 1),
            method="highs",
        )
        if res.status == 0:
            x = res.x[:n]
            return x, float(self.value(x))
        return np.zeros(n), -np.inf

    def kink_subgradients(self, x, count):
        vals = self.a @ np.asarray(x, dtype=float) + self.b
        active = np.flatnonzero(vals >= vals.max() - 1e-12)
        return self.a[[active[i % active.size] for i in range(count)]].copy()

    def ray_to_level(self, origin, direction, gamma):
        o = np.asarray(origin)
        d = np.asarray(direction)
        slope = self.a @ d
        level = gamma - (self.a @ o + self.b)
        up = slope > 1e-15
        if not np.any(up):
            return None
        return max(0.0, float(np.min(level[up] / slope[up])))

    def to_dict(self):
        return {
            "type": self.kind,
            "pieces": [{"a": ai.tolist(), "b": float(bi)} for ai, bi in zip(self.a, self.b)],
        }


def _ball_element(n: int, seed: int) -> np.ndarray:
    """Seeded element of the closed unit ball; seed 0 selects the origin."""
    if seed == 0:
        return np.zeros(n)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v) * rng.uniform() ** (1.0 / n)


def _ball_spread(n: int, count: int) -> np.ndarray:
    # origin first, then unit directions
    if count == 1:
        return np.zeros((1, n))
    return np.vstack([np.zeros((1, n)), unit_directions(n, count - 1)])


def cost_from_dict(spec: dict) -> ConvexCost:
    kind = spec.get("type")
    if kind == "euclidean_norm":
        return EuclideanNorm(spec["center"])
    if kind == "weighted_norm":
        return WeightedNorm(spec["P"], spec["center"])
    if kind == "polyhedral_max":
        pieces = spec["pieces"]
        return PolyhedralMax([p["a"] for p in pieces], [p["b"] for p in pieces])
    raise ValueError(f"unknown cost type {kind!r}")


# --- functional surface ----------------------------------------------------------


def eval_cost(g: ConvexCost, x) -> float:
    return float(g.value(x))


def subgradient(g: ConvexCost, x, seed: int = 0) -> np.ndarray:
    return g.subgradient(x, seed)


def is_min_level(g: ConvexCost, gamma: float) -> bool:
    _, gmin = g.minimizer()
    return bool(np.isfinite(gmin) and abs(gamma - gmin) <= LEVEL_TOL)


def sample_level_set(g: ConvexCost, gamma: float, count: int, seed: int = 0) -> np.ndarray:
    """``count`` points with ``|g(x) - gamma| <= 1e-10``.

    Rays are shot from a minimiser along :func:`unit_directions`.  At the
    minimum level of a norm-type cost the level set is one point; a single
    row is returned and :class:`DegenerateLevelWarning` is emitted.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    x0, gmin = g.minimizer()
    if gamma < gmin - LEVEL_TOL:
        raise LevelInfeasible(f"level {gamma} is below inf g = {gmin}")
    if np.isfinite(gmin) and abs(gamma - gmin) <= LEVEL_TOL:
        if count > 1:
            warnings.warn(
                f"level {gamma} is the minimum of g; {count} requested points collapse to one",
                DegenerateLevelWarning,
                stacklevel=2,
            )
        return x0.reshape(1, -1)
    if not np.isfinite(gmin):
        x0 = _point_below(g, gamma - 1.0)
    dirs = unit_directions(g.dim, count, seed)
    pts = []
    for d in dirs:
        s = g.ray_to_level(x0, d, gamma)
        if s is None:
            continue
        pts.append(_polish(g, x0 + s * d, x0, d, s, gamma))
    extra = 0
    while len(pts) < count and extra < 100 * count:
        # unbounded level set in some directions: draw more rays
        rng = np.random.default_rng(seed + 1 + extra)
        d = rng.standard_normal(g.dim)
        d /= np.linalg.norm(d)
        s = g.ray_to_level(x0, d, gamma)
        if s is not None:
            pts.append(_polish(g, x0 + s * d, x0, d, s, gamma))
        extra += 1
    if len(pts) < count:
        raise LevelInfeasible(f"could not place {count} points on level {gamma}")
    return np.array(pts[:count])


def _polish(g, x, x0, d, s, gamma):
    # a few secant corrections absorb rounding in the closed-form step
    for _ in range(3):
        err = float(g.value(x)) - gamma
        if abs(err) <= 1e-13 * max(1.0, abs(gamma)):
            break
        slope = float(g.subgradient(x) @ d)
        if slope <= 0:
            break
        s -= err / slope
        x = x0 + s * d
    return x


def _point_below(g: PolyhedralMax, level: float) -> np.ndarray:
    n = g.dim
    res = linprog(np.zeros(n), A_ub=g.a, b_ub=level - g.b, bounds=[(None, None)] * n, method="highs")
    if res.status != 0:
        raise LevelInfeasible(f"no point with g <= {level}")
    return res.x


@dataclass(frozen=True, eq=False)
class LevelData:
    """Terminal data: per level ``k`` the points ``xbar[k]`` and subgradients ``p[k]``.

    ``xbar[k]`` and ``p[k]`` have one row per characteristic; the rows of
    ``xbar[k]`` may repeat (a degenerate level carries one point with several
    subgradients).
    """

    levels: np.ndarray
    xbar: tuple[np.ndarray, ...]
    p: tuple[np.ndarray, ...]
    degenerate: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "levels", np.asarray(self.levels, dtype=float))
        if not self.degenerate:
            object.__setattr__(self, "degenerate", tuple(False for _ in self.levels))

    @property
    def counts(self) -> list[int]:
        return [x.shape[0] for x in self.xbar]

    def flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(level_index, gamma, xbar, p)`` stacked over all characteristics."""
        idx = np.concatenate([np.full(x.shape[0], k) for k, x in enumerate(self.xbar)])
        return idx, self.levels[idx], np.vstack(self.xbar), np.vstack(self.p)


def build_level_data(g: ConvexCost, levels: Sequence[float], counts: Sequence[int], seed: int = 0) -> LevelData:
    """Terminal points and subgradients on each cost level.

    On a degenerate (single point) level every one of the ``n_k`` slots keeps
    the same point but a different subgradient: the origin of the
    subdifferential first, then spread-out boundary elements.
    """
    levels = [float(v) for v in levels]
    if len(levels) != len(counts):
        raise ValueError("levels and counts must have equal length")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly ascending")
    xs, ps, degen = [], [], []
    for k, (gamma, nk) in enumerate(zip(levels, counts)):
        if is_min_level(g, gamma):
            x0, _ = g.minimizer()
            xs.append(np.tile(x0, (nk, 1)))
            ps.append(g.kink_subgradients(x0, nk))
            degen.append(True)
        else:
            pts = sample_level_set(g, gamma, nk, seed + k)
            xs.append(pts)
            ps.append(np.array([g.subgradient(x, seed + k) for x in pts]))
            degen.append(False)
    return LevelData(np.array(levels), tuple(xs), tuple(ps), tuple(degen))


def terminal_upper(ld: LevelData, L_g: float, x) -> float:
    """``min_k L_g * dist(x, conv(xbar_k)) + gamma_k``."""
    x = np.asarray(x, dtype=float)
    eye = np.eye(x.size)
    best = np.inf
    for gamma, pts in zip(ld.levels, ld.xbar):
        if gamma >= best:
            continue
        sol = qp_simplex(VertexHull.build(pts), eye, x)
        best = min(best, L_g * sol.distance + gamma)
    return float(best)


def terminal_lower(ld: LevelData, x) -> float:
    """``max_{k,i} <p_ik, x - xbar_ik> + gamma_k``."""
    _, gam, X, P = ld.flat()
    x = np.asarray(x, dtype=float)
    return float(np.max(P @ x - np.einsum("ij,ij->i", P, X) + gam))
