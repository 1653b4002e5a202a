"""Independent reference values for small instances.

``lf_solve`` marches the terminal-value HJ equation on a dense grid with a
first-order Lax-Friedrichs scheme.  ``trimmed_reach_oracle`` minimises the
cost over the reachable zonotope of the trimmed one-player system.  Neither
uses the characteristic machinery, so both can check the bounds.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import linprog

from .cost import ConvexCost, EuclideanNorm, PolyhedralMax, WeightedNorm
from .geometry import min_norm_point
from .ltv_model import LtvSystem, Zonotope, eval_matrices, mapped_control_sets, support_argmax, trimmed_set

MAX_GRID_NODES = 20_000_000


class GridTooLarge(MemoryError):
    pass


@dataclass
class ValueGrid:
    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    t: float
    meta: dict = field(default_factory=dict)

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def interpolate(self, x) -> np.ndarray:
        f = RegularGridInterpolator(self.axes, self.values, method="linear")
        return f(np.atleast_2d(x))

    def to_csv(self) -> str:
        """Same column layout as a bound table, with the value in both bound columns."""
        pts = self.points
        vals = self.values.ravel()
        buf = io.StringIO(newline="")
        buf.write(",".join([f"x{i + 1}" for i in range(pts.shape[1])] + ["lower", "upper", "k_upper", "argmax_lower"]) + "\n")
        for x, v in zip(pts, vals):
            buf.write(",".join([repr(float(c)) for c in x] + [repr(float(v)), repr(float(v)), "-1", "-1"]) + "\n")
        return buf.getvalue()


def _axes(spec) -> tuple[np.ndarray, ...]:
    out = []
    for a in spec:
        if isinstance(a, np.ndarray):
            out.append(a.astype(float))
        else:
            lo, hi, cnt = a
            out.append(np.linspace(float(lo), float(hi), int(cnt)))
    for a in out:
        if a.size < 3:
            raise ValueError("each axis needs at least 3 nodes")
        d = np.diff(a)
        if np.any(d <= 0) or np.ptp(d) > 1e-9 * d.mean():
            raise ValueError("axes must be uniform and increasing")
    return tuple(out)


def _grad_stencils(V: np.ndarray, steps) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """One-sided differences with linearly extrapolated ghost nodes."""
    minus, plus = [], []
    for ax, h in enumerate(steps):
        d = np.diff(V, axis=ax) / h
        first = np.take(d, [0], axis=ax)
        last = np.take(d, [-1], axis=ax)
        minus.append(np.concatenate([first, d], axis=ax))
        plus.append(np.concatenate([d, last], axis=ax))
    return minus, plus


def _hamiltonian_grid(A, BU: Zonotope, negED: Zonotope, X: np.ndarray, P: np.ndarray) -> np.ndarray:
    # <-p, A x> + h_{BU}(-p) - h_{ED}(p), with h_{ED}(p) = h_{-ED}(-p)
    Ax = X @ A.T
    q = -P
    hbu = q @ BU.center + np.abs(q @ BU.generators.T).sum(axis=-1)
    hed = q @ negED.center + np.abs(q @ negED.generators.T).sum(axis=-1)
    return np.einsum("...i,...i->...", q, Ax) + hbu - hed


def lf_solve(
    sys: LtvSystem,
    cost: ConvexCost,
    axes,
    t_target: float,
    cfl: float = 0.5,
    dissipation: str = "local",
    pad: int = 0,
) -> ValueGrid:
    """Lax-Friedrichs solution of ``V_t = H(t, x, grad V)``, ``V(T) = g``, sampled at ``t_target``.

    ``dissipation="global"`` uses one coefficient per axis, the bound on
    ``|dH/dp_i|`` over the whole box; ``"local"`` uses the same bound
    evaluated at each node (the step still obeys the global CFL limit, so
    the scheme stays monotone).  ``pad`` extra nodes per side move the
    extrapolated boundary away from the reported grid.
    """
    ax = _axes(axes)
    n = len(ax)
    if n != sys.n:
        raise ValueError(f"{n} axes for a {sys.n}-state system")
    if n > 3:
        raise ValueError("dense grids are limited to n <= 3")
    if dissipation not in ("global", "local"):
        raise ValueError(f"unknown dissipation {dissipation!r}")
    if pad < 0:
        raise ValueError("pad must be >= 0")
    steps = [float(a[1] - a[0]) for a in ax]
    work = tuple(np.concatenate([a[0] - h * np.arange(pad, 0, -1), a, a[-1] + h * np.arange(1, pad + 1)]) for a, h in zip(ax, steps))
    size = math.prod(a.size for a in work)
    if size > MAX_GRID_NODES:
        raise GridTooLarge(f"{size} nodes exceed the budget of {MAX_GRID_NODES}")
    if not (sys.t0 - 1e-12 <= t_target <= sys.T + 1e-12):
        raise ValueError("t_target outside the horizon")
    if not 0 < cfl <= 1:
        raise ValueError("cfl must lie in (0, 1]")

    mesh = np.meshgrid(*work, indexing="ij")
    X = np.stack(mesh, axis=-1)
    V = np.asarray(cost.value(X.reshape(-1, n)), dtype=float).reshape(X.shape[:-1])
    box = np.array([np.max(np.abs([a[0], a[-1]])) for a in work])
    inv_h = 1.0 / np.array(steps)

    def reach(Z):
        return np.abs(Z.center) + np.abs(Z.generators).sum(axis=0)

    s, nsteps, cfl_used = float(sys.T), 0, []
    while s > t_target + 1e-12:
        A, _, _ = eval_matrices(sys, s)
        BU, negED = mapped_control_sets(sys, s)
        ctrl = reach(BU) + reach(negED)
        # |dH/dp_i| <= |(A x)_i| + max |BU_i| + max |ED_i|
        alpha_max = np.abs(A) @ box + ctrl
        rate = float(alpha_max @ inv_h)
        dt = cfl / rate if rate > 0 else s - t_target
        dt = min(dt, s - t_target)
        if dissipation == "global":
            alpha = [alpha_max[i] for i in range(n)]
        else:
            local = np.abs(X) @ np.abs(A).T + ctrl
            alpha = [local[..., i] for i in range(n)]
        pm, pp = _grad_stencils(V, steps)
        P = np.stack([(a + b) / 2 for a, b in zip(pm, pp)], axis=-1)
        Hn = _hamiltonian_grid(A, BU, negED, X, P)
        diss = sum(alpha[i] * (pp[i] - pm[i]) / 2 for i in range(n))
        # backward in time: V(s - dt) = V(s) - dt * (H - dissipation)
        V = V - dt * (Hn - diss)
        if not np.all(np.isfinite(V)):
            raise ArithmeticError(f"non-finite values at s={s - dt!r}")
        cfl_used.append(dt * rate)
        s -= dt
        nsteps += 1
    if pad:
        V = V[(slice(pad, -pad),) * n]
    meta = {
        "steps": nsteps,
        "spacing": steps,
        "cfl": cfl,
        "max_cfl": max(cfl_used, default=0.0),
        "dissipation": dissipation,
        "pad": pad,
    }
    return ValueGrid(ax, V, float(t_target), meta)


def richardson_estimate(fine: ValueGrid, coarse: ValueGrid, order: float = 1.0) -> np.ndarray:
    """Per-node error estimate ``|V_h - V_2h| / (2^order - 1)`` on the fine nodes."""
    diff = np.abs(fine.values - coarse.interpolate(fine.points).reshape(fine.values.shape))
    return diff / (2.0**order - 1.0)


def observed_order(fine: ValueGrid, mid: ValueGrid, coarse: ValueGrid, lo: float = 0.25, hi: float = 1.0) -> float:
    """Convergence order from three nested grids in the max norm, clipped to ``[lo, hi]``.

    Kinks of the value function pull a first-order scheme below order one
    locally; the max norm sees the worst region, which keeps the estimate
    conservative.
    """
    sl = tuple(slice(None, None, 2) for _ in fine.axes)
    d1 = np.max(np.abs(fine.values[sl] - mid.values))
    d2 = np.max(np.abs(mid.values[sl] - coarse.values))
    if d1 <= 0 or d2 <= 0:
        return hi
    return float(np.clip(math.log2(d2 / d1), lo, hi))


@dataclass
class LfEstimate:
    grid: ValueGrid
    eps: np.ndarray  # per-node error estimate on ``grid``
    order: float


def lf_with_estimate(
    sys: LtvSystem,
    cost: ConvexCost,
    axes,
    t_target: float,
    cfl: float = 0.5,
    dissipation: str = "local",
    pad_fraction: float = 0.5,
) -> LfEstimate:
    """Solve on ``axes`` and on two nested coarsenings; Richardson error per fine node.

    Every grid is padded by ``pad_fraction`` of each axis span so the
    extrapolated boundary, which all grids share, stays out of the estimate.
    """
    fine_axes = _axes(axes)
    for a in fine_axes:
        if (a.size - 1) % 4:
            raise ValueError("Richardson nesting needs node counts of the form 4m + 1")
    pad_width = pad_fraction * max(float(a[-1] - a[0]) for a in fine_axes)
    grids = []
    for level in range(3):
        ax = tuple(a[:: 2**level] for a in fine_axes)
        h = min(float(a[1] - a[0]) for a in ax)
        grids.append(lf_solve(sys, cost, ax, t_target, cfl, dissipation, pad=int(math.ceil(pad_width / h - 1e-9))))
    p = observed_order(*grids)
    return LfEstimate(grids[0], richardson_estimate(grids[0], grids[1], p), p)


# --- reachable-set oracle ---------------------------------------------------------


@dataclass
class OracleResult:
    value: float
    lower: float  # certified lower bound on the discrete problem
    converged: bool
    iterations: int


def transition_matrix(sys: LtvSystem, s: np.ndarray, rtol: float = 1e-11) -> np.ndarray:
    """``Phi(T, s)`` at the requested times from an adaptive integrator."""
    n = sys.n
    s = np.atleast_1d(np.asarray(s, dtype=float))

    def f(tau, y):
        A, _, _ = eval_matrices(sys, float(tau))
        return (-y.reshape(n, n) @ A).ravel()

    lo = float(min(s.min(), sys.T))
    if lo >= sys.T:
        return np.tile(np.eye(n), (s.size, 1, 1))
    sol = solve_ivp(f, (sys.T, lo), np.eye(n).ravel(), method="DOP853", rtol=rtol, atol=rtol * 1e-2, dense_output=True)
    return np.array([sol.sol(v).reshape(n, n) if v < sys.T else np.eye(n) for v in s])


def reachable_zonotope(sys: LtvSystem, t: float, x, steps: int) -> Zonotope:
    """``Phi(T,t) x + sum_j Phi(T, s_j) W(s_j) ds`` with left endpoints ``s_j``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ds = (sys.T - t) / steps
    sj = t + ds * np.arange(steps)
    phis = transition_matrix(sys, np.concatenate([[t], sj]))
    c = phis[0] @ np.asarray(x, dtype=float)
    gens = []
    for Phi, s in zip(phis[1:], sj):
        W = trimmed_set(sys, float(s))
        c = c + ds * (Phi @ W.center)
        if W.generators.size:
            gens.append(ds * W.generators @ Phi.T)
    G = np.vstack(gens) if gens else np.zeros((0, sys.n))
    return Zonotope(c, G)


def minimize_over_zonotope(cost: ConvexCost, Z: Zonotope, tol: float = 1e-12) -> OracleResult:
    """``min_{z in Z} g(z)`` for the supported cost families."""
    if isinstance(cost, (EuclideanNorm, WeightedNorm)):
        P = np.eye(cost.dim) if isinstance(cost, EuclideanNorm) else cost.P
        # image of Z - center under P is again a zonotope
        Y = Zonotope(P @ (Z.center - cost.center), Z.generators @ P.T)

        def lmo(d):
            return support_argmax(Y, -d)

        z, _, _, it, ok, gap = min_norm_point(lmo=lmo, start=Y.center, tol=tol)
        val = float(np.linalg.norm(z))
        if val > 0:
            u = z / val
            lower = max(0.0, float(-(-u @ Y.center + np.abs(-u @ Y.generators.T).sum())))
        else:
            lower = 0.0
        return OracleResult(val, min(lower, val), ok, it)
    if isinstance(cost, PolyhedralMax):
        k = Z.generators.shape[0]
        # min tau  s.t.  a_i (c + G theta) + b_i <= tau,  |theta| <= 1
        AG = cost.a @ Z.generators.T
        res = linprog(
            np.r_[np.zeros(k), 1.0],
            A_ub=np.hstack([AG, -np.ones((cost.a.shape[0], 1))]),
            b_ub=-(cost.a @ Z.center + cost.b),
            bounds=[(-1.0, 1.0)] * k + [(None, None)],
            method="highs",
        )
        if res.status != 0:
            return OracleResult(-np.inf, -np.inf, False, int(res.nit))
        return OracleResult(float(res.fun), float(res.fun), True, int(res.nit))
    raise TypeError(f"unsupported cost {type(cost).__name__}")


def trimmed_reach_oracle(sys: LtvSystem, cost: ConvexCost, t: float, x, steps: int = 200, tol: float = 1e-12) -> OracleResult:
    """Optimal terminal cost of the trimmed one-player system from ``(t, x)``."""
    Z = reachable_zonotope(sys, t, x, steps)
    return minimize_over_zonotope(cost, Z, tol)


def riemann_estimate(sys: LtvSystem, cost: ConvexCost, t: float, x, steps: int = 200) -> tuple[float, float]:
    """Extrapolated oracle value and an error bar from ``steps`` and ``2 * steps``.

    The left-endpoint sum converges at first order, so ``2 b - a`` removes the
    leading error term; ``|b - a|`` bounds what is left.
    """
    a = trimmed_reach_oracle(sys, cost, t, x, steps).value
    b = trimmed_reach_oracle(sys, cost, t, x, 2 * steps).value
    return 2 * b - a, abs(b - a)
