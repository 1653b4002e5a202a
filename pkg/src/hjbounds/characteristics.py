"""Backward integration of characteristics, costates and hyperplane offsets.

For each terminal tuple ``(xbar, p, gamma)`` we integrate from ``T`` down to
``t0``::

    xi'  = A(s) xi + w*(s),   w*(s) maximises <-lambda(s), w> over W(s)
    lam' = -A(s)^T lam
    q'   = h_{B(s)U}(-lam) - h_{E(s)D}(lam)

together with the state-transition matrix ``Phi(T, s)``, ``Phi' = -Phi A``.

The default ``scheme="frame"`` carries ``z = Phi(T, s) xi`` instead of
``xi`` (``z' = Phi(T, s) w*``) and recovers ``xi = Phi^{-1} z`` at the
nodes.  All quantities share one set of RK4 stages, so every stored
characteristic is the exact optimiser of a common discrete reachable
zonotope.  That keeps ``<lam, xi> + q = gamma`` and the bound tightness
identities at rounding level even when ``w*`` switches inside a step.
``scheme="direct"`` applies RK4 to ``xi`` itself; it is kept for comparison.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .cost import ConvexCost, LevelData, build_level_data
from .ltv_model import (
    AlignmentError,
    LtvSystem,
    check_assumptions,
    eval_matrices,
    mapped_control_sets,
    support_argmax,
    trimmed_set,
    zonotope_support,
)


class NonFiniteState(ArithmeticError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Descending nodes ``T, T - h, ..., t0``; the last gap may be short."""

    t0: float
    T: float
    h: float

    def __post_init__(self):
        if not (self.T > self.t0):
            raise ValueError("grid needs T > t0")
        if not (self.h > 0):
            raise ValueError("grid step must be positive")

    @property
    def nodes(self) -> np.ndarray:
        span = self.T - self.t0
        full = int(math.floor(span / self.h * (1 + 1e-12)))
        nodes = [self.T - j * self.h for j in range(full + 1)]
        if nodes[-1] - self.t0 > 1e-12 * max(1.0, abs(self.T)):
            nodes.append(self.t0)
        else:
            nodes[-1] = self.t0
        return np.array(nodes)

    def locate(self, t: float) -> tuple[int, bool]:
        """Index of the node at or below ``t`` and whether ``t`` had to be snapped."""
        nodes = self.nodes
        if t > self.T + 1e-12 or t < self.t0 - 1e-12:
            raise ValueError(f"t={t} outside [{self.t0}, {self.T}]")
        close = np.flatnonzero(np.abs(nodes - t) <= 1e-12 * max(1.0, abs(self.T)))
        if close.size:
            return int(close[0]), False
        below = np.flatnonzero(nodes <= t)
        return int(below[0]), True


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], s: float, y: np.ndarray, h: float) -> np.ndarray:
    """Classic four-stage Runge-Kutta step from ``s`` to ``s + h`` (``h`` may be negative)."""
    k1 = f(s, y)
    k2 = f(s + h / 2, y + h / 2 * k1)
    k3 = f(s + h / 2, y + h / 2 * k2)
    k4 = f(s + h, y + h * k3)
    out = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"non-finite state after RK4 step at s={s!r}")
    return out


@dataclass(frozen=True, eq=False)
class CharacteristicBundle:
    """Precomputed data for evaluating both bounds at the grid nodes.

    Arrays are indexed ``[tuple, node, ...]`` with nodes in descending time.
    """

    grid: TimeGrid
    levels: np.ndarray  # (N,) ascending gamma_k
    level_index: np.ndarray  # (K,) level of each tuple
    xbar: np.ndarray  # (K, n)
    p: np.ndarray  # (K, n)
    xi: np.ndarray  # (K, M, n)
    lam: np.ndarray  # (K, M, n)
    q: np.ndarray  # (K, M)
    phi: np.ndarray  # (M, n, n)  Phi(T, node)
    L_g: float
    degenerate: tuple = ()
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.xbar.shape[1]

    @property
    def count(self) -> int:
        return self.xbar.shape[0]

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def gammas(self) -> np.ndarray:
        return self.levels[self.level_index]

    def level_members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.level_index == k)

    def level_data(self) -> LevelData:
        xs = tuple(self.xbar[self.level_members(k)] for k in range(self.levels.size))
        ps = tuple(self.p[self.level_members(k)] for k in range(self.levels.size))
        return LevelData(self.levels, xs, ps, self.degenerate)


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def precompute(
    sys: LtvSystem,
    cost: ConvexCost,
    levels: Sequence[float],
    counts: Sequence[int],
    grid: TimeGrid,
    seed: int = 0,
    *,
    scheme: str = "frame",
    level_data: LevelData | None = None,
    metadata: dict | None = None,
) -> CharacteristicBundle:
    """Integrate every characteristic tuple backward over ``grid``."""
    if cost.dim != sys.n:
        raise ValueError(f"cost dimension {cost.dim} != state dimension {sys.n}")
    if grid.t0 < sys.t0 - 1e-12 or grid.T > sys.T + 1e-12:
        raise ValueError("time grid must lie within the system horizon")
    if scheme not in ("frame", "direct"):
        raise ValueError(f"unknown scheme {scheme!r}")
    nodes = grid.nodes
    report = check_assumptions(sys, nodes)
    if not report.passed:
        bad = report.failures()[0]
        raise AlignmentError(f"alignment fails at t={bad.t!r}: {bad.message or bad.kappas}")

    ld = level_data if level_data is not None else build_level_data(cost, levels, counts, seed)
    level_index, gam, xbar, P = ld.flat()
    K, n = xbar.shape
    M = nodes.size

    def unpack(y):
        o = 0
        Phi = y[o : o + n * n].reshape(n, n)
        o += n * n
        Lam = y[o : o + K * n].reshape(K, n)
        o += K * n
        X = y[o : o + K * n].reshape(K, n)
        o += K * n
        return Phi, Lam, X, y[o:]

    def rhs(s, y):
        Phi, Lam, X, _ = unpack(y)
        A, _, _ = eval_matrices(sys, s)
        W = trimmed_set(sys, s)
        BU, negED = mapped_control_sets(sys, s)
        Om = support_argmax(W, -Lam)
        dPhi = -Phi @ A
        dLam = -Lam @ A
        if scheme == "frame":
            dX = Om @ Phi.T
        else:
            dX = X @ A.T + Om
        # h_{ED}(lam) = h_{-ED}(-lam)
        dQ = zonotope_support(BU, -Lam) - zonotope_support(negED, -Lam)
        return np.concatenate([dPhi.ravel(), dLam.ravel(), dX.ravel(), dQ])

    phi = np.empty((M, n, n))
    lam = np.empty((K, M, n))
    xi = np.empty((K, M, n))
    q = np.empty((K, M))

    q_T = -np.einsum("ij,ij->i", P, xbar) + gam
    y = np.concatenate([np.eye(n).ravel(), P.ravel(), xbar.ravel(), q_T])

    for j in range(M):
        if j > 0:
            h = nodes[j] - nodes[j - 1]
            y = rk4_step(rhs, nodes[j - 1], y, h)
        Phi, Lam, X, Q = unpack(y)
        bad = ~np.isfinite(X).all(axis=1) | ~np.isfinite(Lam).all(axis=1) | ~np.isfinite(Q)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NonFiniteState(f"tuple (k={int(level_index[i])}, i={i}) non-finite at node {j} (t={nodes[j]!r})")
        phi[j] = Phi
        lam[:, j] = Lam
        q[:, j] = Q
        xi[:, j] = np.linalg.solve(Phi, X.T).T if scheme == "frame" else X

    meta = {"seed": int(seed), "scheme": scheme}
    if metadata:
        meta.update(metadata)
    return CharacteristicBundle(
        grid=grid,
        levels=np.asarray(ld.levels, dtype=float),
        level_index=level_index.astype(np.int64),
        xbar=xbar,
        p=P,
        xi=xi,
        lam=lam,
        q=q,
        phi=phi,
        L_g=float(cost.lipschitz),
        degenerate=tuple(bool(d) for d in ld.degenerate),
        metadata=meta,
    )


# --- persistence ----------------------------------------------------------------
#
# Layout (all integers little-endian):
#   magic    8 bytes  b"HJBBNDL\0"
#   version  u32
#   hlen     u64      length of the JSON header in bytes
#   header   hlen     UTF-8 JSON, sorted keys: dims, grid, L_g, degenerate,
#                     metadata and the ordered array table [name, dtype, shape]
#   arrays            raw little-endian data, C order, in table order
#   digest   32 bytes SHA-256 of every preceding byte

BUNDLE_MAGIC = b"HJBBNDL\0"
BUNDLE_VERSION = 1
_ARRAYS = (
    ("levels", "<f8"),
    ("level_index", "<i8"),
    ("xbar", "<f8"),
    ("p", "<f8"),
    ("xi", "<f8"),
    ("lam", "<f8"),
    ("q", "<f8"),
    ("phi", "<f8"),
)


class BundleFormatError(ValueError):
    """Unreadable bundle file: bad magic, truncated, or failed checksum."""


class BundleVersionError(BundleFormatError):
    pass


def _header(bundle: CharacteristicBundle) -> dict:
    return {
        "dims": {"n": bundle.n, "tuples": bundle.count, "nodes": int(bundle.nodes.size), "levels": int(bundle.levels.size)},
        "grid": {"t0": bundle.grid.t0, "T": bundle.grid.T, "h": bundle.grid.h},
        "L_g": bundle.L_g,
        "degenerate": list(bundle.degenerate),
        "metadata": bundle.metadata,
        "arrays": [[name, dt, list(getattr(bundle, name).shape)] for name, dt in _ARRAYS],
    }


def bundle_bytes(bundle: CharacteristicBundle) -> bytes:
    head = json.dumps(_header(bundle), sort_keys=True, separators=(",", ":")).encode()
    parts = [BUNDLE_MAGIC, struct.pack("<IQ", BUNDLE_VERSION, len(head)), head]
    for name, dt in _ARRAYS:
        parts.append(np.ascontiguousarray(getattr(bundle, name), dtype=dt).tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_bundle(bundle: CharacteristicBundle, path) -> int:
    """Write ``bundle`` to ``path``; returns the number of bytes written."""
    data = bundle_bytes(bundle)
    Path(path).write_bytes(data)
    return len(data)


def load_bundle(path) -> CharacteristicBundle:
    data = Path(path).read_bytes()
    fixed = len(BUNDLE_MAGIC) + 12
    if len(data) < fixed + 32 or data[: len(BUNDLE_MAGIC)] != BUNDLE_MAGIC:
        raise BundleFormatError(f"{path}: not a bundle file")
    version, hlen = struct.unpack("<IQ", data[len(BUNDLE_MAGIC) : fixed])
    if version != BUNDLE_VERSION:
        raise BundleVersionError(f"{path}: bundle version {version}, reader supports {BUNDLE_VERSION}")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise BundleFormatError(f"{path}: checksum mismatch (truncated or corrupt)")
    head = json.loads(body[fixed : fixed + hlen])
    off = fixed + hlen
    arrays = {}
    for name, dt, shape in head["arrays"]:
        count = int(np.prod(shape, dtype=np.int64))
        a = np.frombuffer(body, dtype=dt, count=count, offset=off).reshape(shape).copy()
        off += a.nbytes
        arrays[name] = a.astype(np.int64 if dt == "<i8" else float)
    if off != len(body):
        raise BundleFormatError(f"{path}: trailing bytes after array data")
    g = head["grid"]
    return CharacteristicBundle(
        grid=TimeGrid(g["t0"], g["T"], g["h"]),
        L_g=head["L_g"],
        degenerate=tuple(head["degenerate"]),
        metadata=head["metadata"],
        **arrays,
    )


def bundle_to_json(bundle: CharacteristicBundle) -> str:
    """Debug export; ``repr`` floats are shortest round-trip decimals, so nothing is lost."""
    doc = _header(bundle)
    for name, _ in _ARRAYS:
        doc[name] = getattr(bundle, name).tolist()
    return json.dumps(doc, sort_keys=True)


def bundle_from_json(text: str) -> CharacteristicBundle:
    doc = json.loads(text)
    g = doc["grid"]
    arrays = {name: np.asarray(doc[name], dtype=np.int64 if dt == "<i8" else float) for name, dt in _ARRAYS}
    return CharacteristicBundle(
        grid=TimeGrid(g["t0"], g["T"], g["h"]),
        L_g=doc["L_g"],
        degenerate=tuple(doc["degenerate"]),
        metadata=doc["metadata"],
        **arrays,
    )
