"""Certified reach/avoid labels from the value bounds.

A point is ``REACH_INNER`` when ``upper <= gamma`` (player I can force the
terminal cost to at most ``gamma``) and ``AVOID_INNER`` when
``lower > gamma`` (player II can keep it above ``gamma``).
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass

import numpy as np

from .bounds import BoundEvaluator, BoundInterval, grid_eval, grid_points
from .characteristics import CharacteristicBundle


class ReachLabel(enum.IntEnum):
    REACH_INNER = 1
    AVOID_INNER = -1
    UNKNOWN = 0


def label_interval(iv: BoundInterval, gamma: float) -> ReachLabel:
    if iv.upper <= gamma:
        return ReachLabel.REACH_INNER
    # strict: a tie on the lower bound decides nothing
    if iv.lower > gamma:
        return ReachLabel.AVOID_INNER
    return ReachLabel.UNKNOWN


def classify(bundle: CharacteristicBundle, t: float, x, gamma: float, evaluator: BoundEvaluator | None = None) -> ReachLabel:
    if not np.isfinite(gamma):
        raise ValueError("gamma must be finite")
    ev = evaluator or BoundEvaluator(bundle)
    return label_interval(ev.interval(t, x), gamma)


@dataclass
class LabelGrid:
    points: np.ndarray
    labels: np.ndarray  # int8 codes
    gamma: float
    t: float
    failed: int = 0

    @property
    def counts(self) -> dict[str, int]:
        return {lab.name: int(np.sum(self.labels == lab.value)) for lab in ReachLabel}

    @property
    def fractions(self) -> dict[str, float]:
        total = max(1, self.labels.size)
        return {k: v / total for k, v in self.counts.items()}

    def summary(self) -> str:
        c, f = self.counts, self.fractions
        parts = [f"{name}={c[name]} ({f[name]:.4f})" for name in ("REACH_INNER", "AVOID_INNER", "UNKNOWN")]
        return f"gamma={self.gamma!r} t={self.t!r} points={self.labels.size} " + " ".join(parts) + f" failed={self.failed}"

    def to_csv(self) -> str:
        n = self.points.shape[1]
        buf = io.StringIO(newline="")
        buf.write(",".join([f"x{i + 1}" for i in range(n)] + ["label"]) + "\n")
        for x, lab in zip(self.points, self.labels):
            buf.write(",".join([repr(float(v)) for v in x] + [str(int(lab))]) + "\n")
        return buf.getvalue()


def classify_grid(
    bundle: CharacteristicBundle,
    t: float,
    spec,
    gamma: float,
    threads: int = 1,
    evaluator: BoundEvaluator | None = None,
) -> LabelGrid:
    """Label every grid point; points whose bounds failed are labelled ``UNKNOWN`` and counted."""
    if not np.isfinite(gamma):
        raise ValueError("gamma must be finite")
    pts = grid_points(spec)
    ivs = grid_eval(bundle, t, pts, threads=threads, evaluator=evaluator)
    labels = np.zeros(len(ivs), dtype=np.int8)
    failed = 0
    for i, iv in enumerate(ivs):
        if "error" in iv.diagnostics:
            failed += 1
            continue
        labels[i] = label_interval(iv, gamma).value
    return LabelGrid(pts, labels, float(gamma), float(t), failed)
