"""Run configuration: one JSON document describing system, cost, levels and grid."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .characteristics import TimeGrid
from .cost import ConvexCost, cost_from_dict
from .exprs import ExprSyntaxError
from .ltv_model import LtvSystem, Zonotope


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _zonotope_from_dict(spec, name: str) -> Zonotope:
    if not isinstance(spec, dict):
        raise ConfigError(f"{name}: expected an object")
    if "box" in spec:
        _only(spec, {"box"}, name)
        lo, hi = spec["box"]
        return Zonotope.box(lo, hi)
    _only(spec, {"center", "generators"}, name)
    return Zonotope(np.asarray(spec["center"], dtype=float), np.asarray(spec["generators"], dtype=float))


def _only(spec: dict, allowed: set, name: str):
    extra = set(spec) - allowed
    if extra:
        raise ConfigError(f"{name}: unknown field(s) {sorted(extra)}")


@dataclass
class SystemConfig:
    A: list
    B: list
    E: list
    U: dict
    D: dict
    t0: float
    T: float

    def build(self) -> LtvSystem:
        try:
            return LtvSystem.from_strings(
                self.A,
                self.B,
                self.E,
                _zonotope_from_dict(self.U, "system.U"),
                _zonotope_from_dict(self.D, "system.D"),
                self.t0,
                self.T,
            )
        except ExprSyntaxError as exc:
            raise ConfigError(f"system: {exc}") from exc
        except (ValueError, TypeError, IndexError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"system: {exc}") from exc


@dataclass
class GridConfig:
    t0: float
    T: float
    step: float

    def build(self) -> TimeGrid:
        return TimeGrid(float(self.t0), float(self.T), float(self.step))


@dataclass
class OracleConfig:
    axes: list = field(default_factory=list)  # [[min, max, count], ...]
    cfl: float = 0.5
    riemann_steps: int = 200


@dataclass
class RunConfig:
    system: SystemConfig
    cost: dict
    levels: list
    counts: list
    grid: GridConfig
    seed: int = 0
    scheme: str = "frame"
    outputs: dict = field(default_factory=dict)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    name: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        s, g = self.system, self.grid
        for key in ("t0", "T"):
            v = getattr(s, key)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"system.{key} must be a finite number")
        if not s.T > s.t0:
            raise ConfigError(f"horizon must satisfy T > t0, got t0={s.t0}, T={s.T}")
        if not g.step > 0:
            raise ConfigError("grid.step must be positive")
        if not g.T > g.t0:
            raise ConfigError("grid must satisfy T > t0")
        if g.t0 < s.t0 or g.T > s.T:
            raise ConfigError("time grid must lie within the system horizon")
        if len(self.levels) != len(self.counts) or not self.levels:
            raise ConfigError("levels and counts must be non-empty and of equal length")
        if any(int(c) != c or c < 1 for c in self.counts):
            raise ConfigError("counts must be positive integers")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError("levels must be strictly ascending")
        if self.scheme not in ("frame", "direct"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        sys = self.build_system()
        cost = self.build_cost()
        if cost.dim != sys.n:
            raise ConfigError(f"cost dimension {cost.dim} != state dimension {sys.n}")
        _, gmin = cost.minimizer()
        if gmin is not None and np.isfinite(gmin) and self.levels[0] < gmin - 1e-12:
            raise ConfigError(f"level {self.levels[0]} below the cost minimum {gmin}")

    def build_system(self) -> LtvSystem:
        return self.system.build()

    def build_cost(self) -> ConvexCost:
        try:
            return cost_from_dict(self.cost)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"cost: {exc}") from exc

    def build_grid(self) -> TimeGrid:
        return self.grid.build()

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        top = {"system", "cost", "levels", "counts", "grid", "seed", "scheme", "outputs", "oracle", "name"}
        _only(d, top, "config")
        for key in ("system", "cost", "levels", "counts", "grid"):
            if key not in d:
                raise ConfigError(f"config: missing field {key!r}")
        sysd = d["system"]
        _only(sysd, {"A", "B", "E", "U", "D", "t0", "T"}, "system")
        gridd = d["grid"]
        _only(gridd, {"t0", "T", "step"}, "grid")
        orad = d.get("oracle", {})
        _only(orad, {"axes", "cfl", "riemann_steps"}, "oracle")
        try:
            return cls(
                system=SystemConfig(**sysd),
                cost=dict(d["cost"]),
                levels=[float(v) for v in d["levels"]],
                counts=[int(v) for v in d["counts"]],
                grid=GridConfig(**gridd),
                seed=int(d.get("seed", 0)),
                scheme=str(d.get("scheme", "frame")),
                outputs=dict(d.get("outputs", {})),
                oracle=OracleConfig(**orad),
                name=str(d.get("name", "")),
            )
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)


def paper_example_6() -> dict:
    """Three-state LTV game with a time-varying spring and disturbance gain."""
    kd = "0.5+0.5*sin(pi/2*t)"
    return {
        "name": "paper-example-6",
        "system": {
            "A": [["0", "1", "0"], ["-(4+2*cos(2*t))", "0", "1"], ["0", "0", "0"]],
            "B": [["0", "0"], ["1", "0"], ["0", "1"]],
            "E": [["0"], [kd], ["0"]],
            "U": {"box": [[-1.0, -1.0], [1.0, 1.0]]},
            "D": {"box": [[-1.0], [1.0]]},
            "t0": 0.0,
            "T": 1.5,
        },
        "cost": {"type": "euclidean_norm", "center": [0.0, 0.0, 0.0]},
        "levels": [0.0, 0.3, 0.6, 0.9, 1.2],
        "counts": [85, 84, 84, 84, 84],
        "grid": {"t0": 0.0, "T": 1.5, "step": 0.0083},
        "seed": 0,
        "scheme": "frame",
        "outputs": {},
        "oracle": {"axes": [[-1.0, 1.0, 61]] * 3, "cfl": 0.5, "riemann_steps": 300},
    }


def double_integrator() -> dict:
    """Two-state double integrator used for grid-oracle comparisons."""
    return {
        "name": "double-integrator",
        "system": {
            "A": [["0", "1"], ["0", "0"]],
            "B": [["0"], ["1"]],
            "E": [["0"], ["0.5"]],
            "U": {"box": [[-1.0], [1.0]]},
            "D": {"box": [[-1.0], [1.0]]},
            "t0": 0.0,
            "T": 1.0,
        },
        "cost": {"type": "euclidean_norm", "center": [0.0, 0.0]},
        "levels": [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5],
        "counts": [33, 64, 64, 64, 64, 64, 64, 64, 64],
        "grid": {"t0": 0.0, "T": 1.0, "step": 0.005},
        "seed": 0,
        "scheme": "frame",
        "outputs": {},
        "oracle": {"axes": [[-2.0, 2.0, 201]] * 2, "cfl": 0.5, "riemann_steps": 400},
    }


PRESETS = {"paper-example-6": paper_example_6, "double-integrator": double_integrator}


def preset(name: str) -> RunConfig:
    try:
        return RunConfig.from_dict(PRESETS[name]())
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
