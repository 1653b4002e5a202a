"""Certified upper and lower bounds on value functions of LTV differential games."""

from .bounds import BoundEvaluator, BoundInterval, SandwichViolation, bound_interval, grid_eval, lower_bound, upper_bound
from .characteristics import CharacteristicBundle, TimeGrid, load_bundle, precompute, save_bundle
from .config import RunConfig, preset
from .cost import EuclideanNorm, PolyhedralMax, WeightedNorm
from .ltv_model import LtvSystem, Zonotope
from .reachability import ReachLabel, classify, classify_grid

__all__ = [
    "BoundEvaluator",
    "BoundInterval",
    "CharacteristicBundle",
    "EuclideanNorm",
    "LtvSystem",
    "PolyhedralMax",
    "ReachLabel",
    "RunConfig",
    "SandwichViolation",
    "TimeGrid",
    "WeightedNorm",
    "Zonotope",
    "bound_interval",
    "classify",
    "classify_grid",
    "grid_eval",
    "load_bundle",
    "lower_bound",
    "precompute",
    "preset",
    "save_bundle",
    "upper_bound",
]
