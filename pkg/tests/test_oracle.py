import numpy as np
import pytest

from hjbounds.cost import EuclideanNorm, PolyhedralMax, WeightedNorm
from hjbounds.ltv_model import LtvSystem, Zonotope
from hjbounds.oracle import (
    GridTooLarge,
    lf_solve,
    lf_with_estimate,
    minimize_over_zonotope,
    observed_order,
    reachable_zonotope,
    riemann_estimate,
    transition_matrix,
    trimmed_reach_oracle,
)

BOX1 = Zonotope.box([-1.0], [1.0])
BOX_L1 = PolyhedralMax([[1, 0], [-1, 0], [0, 1], [0, -1]], [0, 0, 0, 0])


def unit_speed_1d():
    return LtvSystem.from_strings([["0"]], [["1"]], [["0"]], BOX1, BOX1, 0.0, 1.0)


def no_control_2d():
    return LtvSystem.from_strings([["0", "1"], ["-1", "0"]], [["0"], ["0"]], [["0"], ["0"]], BOX1, BOX1, 0.0, 1.0)


def test_one_d_exact_solution():
    V = lf_solve(unit_speed_1d(), EuclideanNorm([0.0]), [(-2.0, 2.0, 101)], 0.5)
    x = V.axes[0]
    h = x[1] - x[0]
    assert np.abs(V.values - np.maximum(0.0, np.abs(x) - 0.5)).max() <= 2 * h


def test_terminal_time_is_cost(desk_config):
    sys, g = desk_config.build_system(), desk_config.build_cost()
    V = lf_solve(sys, g, [(-1.0, 1.0, 11)] * 2, sys.T)
    assert np.array_equal(V.values.ravel(), g.value(V.points))
    assert V.meta["steps"] == 0


def test_constant_shift_passes_through(desk_config):
    sys = desk_config.build_system()
    shifted = PolyhedralMax(BOX_L1.a, BOX_L1.b + 0.7)
    a = lf_solve(sys, BOX_L1, [(-1.0, 1.0, 21)] * 2, 0.5)
    b = lf_solve(sys, shifted, [(-1.0, 1.0, 21)] * 2, 0.5)
    assert np.abs(b.values - a.values - 0.7).max() <= 1e-12


def test_cfl_respected(desk_config):
    V = lf_solve(desk_config.build_system(), desk_config.build_cost(), [(-1.0, 1.0, 21)] * 2, 0.0, cfl=0.4, dissipation="global")
    assert V.meta["max_cfl"] <= 0.4 + 1e-12
    assert np.all(np.isfinite(V.values))


def test_grid_convergence_factor(desk_config):
    sys, g = desk_config.build_system(), desk_config.build_cost()
    # padding keeps the extrapolated edge away from the compared nodes
    V = [lf_solve(sys, g, [(-2.0, 2.0, n)] * 2, 0.0, pad=p) for n, p in ((41, 10), (81, 20), (161, 40))]
    coarse = np.abs(V[1].values[::2, ::2] - V[0].values)
    fine = np.abs(V[2].values[::2, ::2] - V[1].values)[::2, ::2]
    assert coarse.mean() / fine.mean() >= 1.5
    assert 0.25 <= observed_order(V[2], V[1], V[0]) <= 1.0


def test_lf_validation(desk_config):
    sys, g = desk_config.build_system(), desk_config.build_cost()
    with pytest.raises(ValueError):
        lf_solve(sys, g, [(-1.0, 1.0, 2)] * 2, 0.0)
    with pytest.raises(ValueError):
        lf_solve(sys, g, [(-1.0, 1.0, 11)], 0.0)
    with pytest.raises(ValueError):
        lf_solve(sys, g, [(-1.0, 1.0, 11)] * 2, 2.0)
    with pytest.raises(GridTooLarge):
        lf_solve(sys, g, [(-1.0, 1.0, 5000)] * 2, 0.0)
    with pytest.raises(ValueError):
        lf_with_estimate(sys, g, [(-1.0, 1.0, 11)] * 2, 0.0)


def test_value_grid_csv_schema(desk_config):
    V = lf_solve(desk_config.build_system(), desk_config.build_cost(), [(-1.0, 1.0, 3)] * 2, 0.9)
    lines = V.to_csv().splitlines()
    assert lines[0] == "x1,x2,lower,upper,k_upper,argmax_lower"
    assert len(lines) == 10


# --- reachable-set oracle -------------------------------------------------------------


def test_no_control_authority():
    sys = no_control_2d()
    x = np.array([0.3, -0.7])
    res = trimmed_reach_oracle(sys, EuclideanNorm([0.0, 0.0]), 0.2, x, steps=50)
    assert res.value == pytest.approx(np.linalg.norm(transition_matrix(sys, 0.2)[0] @ x), abs=1e-12)


def test_transition_matrix_rotation():
    Phi = transition_matrix(no_control_2d(), [0.0, 1.0])
    c, s = np.cos(1.0), np.sin(1.0)
    assert np.abs(Phi[0] - np.array([[c, s], [-s, c]])).max() <= 1e-9
    assert np.array_equal(Phi[1], np.eye(2))


def test_one_d_oracle_exact():
    res = trimmed_reach_oracle(unit_speed_1d(), EuclideanNorm([0.0]), 0.25, [1.5], steps=10)
    assert res.value == pytest.approx(0.75, abs=1e-12) and res.converged


def test_minimize_certificate(rng):
    Z = Zonotope(rng.normal(size=3) * 3, rng.normal(size=(6, 3)))
    res = minimize_over_zonotope(EuclideanNorm([0.0, 0.0, 0.0]), Z)
    assert res.lower <= res.value <= res.lower + 1e-6
    # no vertex-sampled point is closer than the certified lower bound
    theta = rng.choice([-1.0, 1.0], size=(2000, 6))
    assert np.linalg.norm(Z.center + theta @ Z.generators, axis=1).min() >= res.lower - 1e-12


def test_weighted_and_polyhedral_costs(rng):
    Z = Zonotope([2.0, 1.0], [[0.5, 0.0], [0.2, 0.3]])
    w = minimize_over_zonotope(WeightedNorm([[2.0, 0.0], [0.0, 1.0]], [0.0, 0.0]), Z)
    thetas = rng.uniform(-1, 1, (20000, 2))
    pts = Z.center + thetas @ Z.generators
    assert w.value <= np.linalg.norm(pts * [2.0, 1.0], axis=1).min() + 1e-12
    p = minimize_over_zonotope(BOX_L1, Z)
    assert p.value == pytest.approx(1.3, abs=1e-9)


def test_oracle_on_characteristics(desk_config, desk_bundle):
    sys, g = desk_config.build_system(), desk_config.build_cost()
    b = desk_bundle
    j = b.nodes.size - 1
    for i in range(1, b.count, 41):
        val, err = riemann_estimate(sys, g, float(b.nodes[j]), b.xi[i, j], steps=200)
        assert abs(val - b.gammas()[i]) <= max(2 * err, 1e-9) + 1e-3


def test_oracle_inside_bounds(desk_config, desk_eval, rng):
    sys, g = desk_config.build_system(), desk_config.build_cost()
    bad = 0
    for x in rng.uniform(-2, 2, (200, 2)):
        iv = desk_eval.interval(0.0, x)
        v, err = riemann_estimate(sys, g, 0.0, x, steps=100)
        bad += not (iv.lower - err - 1e-9 <= v <= iv.upper + err + 1e-9)
    assert bad == 0


def test_reachable_zonotope_steps():
    with pytest.raises(ValueError):
        reachable_zonotope(unit_speed_1d(), 0.0, [0.0], 0)
    Z = reachable_zonotope(unit_speed_1d(), 0.0, [0.5], 4)
    assert Z.generators.shape == (4, 1)
    assert Z.support(np.array([[1.0]]))[0] == pytest.approx(1.5)
