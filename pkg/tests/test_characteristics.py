import math
import struct

import numpy as np
import pytest

from hjbounds.characteristics import (
    BUNDLE_MAGIC,
    BundleFormatError,
    BundleVersionError,
    NonFiniteState,
    TimeGrid,
    bundle_bytes,
    bundle_from_json,
    bundle_to_json,
    load_bundle,
    precompute,
    rk4_step,
    save_bundle,
)
from hjbounds.cost import EuclideanNorm
from hjbounds.ltv_model import AlignmentError, LtvSystem, Zonotope, game_hamiltonian, trimmed_hamiltonian

BOX1 = Zonotope.box([-1.0], [1.0])


def scalar_system(a="sin(t)", e="0.5", t0=0.0, T=1.0):
    return LtvSystem.from_strings([[a]], [["1"]], [[e]], BOX1, BOX1, t0, T)


def series_expm(M, terms=30):
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


# --- grid and RK4 --------------------------------------------------------------------


def test_time_grid_nodes():
    g = TimeGrid(0.0, 1.5, 0.0083)
    nodes = g.nodes
    gaps = -np.diff(nodes)
    assert nodes[0] == 1.5 and nodes[-1] == 0.0
    assert np.all(gaps > 0) and np.all(gaps <= 0.0083 + 1e-15)
    assert nodes.size == 182


def test_time_grid_exact_division():
    assert TimeGrid(0.0, 1.0, 0.25).nodes.tolist() == [1.0, 0.75, 0.5, 0.25, 0.0]


def test_locate_snaps_below():
    g = TimeGrid(0.0, 1.0, 0.25)
    assert g.locate(0.5) == (2, False)
    assert g.locate(0.6) == (2, True)
    with pytest.raises(ValueError):
        g.locate(1.2)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.5, 0.1)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0.0)


def test_rk4_exponential():
    y = rk4_step(lambda s, y: y, 0.0, np.array([1.0]), 0.1)
    assert y[0] == pytest.approx(1 + 0.1 + 0.01 / 2 + 0.001 / 6 + 0.0001 / 24, abs=1e-15)
    assert abs(y[0] - 1.1051708333333334) <= 1e-15


def test_rk4_zero_field():
    y0 = np.array([0.3, -2.0])
    assert np.array_equal(rk4_step(lambda s, y: np.zeros_like(y), 0.0, y0, 0.1), y0)


def test_rk4_cosine():
    y, s, h = np.array([0.0]), 0.0, 1e-3
    steps = int(round((math.pi / 2) / h))
    h = (math.pi / 2) / steps
    for _ in range(steps):
        y = rk4_step(lambda s, y: np.array([math.cos(s)]), s, y, h)
        s += h
    assert abs(y[0] - 1.0) <= 1e-10


def test_rk4_non_finite():
    with pytest.raises(NonFiniteState):
        rk4_step(lambda s, y: np.array([np.inf]), 0.0, np.array([1.0]), 0.1)


# --- precompute ---------------------------------------------------------------------


def test_ex6_counts(ex6_bundle):
    b = ex6_bundle
    assert b.count == 421 and b.nodes.size == 182
    assert [b.level_members(k).size for k in range(5)] == [85, 84, 84, 84, 84]
    assert b.degenerate == (True, False, False, False, False)


def test_terminal_slice(ex6_bundle):
    b = ex6_bundle
    assert np.array_equal(b.xi[:, 0], b.xbar)
    assert np.array_equal(b.lam[:, 0], b.p)
    assert np.array_equal(b.q[:, 0], -np.einsum("ij,ij->i", b.p, b.xbar) + b.gammas())
    assert np.array_equal(b.phi[0], np.eye(3))


def test_adjoint_and_offset_identities(ex6_bundle):
    b = ex6_bundle
    lam_ref = np.einsum("mji,kj->kmi", b.phi, b.p)
    scale = max(1.0, float(np.abs(lam_ref).max()))
    assert np.abs(b.lam - lam_ref).max() <= 1e-8 * scale
    touch = np.einsum("kmi,kmi->km", b.lam, b.xi) + b.q
    assert np.abs(touch - b.gammas()[:, None]).max() <= 1e-8


def test_adjoint_pairing_constant(ex6_bundle, rng):
    b = ex6_bundle
    for _ in range(5):
        z = rng.normal(size=3)
        k = int(rng.integers(b.count))
        # Phi(node, T) z = Phi(T, node)^{-1} z
        vals = [float(b.lam[k, j] @ np.linalg.solve(b.phi[j], z)) for j in range(b.nodes.size)]
        ref = float(b.p[k] @ z)
        assert np.max(np.abs(np.array(vals) - ref)) <= 1e-8 * max(1.0, abs(ref))


def test_frozen_dynamics():
    Z2 = Zonotope.box([-1.0, -1.0], [1.0, 1.0])
    sys = LtvSystem.from_strings([["0", "0"], ["0", "0"]], [["0", "0"], ["0", "0"]], [["0"], ["0"]], Z2, BOX1, 0.0, 1.0)
    b = precompute(sys, EuclideanNorm([0.0, 0.0]), [0.5, 1.0], [6, 6], TimeGrid(0.0, 1.0, 0.1))
    assert np.array_equal(b.xi, np.repeat(b.xbar[:, None, :], b.nodes.size, axis=1))
    assert np.array_equal(b.lam, np.repeat(b.p[:, None, :], b.nodes.size, axis=1))
    assert np.all(b.q == b.q[:, :1])
    assert np.all(b.phi == np.eye(2))


def test_constant_a_transition_matrix():
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    Z2 = Zonotope.box([-1.0], [1.0])
    sys = LtvSystem.from_strings(A.tolist(), [["0"], ["1"]], [["0"], ["0.5"]], Z2, BOX1, 0.0, 0.8)
    b = precompute(sys, EuclideanNorm([0.0, 0.0]), [0.5], [4], TimeGrid(0.0, 0.8, 0.01))
    ref = series_expm(A * 0.8)
    assert np.abs(b.phi[-1] - ref).max() <= 1e-8
    assert np.allclose(b.phi[-1], np.linalg.inv(series_expm(-A * 0.8)), atol=1e-8)


def test_scheme_direct_identities(ex6_config):
    c = ex6_config
    b = precompute(c.build_system(), c.build_cost(), c.levels, [3, 6, 6, 6, 6], c.build_grid(), scheme="direct")
    touch = np.einsum("kmi,kmi->km", b.lam, b.xi) + b.q
    assert np.abs(touch - b.gammas()[:, None]).max() <= 1e-6


def test_smooth_convergence_order():
    # scalar system whose costate never changes sign: the optimal control is constant
    sys = scalar_system()
    ends = []
    for h in (0.1, 0.05, 0.025):
        b = precompute(sys, EuclideanNorm([0.0]), [1.0], [2], TimeGrid(0.0, 1.0, h), scheme="direct")
        ends.append(b.xi[:, -1, 0])
    d1 = np.abs(ends[0] - ends[1]).max()
    d2 = np.abs(ends[1] - ends[2]).max()
    assert d2 <= d1 / 10
    assert d1 <= 1e-5


def test_alignment_failure_propagates():
    sys = scalar_system(e="3")
    with pytest.raises(AlignmentError):
        precompute(sys, EuclideanNorm([0.0]), [1.0], [2], TimeGrid(0.0, 1.0, 0.1))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        precompute(scalar_system(), EuclideanNorm([0.0, 0.0]), [1.0], [2], TimeGrid(0.0, 1.0, 0.1))


def test_hamiltonian_equivalence_ex6(ex6_system, rng):
    for _ in range(200):
        t = rng.uniform(0, 1.5)
        x, p = rng.normal(size=(2, 3)) * 3
        assert abs(game_hamiltonian(ex6_system, t, x, p) - trimmed_hamiltonian(ex6_system, t, x, p)) <= 1e-9


# --- persistence ---------------------------------------------------------------------

ARRAYS = ("levels", "level_index", "xbar", "p", "xi", "lam", "q", "phi")


def same_bundle(a, b):
    for name in ARRAYS:
        x, y = getattr(a, name), getattr(b, name)
        assert x.dtype == y.dtype and x.shape == y.shape
        assert x.tobytes() == y.tobytes(), name
    assert a.grid == b.grid and a.L_g == b.L_g and a.degenerate == b.degenerate and a.metadata == b.metadata


def test_bundle_round_trip(ex6_bundle, tmp_path):
    path = tmp_path / "b.hjb"
    nbytes = save_bundle(ex6_bundle, path)
    assert nbytes == path.stat().st_size
    same_bundle(ex6_bundle, load_bundle(path))
    assert bundle_bytes(load_bundle(path)) == path.read_bytes()


def test_bundle_json_round_trip(desk_bundle):
    same_bundle(desk_bundle, bundle_from_json(bundle_to_json(desk_bundle)))


def test_truncated_bundle(desk_bundle, tmp_path):
    path = tmp_path / "b.hjb"
    save_bundle(desk_bundle, path)
    path.write_bytes(path.read_bytes()[:-100])
    with pytest.raises(BundleFormatError, match="checksum"):
        load_bundle(path)


def test_corrupt_byte(desk_bundle, tmp_path):
    path = tmp_path / "b.hjb"
    save_bundle(desk_bundle, path)
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(BundleFormatError):
        load_bundle(path)


def test_version_zero_rejected(desk_bundle, tmp_path):
    data = bytearray(bundle_bytes(desk_bundle))
    data[len(BUNDLE_MAGIC) : len(BUNDLE_MAGIC) + 4] = struct.pack("<I", 0)
    path = tmp_path / "v0.hjb"
    path.write_bytes(bytes(data))
    with pytest.raises(BundleVersionError):
        load_bundle(path)


def test_not_a_bundle(tmp_path):
    path = tmp_path / "x.hjb"
    path.write_bytes(b"hello world" * 10)
    with pytest.raises(BundleFormatError, match="not a bundle"):
        load_bundle(path)
