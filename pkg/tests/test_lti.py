import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mindeepc import data_matrices as dm
from mindeepc.lti import (LtiSystem, UnobservableError, collect_data, load_plant, make_rng,
                          observability_index, benchmark_plant, random_plant, save_plant,
                          simulate, structural_factors)

from oracles import simulate_loop


def test_frozen_dynamics_hold_initial_state():
    sys = LtiSystem(np.eye(3), np.zeros((3, 1)), np.eye(3))
    x0 = np.array([1.0, -2.0, 0.5])
    _, y = simulate(sys, x0, np.ones((6, 1)))
    np.testing.assert_array_equal(y.samples, np.tile(x0, (6, 1)))


def test_feedthrough_only():
    sys = LtiSystem(np.eye(2), np.ones((2, 2)), np.zeros((2, 2)), np.eye(2))
    u = make_rng(0).standard_normal((5, 2))
    _, y = simulate(sys, np.ones(2), u)
    np.testing.assert_array_equal(y.samples, u)


def test_benchmark_plant_impulse_response():
    sys = benchmark_plant()
    u = np.zeros((3, 2))
    u[0, 0] = 1.0
    _, y = simulate(sys, np.zeros(4), u)
    np.testing.assert_allclose(y.samples[1], [0.017, 0.001], atol=1e-15)
    np.testing.assert_array_equal(y.samples[0], [0, 0])


def test_simulate_matches_loop_oracle():
    rng = make_rng(1)
    sys = random_plant(3, 2, 2, rng, feedthrough=True)
    u = rng.standard_normal((20, 2))
    x0 = rng.standard_normal(3)
    x, y = simulate(sys, x0, u)
    xs, ys = simulate_loop(sys.A, sys.B, sys.C, sys.D, x0, u)
    np.testing.assert_allclose(x.samples, xs, atol=1e-13)
    np.testing.assert_allclose(y.samples, ys, atol=1e-13)


def test_simulate_dimension_errors():
    sys = benchmark_plant()
    with pytest.raises(dm.DimensionError):
        simulate(sys, np.zeros(3), np.zeros((4, 2)))
    with pytest.raises(dm.DimensionError):
        simulate(sys, np.zeros(4), np.zeros((4, 3)))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**32 - 1))
def test_linearity(a, b, seed):
    rng = make_rng(seed)
    sys = random_plant(3, 1, 2, rng)
    u1, u2 = rng.standard_normal((2, 15, 1))
    x1, x2 = rng.standard_normal((2, 3))
    _, y1 = simulate(sys, x1, u1)
    _, y2 = simulate(sys, x2, u2)
    _, y = simulate(sys, a * x1 + b * x2, a * u1 + b * u2)
    np.testing.assert_allclose(y.samples, a * y1.samples + b * y2.samples, atol=1e-9)


def test_collect_deterministic_and_noise_free_replay():
    sys = benchmark_plant()
    u1, y1 = collect_data(sys, 400, (-3, 3), (-0.002, 0.002), seed=12)
    u2, y2 = collect_data(sys, 400, (-3, 3), (-0.002, 0.002), seed=12)
    assert u1.samples.shape == (400, 2) and y1.samples.shape == (400, 2)
    np.testing.assert_array_equal(u1.samples, u2.samples)
    np.testing.assert_array_equal(y1.samples, y2.samples)
    assert np.all(np.abs(u1.samples) <= 3)
    _, clean = simulate(sys, np.zeros(4), u1)
    noise = y1.samples - clean.samples
    assert np.all(np.abs(noise) <= 0.002) and np.abs(noise).max() > 0.001

    u0, y0 = collect_data(sys, 50, (0.5, 0.5), (0.0, 0.0), seed=3)
    np.testing.assert_array_equal(u0.samples, 0.5)
    np.testing.assert_array_equal(y0.samples, simulate(sys, np.zeros(4), np.full((50, 2), 0.5))[1].samples)


def test_observability_index():
    sys = benchmark_plant()
    assert observability_index(sys) == 2
    # independent check: [C] has rank 2 < 4, [C; CA] has rank 4
    assert np.linalg.matrix_rank(sys.C) == 2
    assert np.linalg.matrix_rank(np.vstack([sys.C, sys.C @ sys.A])) == 4
    assert observability_index(LtiSystem(sys.A, sys.B, np.eye(4))) == 1
    with pytest.raises(UnobservableError):
        observability_index(LtiSystem(sys.A, sys.B, np.zeros((2, 4))))


def test_structural_factors_small_depths():
    rng = make_rng(2)
    sys = random_plant(3, 2, 2, rng, feedthrough=True)
    f1 = structural_factors(sys, 1)
    np.testing.assert_array_equal(f1.conv, sys.D)
    np.testing.assert_array_equal(f1.obs, sys.C)
    f2 = structural_factors(sys, 2)
    Z = np.zeros_like(sys.D)
    np.testing.assert_allclose(f2.conv, np.block([[sys.D, Z], [sys.C @ sys.B, sys.D]]))
    np.testing.assert_allclose(f2.obs, np.vstack([sys.C, sys.C @ sys.A]))


def test_factorization_identity_benchmark_plant():
    sys = benchmark_plant()
    L = 30
    u, y = collect_data(sys, 400, (-3, 3), (0.0, 0.0), seed=21)
    x, _ = simulate(sys, np.zeros(4), u)
    lhs = dm.io_library(u, y, L).entries
    right = np.vstack([dm.build_hankel(u, L).entries, x.samples[: 400 - L + 1].T])
    rhs = structural_factors(sys, L).io_factor() @ right
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(lhs)


def test_rank_equals_mL_plus_n():
    sys = benchmark_plant()
    L = 30
    u, y = collect_data(sys, 400, (-3, 3), (0.0, 0.0), seed=22)
    sv = np.linalg.svd(dm.io_library(u, y, L).entries, compute_uv=False)
    assert dm.numerical_rank(sv) == sys.m * L + sys.n == 64


def test_random_plant_properties():
    rng = make_rng(3)
    for _ in range(5):
        sys = random_plant(4, 2, 2, rng, spectral_radius=0.9)
        assert sys.is_controllable()
        assert observability_index(sys) <= 4
        assert np.max(np.abs(np.linalg.eigvals(sys.A))) < 0.9 + 1e-12


def test_plant_file_round_trip(tmp_path):
    sys = random_plant(3, 2, 1, make_rng(4), feedthrough=True)
    save_plant(tmp_path / "p.yaml", sys)
    back = load_plant(tmp_path / "p.yaml")
    for name in "ABCD":
        np.testing.assert_array_equal(getattr(back, name), getattr(sys, name))
    assert back.digest() == sys.digest()


def test_plant_file_header_mismatch(tmp_path):
    (tmp_path / "p.yaml").write_text("n: 3\nA: [[1]]\nB: [[1]]\nC: [[1]]\n")
    with pytest.raises(dm.DimensionError):
        load_plant(tmp_path / "p.yaml")
