import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mindeepc import data_matrices as dm
from mindeepc.lti import collect_data, make_rng, benchmark_plant, simulate

from oracles import hankel_by_index, page_by_index


def traj(a):
    return dm.Trajectory(np.asarray(a, dtype=float))


# -- constructors -------------------------------------------------------------

def test_hankel_small_examples():
    np.testing.assert_array_equal(dm.build_hankel(traj([1, 2, 3, 4]), 2).entries,
                                  [[1, 2, 3], [2, 3, 4]])
    np.testing.assert_array_equal(dm.build_hankel(traj([1, 2, 3]), 1).entries, [[1, 2, 3]])


def test_hankel_two_channel_matches_index_oracle():
    w = make_rng(3).standard_normal((5, 2))
    H = dm.build_hankel(traj(w), 3)
    assert H.shape == (6, 3)
    np.testing.assert_array_equal(H.entries, hankel_by_index(w, 3))
    np.testing.assert_array_equal(H.entries[:, 0], w[:3].ravel())


def test_hankel_depth_too_large_names_both_values():
    with pytest.raises(dm.DimensionError, match=r"k=5.*T=4"):
        dm.build_hankel(traj([1, 2, 3, 4]), 5)


def test_page_small_examples():
    P = dm.build_page(traj([1, 2, 3, 4, 5]), 2)
    np.testing.assert_array_equal(P.entries, [[1, 3], [2, 4]])
    assert P.discarded == 1
    np.testing.assert_array_equal(dm.build_page(traj([1, 2, 3, 4]), 4).entries, [[1], [2], [3], [4]])


def test_page_two_channel_matches_index_oracle():
    w = make_rng(4).standard_normal((12, 2))
    P = dm.build_page(traj(w), 3)
    assert P.shape == (6, 4)
    np.testing.assert_array_equal(P.entries, page_by_index(w, 3))
    # disjoint columns: every sample appears exactly once
    assert sorted(P.entries[::2].ravel()) == sorted(w[:, 0])


def test_mosaic_degenerates_and_counts():
    rng = make_rng(5)
    w = traj(rng.standard_normal((9, 2)))
    np.testing.assert_array_equal(dm.build_mosaic_hankel([w], 3).entries, dm.build_hankel(w, 3).entries)
    M = dm.build_mosaic_hankel([w, w], 3).entries
    np.testing.assert_array_equal(M[:, :7], M[:, 7:])
    ws = [traj(rng.standard_normal((T, 1))) for T in (8, 9, 10)]
    assert dm.build_mosaic_hankel(ws, 4).cols == sum(T - 4 + 1 for T in (8, 9, 10)) == 18


def test_mosaic_channel_mismatch_names_index():
    with pytest.raises(dm.DimensionError, match="trajectory 1"):
        dm.build_mosaic_hankel([traj(np.ones((5, 2))), traj(np.ones((5, 1)))], 2)


@settings(max_examples=60, deadline=None)
@given(T=st.integers(1, 40), ch=st.integers(1, 3), data=st.data())
def test_column_counts_and_shift_property(T, ch, data):
    k = data.draw(st.integers(1, T))
    w = np.arange(T * ch, dtype=float).reshape(T, ch) ** 1.5
    H = dm.build_hankel(traj(w), k).entries
    assert H.shape == (ch * k, T - k + 1)
    assert dm.build_page(traj(w), k).cols == T // k
    if T - k + 1 >= 2:
        # column j+1 of H_k(w) is column j of H_k(w shifted by one sample)
        Hs = dm.build_hankel(traj(w[1:]), k).entries
        np.testing.assert_array_equal(H[:, 1:], Hs)


@settings(max_examples=30, deadline=None)
@given(Ts=st.lists(st.integers(3, 15), min_size=1, max_size=4), k=st.integers(1, 3))
def test_mosaic_column_count_property(Ts, k):
    ws = [traj(np.ones((T, 2))) for T in Ts]
    assert dm.build_mosaic_hankel(ws, k).cols == sum(T - k + 1 for T in Ts)


# -- excitation ------------------------------------------------------------------

def test_zero_and_constant_trajectories_not_exciting():
    rep = dm.check_persistent_excitation(traj(np.zeros(20)), 3)
    assert not rep.satisfied and rep.computed_rank == 0
    rep = dm.check_persistent_excitation(traj(np.full(20, 2.0)), 2)
    assert not rep.satisfied and rep.computed_rank == 1
    assert not dm.check_page_excitation(traj(np.zeros(40)), 4, 2).satisfied


def test_short_data_reports_shortfall_instead_of_raising():
    rep = dm.check_persistent_excitation(traj(make_rng(0).standard_normal((10, 2))), 4)
    # H_4 is 8x7: one column short of full row rank
    assert rep.shortfall == 1 and not rep.satisfied and "1 more" in rep.message


def test_minimum_length_input_is_exciting():
    m, n, L = 2, 4, 30
    T = (m + 1) * (n + L) - 1
    assert T == 101
    u = make_rng(11).uniform(-3, 3, (T, m))
    rep = dm.check_persistent_excitation(traj(u), n + L)
    # independent rank computation
    assert np.linalg.matrix_rank(hankel_by_index(u, n + L)) == m * (n + L)
    assert rep.satisfied and rep.computed_rank == rep.required_rank == 68


def test_page_excitation_order_one_is_single_page_rank():
    w = traj(make_rng(2).standard_normal((60, 1)))
    rep = dm.check_page_excitation(w, 3, 1)
    assert rep.computed_rank == np.linalg.matrix_rank(dm.build_page(w, 3).entries)


def test_page_excitation_for_benchmark_plant_dimensions():
    m, n, L = 2, 4, 30
    l = n + 1
    T = (l - 1) * L + L * (m * L * l) + L  # one spare column per block
    u = traj(make_rng(7).uniform(-3, 3, (T, m)))
    rep = dm.check_page_excitation(u, L, l)
    assert rep.required_rank == m * L * l and rep.satisfied


def test_collective_excitation():
    rng = make_rng(8)
    w = traj(rng.standard_normal((60, 1)))
    a = dm.check_collective_excitation([w], 5)
    b = dm.check_persistent_excitation(w, 5)
    assert (a.computed_rank, a.satisfied) == (b.computed_rank, b.satisfied)
    # duplicates add columns but no rank
    assert dm.check_collective_excitation([w, w], 5).computed_rank == b.computed_rank
    # trajectories each too short alone, jointly long enough
    m, n, L = 1, 2, 6
    q = 4
    Ti = L + n + 3
    need = (m + q) * (L + n) - q
    assert q * Ti >= need
    ws = [traj(rng.uniform(-1, 1, (Ti, m))) for _ in range(q)]
    assert not dm.check_persistent_excitation(ws[0], L + n).satisfied
    assert dm.check_collective_excitation(ws, L + n).satisfied


def test_rank_monotone_under_appending():
    u = make_rng(9).standard_normal((30, 2))
    ranks = [dm.check_persistent_excitation(traj(u[:T]), 5).computed_rank for T in range(5, 31)]
    assert all(a <= b for a, b in zip(ranks, ranks[1:]))


# -- membership -----------------------------------------------------------------

def test_membership_of_columns_and_combinations():
    H = dm.build_hankel(traj(make_rng(1).standard_normal((30, 2))), 8)
    for j in (0, 5, H.cols - 1):
        assert dm.membership_residual(H, H.entries[:, j]) <= 1e-12 * np.linalg.norm(H.entries[:, j])
    v = H.entries @ make_rng(2).standard_normal(H.cols)
    assert dm.membership_residual(H, v) <= 1e-10 * np.linalg.norm(v)
    with pytest.raises(dm.DimensionError):
        dm.membership_residual(H, np.ones(3))


def test_benchmark_plant_trajectory_is_member():
    sys = benchmark_plant()
    L = 30
    u, y = collect_data(sys, 400, (-3, 3), (0.0, 0.0), seed=4)
    H = dm.io_library(u, y, L)
    rng = make_rng(5)
    x0 = rng.standard_normal(sys.n)
    uL = rng.uniform(-1, 1, (L, sys.m))
    _, yL = simulate(sys, x0, uL)
    v = np.concatenate([uL.ravel(), yL.stacked()])
    assert dm.membership_residual(H, v) <= 1e-8 * np.linalg.norm(v)
    # a generic vector of the same size is not a trajectory
    junk = rng.standard_normal(v.size)
    assert dm.membership_residual(H, junk) > 1e-3 * np.linalg.norm(junk)


def test_io_library_layout():
    u = traj(np.arange(10.0))
    y = traj(-np.arange(10.0))
    H = dm.io_library(u, y, 3)
    np.testing.assert_array_equal(H.entries[:3], dm.build_hankel(u, 3).entries)
    np.testing.assert_array_equal(H.entries[3:], dm.build_hankel(y, 3).entries)


def test_trajectory_csv_round_trip(tmp_path):
    w = traj(make_rng(0).standard_normal((7, 3)))
    dm.save_trajectory_csv(tmp_path / "w.csv", w)
    assert (tmp_path / "w.csv").read_text().splitlines()[0] == "t,ch0,ch1,ch2"
    np.testing.assert_array_equal(dm.load_trajectory_csv(tmp_path / "w.csv").samples, w.samples)


def test_trajectory_rejects_empty():
    with pytest.raises(dm.DimensionError):
        dm.Trajectory(np.zeros((0, 2)))
