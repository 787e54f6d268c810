"""Acceptance gate: one test per criterion, each at its stated tolerance and time budget.

Every test records a one-line verdict that the terminal summary prints under
"acceptance criteria", whether it passes or fails.
"""
import time

import pytest

from conftest import ACCEPTANCE_LINES
from mindeepc import checks
from mindeepc import data_matrices as dm
from mindeepc import experiments as ex
from mindeepc.lti import collect_data, benchmark_plant
from mindeepc.reduction import RankRule, reduce, select_rank, svd

REFERENCE_COST = 169.6


def record(number, passed, detail):
    ACCEPTANCE_LINES.append((number, bool(passed), detail))
    assert passed, detail


@pytest.fixture(scope="module")
def scenario_runs():
    """Full, SVD-reduced and truncated closed loops on the default scenario."""
    cfg = ex.ExperimentConfig.from_dict()
    t0 = time.perf_counter()
    libs = ex.build_libraries(cfg)
    trunc = reduce(libs.full, RankRule.truncate_columns(libs.reduced.rank)).H_bar
    logs = {
        "full": ex.run_variant(cfg, libs.full.entries, "full"),
        "reduced": ex.run_variant(cfg, libs.reduced.H_bar, "reduced"),
        "truncated": ex.run_variant(cfg, trunc, "truncated"),
    }
    return logs, libs, time.perf_counter() - t0


def test_criterion_1_dimensions():
    t0 = time.perf_counter()
    cfg = ex.ExperimentConfig.from_dict()
    libs = ex.build_libraries(cfg)
    ctrl_full = ex.DeepcController(libs.full.entries, cfg.deepc_config(), 2, 2)
    ctrl_red = ex.DeepcController(libs.reduced.H_bar, cfg.deepc_config(), 2, 2)
    dt = time.perf_counter() - t0
    got = (libs.full.shape, ctrl_full.dim, libs.reduced.rank, ctrl_red.dim)
    record(1, got == ((120, 371), 371, 64, 64) and dt < 5,
           f"library {got[0][0]}x{got[0][1]}, full dim {got[1]}, r = {got[2]}, reduced dim {got[3]} ({dt:.2f} s)")


def test_criterion_2_turning_point_rank():
    t0 = time.perf_counter()
    sys = benchmark_plant()
    found = set()
    cases = 0
    for noise in (0.0, 1e-3, 2e-3):
        for seed in range(10):
            u, y = collect_data(sys, 400, (-3, 3), (-noise, noise), seed=seed)
            bundle = svd(dm.io_library(u, y, 30))
            found.add((select_rank(bundle, RankRule.log_gap()),
                       select_rank(bundle, RankRule.structural(2, 30, 4))))
            cases += 1
    dt = time.perf_counter() - t0
    record(2, found == {(64, 64)} and dt < 30,
           f"(log_gap, structural) ranks over {cases} cases: {sorted(found)} ({dt:.1f} s)")


def test_criterion_3_cost_equivalence(scenario_runs):
    logs, _, dt = scenario_runs
    cf, cr = logs["full"].accumulated_cost, logs["reduced"].accumulated_cost
    gap = abs(cf - cr) / cf
    in_band = abs(cr - REFERENCE_COST) <= 0.25 * REFERENCE_COST
    record(3, gap <= 1e-3 and in_band and dt < 120,
           f"full {cf:.3f} vs reduced {cr:.3f}: gap {100 * gap:.4f}% (<= 0.1%), "
           f"band {REFERENCE_COST} +/- 25% {'ok' if in_band else 'violated'} ({dt:.1f} s)")


def test_criterion_4_truncation_failure(scenario_runs):
    logs, _, dt = scenario_runs
    ct, cr = logs["truncated"].accumulated_cost, logs["reduced"].accumulated_cost
    record(4, ct >= 2 * cr and dt < 120,
           f"truncated {ct:.2f} vs SVD-reduced {cr:.2f}: ratio {ct / cr:.2f} (>= 2)")


def test_criterion_5_equivalence_suite():
    s = checks.equivalence_suite(seed=20240501, trials=50, tol=1e-6)
    active = s.details["instances_with_active_constraints"]
    record(5, s.passed and s.trials >= 50 and 0 < active < s.trials and s.seconds < 120,
           f"{s.trials} instances, {s.failures} failures, {active} with active constraints, "
           f"worst {s.worst:.2e} (<= 1e-6) ({s.seconds:.1f} s)")


def test_criterion_6_fundamental_lemma_suites():
    t0 = time.perf_counter()
    mem = checks.membership_suite(seed=7, trials=100, tol=1e-8)
    rank = checks.rank_suite(seed=7, trials=20)
    dt = time.perf_counter() - t0
    record(6, mem.passed and rank.passed and dt < 60,
           f"membership {mem.trials} trials (hankel/page/mosaic) worst {mem.worst:.2e} (<= 1e-8); "
           f"rank = mL+n in {rank.trials - rank.failures}/{rank.trials} plants ({dt:.1f} s)")


def test_criterion_7_factorization_identity():
    s = checks.factorization_suite(seed=7, trials=10, tol=1e-10)
    record(7, s.passed and s.seconds < 30,
           f"{s.trials} plants, worst relative error {s.worst:.2e} (<= 1e-10) ({s.seconds:.2f} s)")


def test_criterion_8_qp_oracle():
    s = checks.qp_suite(seed=7, trials=200, tol=1e-8)
    record(8, s.passed and s.seconds < 60,
           f"{s.trials} instances vs enumeration, worst {s.worst:.2e} (<= 1e-8), "
           f"{s.failures} failures ({s.seconds:.2f} s)")


@pytest.mark.slow
def test_criterion_9_speedup(tmp_path):
    t0 = time.perf_counter()
    rep = ex.cmd_bench(ex.ExperimentConfig.from_dict(), tmp_path)
    dt = time.perf_counter() - t0
    sc = rep["scenario"]
    trends = {f"n={f['n']},m={f['m']}": [round(r["time_ratio"], 2) for r in f["rows"]]
              for f in rep["synthetic"]}
    improving = all(f["ratio_improves_with_T"] for f in rep["synthetic"])
    record(9, sc["time_ratio"] <= 0.5 and improving and dt < 300,
           f"mean solve {sc['reduced']['mean_ms']:.2f} ms vs {sc['full']['mean_ms']:.2f} ms: "
           f"ratio {sc['time_ratio']:.2f} (<= 0.5); synthetic ratios by T {trends} ({dt:.1f} s)")


@pytest.mark.slow
def test_cost_equivalence_holds_on_other_seeds():
    # not a criterion line; guards against seed 0 being a lucky draw
    for seed in range(1, 6):
        cfg = ex.ExperimentConfig.from_dict({"seed": seed})
        libs = ex.build_libraries(cfg)
        cf = ex.run_variant(cfg, libs.full.entries, "full").accumulated_cost
        cr = ex.run_variant(cfg, libs.reduced.H_bar, "reduced").accumulated_cost
        assert libs.reduced.rank == 64
        assert abs(cf - cr) / cf <= 1e-3
        assert abs(cr - REFERENCE_COST) <= 0.25 * REFERENCE_COST
