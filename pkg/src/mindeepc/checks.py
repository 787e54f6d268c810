"""Randomized property suites behind ``mindeepc check``.

Each suite draws its own generator from a master seed and returns a
:class:`SuiteResult` with counts and the worst residual seen.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import data_matrices as dm
from .deepc import DeepcConfig, assemble_full, assemble_reduced, partition, verify_theorem1
from .lti import (LtiSystem, make_rng, observability_index, random_plant, simulate,
                  structural_factors)
from .qp import QpSpec, Settings, solve
from .reduction import RankRule, reduce


@dataclass
class SuiteResult:
    name: str
    passed: bool
    trials: int
    failures: int
    worst: float
    tolerance: float
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name, "passed": self.passed, "trials": self.trials,
            "failures": self.failures, "worst": self.worst, "tolerance": self.tolerance,
            "seconds": round(self.seconds, 3), "details": self.details,
        }


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def min_data_length(m: int, n: int, L: int) -> int:
    """Shortest input length that can be persistently exciting of order n+L."""
    return (m + 1) * (n + L) - 1


def excitation_suite(u: dm.Trajectory, n: int, L: int,
                     rank_tol: float = dm.DEFAULT_RANK_TOL) -> SuiteResult:
    """Persistent excitation of order ``n+L`` for the collected input."""
    t0 = time.perf_counter()
    order = n + L
    m = u.channels
    T = u.length
    need = min_data_length(m, n, L)
    if T < order:
        rep = dm.ExcitationReport(order, m * order, 0, False, 0.0, rank_tol, m * order, 0,
                                  m * order, f"T={T} is shorter than the order {order}")
    else:
        rep = dm.check_persistent_excitation(u, order, rank_tol)
    details = {
        "T": T, "order": order, "required_rank": rep.required_rank,
        "computed_rank": rep.computed_rank, "min_T": need,
        "length_shortfall": max(0, need - T), "column_shortfall": rep.shortfall,
        "message": rep.message,
        "decision_dimension": T - L + 1,
        "dimension_lower_bound": m * L + (m + 1) * n,
    }
    return SuiteResult("excitation", rep.satisfied, 1, 0 if rep.satisfied else 1,
                       float(rep.required_rank - rep.computed_rank), 0.0,
                       time.perf_counter() - t0, details)


def _trajectory_stack(sys: LtiSystem, L: int, rng) -> np.ndarray:
    x0 = rng.standard_normal(sys.n)
    u = rng.uniform(-1, 1, size=(L, sys.m))
    _, y = simulate(sys, x0, u)
    return np.concatenate([u.ravel(), y.samples.ravel()])


def _replay_residual(sys: LtiSystem, L: int, v: np.ndarray) -> float:
    """How far ``v = [u; y]`` is from a trajectory: fit x0, compare outputs."""
    f = structural_factors(sys, L)
    mL = sys.m * L
    u, y = v[:mL], v[mL:]
    rhs = y - f.conv @ u
    x0, *_ = np.linalg.lstsq(f.obs, rhs, rcond=None)
    return float(np.linalg.norm(f.obs @ x0 - rhs) / max(np.linalg.norm(v), 1e-300))


def membership_suite(seed=0, trials: int = 100, tol: float = 1e-8) -> SuiteResult:
    """Noise-free trajectories lie in the range of Hankel / Page / mosaic libraries."""
    t0 = time.perf_counter()
    rng = make_rng(seed)
    worst, failures, count = 0.0, 0, 0
    details = {}
    for kind in ("hankel", "page", "mosaic"):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 3))
        p = int(rng.integers(1, 3))
        sys = random_plant(n, m, p, rng, spectral_radius=0.9)
        L = max(observability_index(sys), 3) + 1
        if kind == "hankel":
            T = min_data_length(m, n, L) + 20
            u = rng.uniform(-1, 1, (T, m))
            ok = dm.check_persistent_excitation(u, n + L).satisfied
            _, y = simulate(sys, rng.standard_normal(n), u)
            H = dm.io_library(u, y, L).entries
        elif kind == "page":
            T = L * ((m * L + 1) * (n + 1) - 1) + 3 * L
            u = rng.uniform(-1, 1, (T, m))
            ok = dm.check_page_excitation(u, L, n + 1).satisfied
            _, y = simulate(sys, rng.standard_normal(n), u)
            H = dm.io_library(u, y, L, "page").entries
        else:
            q = 3
            Ti = n + L + 2
            # jointly long enough although no single piece is
            while q * Ti < (m + q) * (L + n) - q:
                Ti += 1
            us = [rng.uniform(-1, 1, (Ti, m)) for _ in range(q)]
            ys = [simulate(sys, rng.standard_normal(n), ui)[1] for ui in us]
            ok = dm.check_collective_excitation(us, n + L).satisfied
            H = dm.mosaic_io_library(us, ys, L).entries
        kind_worst = 0.0
        for _ in range(trials):
            v = _trajectory_stack(sys, L, rng)
            res = dm.membership_residual(H, v) / np.linalg.norm(v)
            # converse: library combinations replay through the plant
            g = rng.standard_normal(H.shape[1])
            back = _replay_residual(sys, L, H @ g)
            kind_worst = max(kind_worst, res, back)
            count += 1
            if res > tol or back > tol:
                failures += 1
        # negative control: a generic vector is not a trajectory (rank < rows)
        junk = rng.standard_normal(H.shape[0])
        separated = dm.membership_residual(H, junk) / np.linalg.norm(junk) > 1e-3
        if not ok or not separated:
            failures += 1
        worst = max(worst, kind_worst)
        details[kind] = {"n": n, "m": m, "p": p, "L": L, "cols": H.shape[1],
                         "excited": bool(ok), "non_member_rejected": bool(separated),
                         "worst": kind_worst}
    return SuiteResult("membership", failures == 0, count, failures, worst, tol,
                       time.perf_counter() - t0, details)


def rank_suite(seed=0, trials: int = 10, rank_tol: float = dm.DEFAULT_RANK_TOL) -> SuiteResult:
    """Noise-free stacked Hankel rank equals ``mL + n`` when L >= observability index."""
    t0 = time.perf_counter()
    rng = make_rng(seed)
    failures, worst = 0, 0
    cases = []
    for _ in range(trials):
        n, m, p = int(rng.integers(1, 6)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
        sys = random_plant(n, m, p, rng, spectral_radius=0.9)
        L = observability_index(sys) + int(rng.integers(0, 4))
        T = min_data_length(m, n, L) + int(rng.integers(0, 40))
        u = rng.uniform(-1, 1, (T, m))
        _, y = simulate(sys, rng.standard_normal(n), u)
        H = dm.io_library(u, y, L)
        sv = np.linalg.svd(H.entries, compute_uv=False)
        r = dm.numerical_rank(sv, rank_tol)
        r_struct = reduce(H, RankRule.structural(m, L, n)).rank
        r_thr = reduce(H, RankRule.threshold(rank_tol)).rank
        target = m * L + n
        bad = not (r == r_struct == r_thr == target) or (T - L + 1) - r < m * n
        failures += bad
        worst = max(worst, abs(r - target))
        cases.append({"n": n, "m": m, "p": p, "L": L, "T": T, "rank": r, "mL+n": target})
    return SuiteResult("rank", failures == 0, trials, failures, float(worst), 0.0,
                       time.perf_counter() - t0, {"cases": cases})


def factorization_suite(seed=0, trials: int = 10, tol: float = 1e-10) -> SuiteResult:
    """``[H(u); H(y)] = [[I, 0], [T_L, O_L]] [H(u); H_1(x)]`` on noise-free data."""
    t0 = time.perf_counter()
    rng = make_rng(seed)
    worst, failures = 0.0, 0
    for _ in range(trials):
        n, m, p = int(rng.integers(1, 7)), int(rng.integers(1, 3)), int(rng.integers(1, 4))
        sys = random_plant(n, m, p, rng, spectral_radius=0.95, feedthrough=bool(rng.integers(0, 2)))
        L = int(rng.integers(1, 12))
        T = min_data_length(m, n, L) + int(rng.integers(0, 50))
        u = rng.uniform(-1, 1, (T, m))
        x, y = simulate(sys, rng.standard_normal(n), u)
        lhs = dm.io_library(u, y, L).entries
        Hu = dm.build_hankel(u, L).entries
        X = x.samples[: T - L + 1].T
        rhs = structural_factors(sys, L).io_factor() @ np.vstack([Hu, X])
        err = _rel(rhs, lhs)
        worst = max(worst, err)
        failures += err > tol
    return SuiteResult("factorization", failures == 0, trials, failures, worst, tol,
                       time.perf_counter() - t0)


def equivalence_instance(rng, tight: bool, lambdas=None):
    """One randomized full/reduced problem pair on noise-free data."""
    n, m, p = int(rng.integers(1, 7)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
    sys = random_plant(n, m, p, rng, spectral_radius=0.9)
    T_ini = observability_index(sys) + int(rng.integers(0, 2))
    N = int(rng.integers(3, 8))
    L = T_ini + N
    T = min_data_length(m, n, L) + int(rng.integers(10, 60))
    u = rng.uniform(-1, 1, (T, m))
    _, y = simulate(sys, np.zeros(n), u)
    H = dm.io_library(u, y, L)
    red = reduce(H, RankRule.threshold(dm.DEFAULT_RANK_TOL))
    lu, ly, lg = lambdas if lambdas is not None else 10.0 ** rng.uniform([0, 0, -2], [4, 3, 1])
    # initial window from a simulated prefix, slightly perturbed so sigma != 0
    up = rng.uniform(-1, 1, (T_ini, m))
    _, yp = simulate(sys, rng.standard_normal(n), up)
    u_ini = up.ravel()
    y_ini = yp.samples.ravel() + 1e-2 * rng.standard_normal(p * T_ini)
    y_r = np.tile(rng.uniform(-1, 1, p), N)
    cfg = DeepcConfig(T_ini, N, Q=10.0 ** rng.uniform(0, 2), R=10.0 ** rng.uniform(-3, 0),
                      lambda_u=lu, lambda_y=ly, lambda_g=lg, reference=y_r)
    if tight:
        loose = assemble_full(partition(H, T_ini, N, m, p), cfg, u_ini, y_ini, y_r)
        g0 = np.linalg.solve(loose.hessian, -loose.linear)
        umax = np.abs(loose.part.Uf @ g0).max()
        ymax = np.abs(loose.part.Yf @ g0).max()
        cfg.u_lo, cfg.u_hi = -0.5 * umax, 0.5 * umax
        cfg.y_lo, cfg.y_hi = -0.8 * ymax, 0.8 * ymax
    else:
        cfg.u_lo, cfg.u_hi = -1e3, 1e3
        cfg.y_lo, cfg.y_hi = -1e3, 1e3
    full = assemble_full(partition(H, T_ini, N, m, p), cfg, u_ini, y_ini, y_r)
    reduced = assemble_reduced(partition(red.H_bar, T_ini, N, m, p), cfg, u_ini, y_ini, y_r)
    return full, reduced, red, {"n": n, "m": m, "p": p, "T_ini": T_ini, "N": N, "T": T,
                                "cols": H.cols, "r": red.rank}


def equivalence_suite(seed=0, trials: int = 50, tol: float = 1e-6,
                   lambdas=None, settings: Settings | None = None) -> SuiteResult:
    """Full vs minimum-dimension DeePC on randomized instances.

    Half of the instances have boxes tight enough to activate constraints.
    ``lambdas`` overrides the regularizers; a non-positive value flags a
    hypothesis violation for every trial.
    """
    t0 = time.perf_counter()
    if lambdas is not None and min(lambdas) <= 0:
        return SuiteResult("equivalence", False, trials, trials, float("inf"), tol,
                           time.perf_counter() - t0,
                           {"hypothesis_violated": True,
                            "reason": f"regularizers must be positive, got {list(lambdas)}"})
    rng = make_rng(seed)
    worst, failures, active, hyp_bad = 0.0, 0, 0, 0
    for i in range(trials):
        full, reduced, red, _ = equivalence_instance(rng, tight=bool(i % 2), lambdas=lambdas)
        rep = verify_theorem1(full, reduced, red.V1, tol, settings)
        worst = max(worst, rep.g_transfer_error, rep.solution_error, rep.prediction_error)
        failures += not rep.passed
        hyp_bad += not rep.hypothesis_ok
        active += bool(np.any(rep.full.mu_star > 0))
    return SuiteResult("equivalence", failures == 0 and hyp_bad == 0, trials, failures, worst, tol,
                       time.perf_counter() - t0,
                       {"instances_with_active_constraints": active,
                        "hypothesis_violations": hyp_bad})


def enumerate_qp(H, f, A, b, tol: float = 1e-9):
    """Brute-force QP oracle: try every active set, keep the KKT point."""
    d = f.size
    for k in range(len(b) + 1):
        for S in itertools.combinations(range(len(b)), k):
            S = list(S)
            K = np.zeros((d + k, d + k))
            K[:d, :d] = H
            K[:d, d:] = A[S].T
            K[d:, :d] = A[S]
            try:
                sol = np.linalg.solve(K, np.concatenate([-f, b[S]]))
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:d], sol[d:]
            if np.all(A @ x - b <= tol * (1 + np.abs(b))) and np.all(lam >= -tol):
                mu = np.zeros(len(b))
                mu[S] = lam
                return x, mu
    return None, None


def random_qp(rng, d_max: int = 6, c_max: int = 4):
    d = int(rng.integers(1, d_max + 1))
    nc = int(rng.integers(0, c_max + 1))
    M = rng.standard_normal((d, d))
    H = M @ M.T + 0.1 * np.eye(d)
    f = rng.standard_normal(d)
    A = rng.standard_normal((nc, d))
    xf = rng.standard_normal(d)
    b = A @ xf + rng.uniform(0.0, 1.0, nc)
    return H, f, A, b


def qp_suite(seed=0, trials: int = 200, tol: float = 1e-8) -> SuiteResult:
    """Solver vs active-set enumeration on small random QPs."""
    t0 = time.perf_counter()
    rng = make_rng(seed)
    worst, failures = 0.0, 0
    settings = Settings(tolerance=tol)
    for _ in range(trials):
        H, f, A, b = random_qp(rng)
        sol = solve(QpSpec(H, f, A, b), settings)
        x_ref, _ = enumerate_qp(H, f, A, b)
        err = float(np.abs(sol.x - x_ref).max()) if x_ref is not None else float("inf")
        resid = max(sol.stationarity, sol.complementarity, sol.infeasibility)
        worst = max(worst, err, resid)
        failures += (sol.status != "optimal") or err > tol or resid > tol
    return SuiteResult("qp", failures == 0, trials, failures, worst, tol,
                       time.perf_counter() - t0)
