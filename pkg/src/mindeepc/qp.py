"""Dense strictly convex QP solver.

Solves ``min 1/2 x'Hx + f'x  s.t.  A x <= b`` with the Goldfarb-Idnani dual
active-set method. The unconstrained minimizer is the starting point; the
most violated constraint is added at each major iteration and blocking
constraints are dropped along the way, so every iterate is dual feasible and
the objective rises monotonically to the optimum. The final active set is
re-solved exactly to polish ``(x, mu)``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
NUMERICAL_ERROR = "numerical_error"
INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QpSpec:
    H: np.ndarray
    f: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    warm_x: np.ndarray | None = None
    warm_mu: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        f = np.asarray(self.f, dtype=float).ravel()
        d = f.size
        if H.shape != (d, d):
            raise ValueError(f"H must be {d}x{d}, got {H.shape}")
        if not np.allclose(H, H.T, rtol=0, atol=1e-12 * max(1.0, np.abs(H).max())):
            raise ValueError("H is not symmetric")
        A = np.zeros((0, d)) if self.A is None else np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.zeros(0) if self.b is None else np.asarray(self.b, dtype=float).ravel()
        if A.size == 0:
            A = np.zeros((0, d))
        if A.shape[1] != d or A.shape[0] != b.size:
            raise ValueError(f"inequality system shape {A.shape} / {b.shape} inconsistent with d={d}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.f.size

    @property
    def n_ineq(self) -> int:
        return self.b.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.f @ x)


@dataclass(frozen=True)
class Settings:
    tolerance: float = 1e-8
    max_iterations: int = 10_000


@dataclass
class QpSolution:
    x: np.ndarray
    mu: np.ndarray
    objective: float
    status: str
    stationarity: float
    complementarity: float
    infeasibility: float
    iterations: int
    wall_time: float
    active_set: list = field(default_factory=list)
    # negated objective after each primal step; non-increasing for this method
    merit_history: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def kkt_residuals(spec: QpSpec, x: np.ndarray, mu: np.ndarray) -> tuple[float, float, float]:
    """Scaled stationarity, complementarity and primal infeasibility.

    Each residual is divided by the magnitude of the terms it balances (at
    least 1), so the numbers are comparable across problem scalings.
    """
    Hx = spec.H @ x
    Atmu = spec.A.T @ mu if spec.n_ineq else np.zeros_like(x)
    grad = Hx + spec.f + Atmu
    scale = max(1.0, np.abs(Hx).max(initial=0), np.abs(spec.f).max(initial=0),
                np.abs(Atmu).max(initial=0))
    stat = float(np.abs(grad).max(initial=0) / scale)
    if spec.n_ineq:
        slack = spec.A @ x - spec.b
        bscale = max(1.0, np.abs(spec.b).max(), np.abs(spec.A @ x).max())
        infeas = float(np.maximum(slack, 0).max() / bscale)
        neg_mu = float(np.maximum(-mu, 0).max())
        comp = float(abs(mu @ slack) / max(1.0, np.abs(mu).max() * bscale))
        infeas = max(infeas, neg_mu / max(1.0, np.abs(mu).max()))
    else:
        infeas = comp = 0.0
    return stat, comp, infeas


def _finish(spec, x, mu, status, iters, t0, active, history, tol) -> QpSolution:
    stat, comp, infeas = kkt_residuals(spec, x, mu)
    if status == OPTIMAL and max(stat, comp, infeas) > tol:
        status = NUMERICAL_ERROR
    return QpSolution(x, mu, spec.objective(x), status, stat, comp, infeas,
                      iters, time.perf_counter() - t0, sorted(active),
                      [-h for h in history])


def solve_unconstrained(spec: QpSpec, settings: Settings | None = None) -> QpSolution:
    """Minimizer of the quadratic ignoring all inequalities (Cholesky solve)."""
    settings = settings or Settings()
    t0 = time.perf_counter()
    try:
        x = sla.cho_solve(sla.cho_factor(spec.H, lower=True), -spec.f)
    except (np.linalg.LinAlgError, ValueError):
        x = np.full(spec.dim, np.nan)
        return QpSolution(x, np.zeros(0), np.nan, NUMERICAL_ERROR, np.inf, np.inf,
                          np.inf, 0, time.perf_counter() - t0)
    unconstrained = QpSpec(spec.H, spec.f)
    return _finish(unconstrained, x, np.zeros(0), OPTIMAL, 0, t0, [], [], settings.tolerance)


def _polish(spec, Hc, active):
    """Exact minimizer on the active set treated as equalities."""
    Hinv_f = sla.cho_solve(Hc, spec.f)
    if not active:
        return -Hinv_f, np.zeros(0)
    N = spec.A[active]
    Hinv_Nt = sla.cho_solve(Hc, N.T)
    M = N @ Hinv_Nt
    rhs = -spec.b[active] - N @ Hinv_f
    lam = np.linalg.solve(M, rhs)
    x = -Hinv_f - Hinv_Nt @ lam
    return x, lam


def solve(spec: QpSpec, settings: Settings | None = None) -> QpSolution:
    settings = settings or Settings()
    tol = settings.tolerance
    t0 = time.perf_counter()
    d, nc = spec.dim, spec.n_ineq
    try:
        Hc = sla.cho_factor(spec.H, lower=True)
    except (np.linalg.LinAlgError, ValueError):
        return QpSolution(np.full(d, np.nan), np.zeros(nc), np.nan, NUMERICAL_ERROR,
                          np.inf, np.inf, np.inf, 0, time.perf_counter() - t0)
    Lc = np.tril(Hc[0])
    if nc == 0:
        x = sla.cho_solve(Hc, -spec.f)
        return _finish(spec, x, np.zeros(0), OPTIMAL, 0, t0, [], [spec.objective(x)], tol)

    A, b = spec.A, spec.b
    row_norm = np.linalg.norm(A, axis=1)
    row_norm[row_norm == 0] = 1.0
    # L^{-1} n_i for every constraint normal n_i = -a_i, computed once
    Dt = -sla.solve_triangular(Lc, A.T, lower=True)

    active: list[int] = []
    u = np.zeros(0)
    Q = np.eye(d)
    R = np.zeros((d, 0))
    x = sla.cho_solve(Hc, -spec.f)

    warm = _warm_active_set(spec, settings)
    if warm and len(warm) <= d:
        try:
            xw, lam = _polish(spec, Hc, warm)
            if np.all(lam >= 0) and np.all(np.isfinite(xw)):
                Q, R = sla.qr(Dt[:, warm], mode="full")
                if np.min(np.abs(np.diag(R))) > 1e-10 * max(1.0, np.abs(R).max()):
                    x, u, active = xw, lam.copy(), list(warm)
                else:
                    Q, R = np.eye(d), np.zeros((d, 0))
        except np.linalg.LinAlgError:
            Q, R = np.eye(d), np.zeros((d, 0))

    history = [spec.objective(x)]
    iters = 0
    status = OPTIMAL

    def drop(j):
        nonlocal Q, R
        k = len(active)
        if k == 1:
            Q, R = np.eye(d), np.zeros((d, 0))
        else:
            Q, R = sla.qr_delete(Q, R, j, 1, which="col", overwrite_qr=True, check_finite=False)
        del active[j]

    while True:
        Ax = A @ x
        slack = Ax - b
        if active:
            slack[active] = -np.inf
        scale = max(1.0, np.abs(b).max(), np.abs(Ax).max())
        if slack.max() <= 0.1 * tol * scale:
            break
        p = int(np.argmax(slack / row_norm))
        if iters >= settings.max_iterations:
            status = MAX_ITER
            break
        dp = Dt[:, p]
        u_plus = np.append(u, 0.0)
        while True:
            iters += 1
            k = len(active)
            q = Q.T @ dp
            z = sla.solve_triangular(Lc, Q[:, k:] @ q[k:], lower=True, trans="T")
            if k:
                r = sla.solve_triangular(R[:k, :k], q[:k], lower=False)
            else:
                r = np.zeros(0)
            # partial (dual) step length
            t1, drop_idx = np.inf, -1
            pos = np.nonzero(r > 1e-14 * max(1.0, np.abs(r).max(initial=0)))[0]
            if pos.size:
                ratios = u_plus[pos] / r[pos]
                j = int(np.argmin(ratios))
                t1, drop_idx = float(ratios[j]), int(pos[j])
            # full (primal) step length
            zn = float(-A[p] @ z)
            znorm = np.linalg.norm(q[k:])
            if znorm > 1e-12 * max(1.0, np.linalg.norm(dp)) and zn > 0:
                t2 = float((A[p] @ x - b[p]) / zn)
            else:
                t2 = np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                status = INFEASIBLE
                break
            if not np.isfinite(t2):
                u_plus[:k] -= t * r
                u_plus[k] += t
                u_plus = np.delete(u_plus, drop_idx)
                drop(drop_idx)
                if iters >= settings.max_iterations:
                    status = MAX_ITER
                    break
                continue
            x = x + t * z
            u_plus[:k] -= t * r
            u_plus[k] += t
            history.append(spec.objective(x))
            if t2 <= t1:
                u = u_plus
                if k == 0:
                    Q, R = sla.qr(dp[:, None], mode="full")
                else:
                    Q, R = sla.qr_insert(Q, R, dp, k, which="col", check_finite=False)
                active.append(p)
                break
            u_plus = np.delete(u_plus, drop_idx)
            drop(drop_idx)
            if iters >= settings.max_iterations:
                status = MAX_ITER
                break
        if status != OPTIMAL:
            break

    if status == INFEASIBLE:
        mu = np.zeros(nc)
        mu[active] = u[: len(active)] if len(u) >= len(active) else 0.0
        return _finish(spec, x, mu, INFEASIBLE, iters, t0, active, history, tol)

    mu = np.zeros(nc)
    if active:
        mu[active] = np.maximum(u[: len(active)], 0.0)
    if status == OPTIMAL:
        try:
            xp, lam = _polish(spec, Hc, active)
            mu_p = np.zeros(nc)
            mu_p[active] = lam
            if max(kkt_residuals(spec, xp, mu_p)) <= max(kkt_residuals(spec, x, mu)):
                x, mu = xp, mu_p
        except np.linalg.LinAlgError:
            pass
    return _finish(spec, x, mu, status, iters, t0, active, history, tol)


def _warm_active_set(spec: QpSpec, settings: Settings) -> list[int]:
    """Constraints to seed the active set from a warm start, if any."""
    if spec.warm_mu is not None:
        mu = np.asarray(spec.warm_mu, dtype=float).ravel()
        if mu.size == spec.n_ineq:
            return [int(i) for i in np.nonzero(mu > 0)[0]]
    if spec.warm_x is not None:
        x = np.asarray(spec.warm_x, dtype=float).ravel()
        if x.size == spec.dim:
            slack = spec.A @ x - spec.b
            tight = np.abs(slack) <= 1e3 * settings.tolerance * np.maximum(1.0, np.abs(spec.b))
            return [int(i) for i in np.nonzero(tight)[0]][: spec.dim]
    return []


def dual_objective(spec: QpSpec, mu: np.ndarray) -> float:
    """Lagrange dual function ``min_x L(x, mu)`` at ``mu``."""
    g = spec.f + (spec.A.T @ mu if spec.n_ineq else 0.0)
    xmin = -np.linalg.solve(spec.H, g)
    return float(0.5 * xmin @ spec.H @ xmin + g @ xmin - (mu @ spec.b if spec.n_ineq else 0.0))
