"""DeePC problem assembly, receding-horizon control and optimality checks.

Both the full library ``H_L`` and the minimum-dimension library ``H_bar``
are handled by the same code path: the row layout ``[U_p; U_f; Y_p; Y_f]``
drives the split, never the column structure. The decision vector ``g`` is
the only variable left after substituting

    u = U_f g,  y = Y_f g,  sigma_u = U_p g - u_ini,  sigma_y = Y_p g - y_ini

into the regularized tracking objective, which gives

    min_g ||H g - b||_P^2 + lambda_g ||g||^2   s.t.  C g <= c

with ``b = [u_ini; 0; y_ini; y_r]`` and ``P = blkdiag(lambda_u I, R,
lambda_y I, Q)``.
"""
from __future__ import annotations

import csv
import json
import time
from collections import deque
from dataclasses import dataclass, field
from os import PathLike
from typing import Callable

import numpy as np

from .data_matrices import DEFAULT_RANK_TOL, BlockMatrix, DimensionError, numerical_rank
from .lti import LtiSystem, make_rng
from .qp import OPTIMAL, QpSolution, QpSpec, Settings, solve


class InfeasibleProblemError(RuntimeError):
    pass


@dataclass(frozen=True)
class LibraryPartition:
    Up: np.ndarray
    Uf: np.ndarray
    Yp: np.ndarray
    Yf: np.ndarray
    T_ini: int
    N: int
    m: int
    p: int

    @property
    def n_cols(self) -> int:
        return self.Up.shape[1]

    def stacked(self) -> np.ndarray:
        """``[U_p; U_f; Y_p; Y_f]``, i.e. the source library's row order."""
        return np.vstack([self.Up, self.Uf, self.Yp, self.Yf])


def partition(library, T_ini: int, N: int, m: int, p: int) -> LibraryPartition:
    """Split a stacked ``[u-rows; y-rows]`` library into past/future blocks."""
    H = np.asarray(library.entries if isinstance(library, BlockMatrix) else library, dtype=float)
    L = T_ini + N
    expected = (m + p) * L
    if H.ndim != 2 or H.shape[0] != expected:
        raise DimensionError(
            f"library has {H.shape[0] if H.ndim == 2 else H.shape} rows, expected "
            f"(m+p)(T_ini+N) = ({m}+{p})({T_ini}+{N}) = {expected}"
        )
    a, b_, c = m * T_ini, m * L, m * L + p * T_ini
    return LibraryPartition(H[:a], H[a:b_], H[b_:c], H[c:], T_ini, N, m, p)


def _weight(W, size: int, block: int, name: str) -> np.ndarray:
    """Expand a scalar / per-channel vector / per-step block / full matrix."""
    W = np.asarray(W, dtype=float)
    steps = size // block
    if W.ndim == 0:
        M = float(W) * np.eye(size)
    elif W.ndim == 1 and W.size == block:
        M = np.kron(np.eye(steps), np.diag(W))
    elif W.ndim == 1 and W.size == size:
        M = np.diag(W)
    elif W.shape == (block, block):
        M = np.kron(np.eye(steps), W)
    elif W.shape == (size, size):
        M = W
    else:
        raise DimensionError(f"{name} of shape {W.shape} fits neither {block} nor {size}")
    if not np.allclose(M, M.T):
        raise ValueError(f"{name} must be symmetric")
    return M


def _bound(v, m: int, name: str):
    if v is None:
        return None
    v = np.broadcast_to(np.asarray(v, dtype=float), (m,)).copy()
    return v


@dataclass
class DeepcConfig:
    """Horizons, weights, regularizers and constraints of a DeePC controller.

    ``Q``/``R`` may be scalars, per-channel vectors, per-step blocks or full
    ``pN x pN`` / ``mN x mN`` matrices. Box bounds are per channel and
    repeated over the horizon; ``G_u u <= h_u`` and ``G_y y <= h_y`` take the
    whole predicted stack. ``reference`` is a length-``p`` setpoint, a
    length-``pN`` stack, or a callable ``t -> pN`` stack.
    """

    T_ini: int
    N: int
    Q: object = 1.0
    R: object = 1.0
    lambda_u: float = 1.0
    lambda_y: float = 1.0
    lambda_g: float = 1.0
    u_lo: object = None
    u_hi: object = None
    y_lo: object = None
    y_hi: object = None
    G_u: np.ndarray | None = None
    h_u: np.ndarray | None = None
    G_y: np.ndarray | None = None
    h_y: np.ndarray | None = None
    apply_steps: int = 1
    reference: object = 0.0

    def __post_init__(self):
        if self.T_ini < 1 or self.N < 1:
            raise ValueError("T_ini and N must be positive")
        if not 1 <= self.apply_steps < self.N:
            raise ValueError(f"apply_steps must lie in [1, N={self.N})")
        for lo, hi, name in ((self.u_lo, self.u_hi, "u"), (self.y_lo, self.y_hi, "y")):
            if lo is not None and hi is not None and np.any(np.asarray(lo) > np.asarray(hi)):
                raise ValueError(f"{name} bounds are not ordered (lo > hi)")

    @property
    def L(self) -> int:
        return self.T_ini + self.N

    def lambdas_positive(self) -> bool:
        return min(self.lambda_u, self.lambda_y, self.lambda_g) > 0

    def reference_stack(self, t: int, p: int) -> np.ndarray:
        ref = self.reference
        if callable(ref):
            r = np.asarray(ref(t), dtype=float).ravel()
        else:
            r = np.asarray(ref, dtype=float).ravel()
            if r.size in (1, p):
                r = np.tile(np.broadcast_to(r, (p,)), self.N)
        if r.size != p * self.N:
            raise DimensionError(f"reference stack has length {r.size}, expected pN={p * self.N}")
        return r

    def stage_weights(self, m: int, p: int) -> tuple[np.ndarray, np.ndarray]:
        """First-step blocks of Q and R, used for realized stage costs."""
        Qf = _weight(self.Q, p * self.N, p, "Q")
        Rf = _weight(self.R, m * self.N, m, "R")
        return Qf[:p, :p], Rf[:m, :m]


@dataclass(frozen=True)
class QpProblem:
    """Condensed DeePC problem ``min 1/2 g'Hg + f'g + const  s.t.  C g <= c``."""

    hessian: np.ndarray
    linear: np.ndarray
    constant: float
    C: np.ndarray
    c: np.ndarray
    part: LibraryPartition
    library: np.ndarray
    b: np.ndarray
    weights: np.ndarray          # P
    lambda_g: float

    @property
    def dim(self) -> int:
        return self.linear.size

    def spec(self, warm_x=None, warm_mu=None) -> QpSpec:
        return QpSpec(self.hessian, self.linear, self.C, self.c, warm_x, warm_mu)

    def objective(self, g: np.ndarray) -> float:
        r = self.library @ g - self.b
        return float(r @ self.weights @ r + self.lambda_g * g @ g)

    def recover(self, g: np.ndarray) -> dict[str, np.ndarray]:
        T_ini, N, m, p = self.part.T_ini, self.part.N, self.part.m, self.part.p
        u_ini = self.b[: m * T_ini]
        y_ini = self.b[m * (T_ini + N): m * (T_ini + N) + p * T_ini]
        return {
            "u": self.part.Uf @ g,
            "y": self.part.Yf @ g,
            "sigma_u": self.part.Up @ g - u_ini,
            "sigma_y": self.part.Yp @ g - y_ini,
        }


@dataclass
class SolveCertificate:
    g_star: np.ndarray
    mu_star: np.ndarray
    stationarity: float
    complementarity: float
    primal_infeasibility: float
    iterations: int
    wall_time: float
    status: str = OPTIMAL
    dual_feasible: bool = True


def _constraints(part: LibraryPartition, cfg: DeepcConfig) -> tuple[np.ndarray, np.ndarray]:
    rows, rhs = [], []
    N, m, p = part.N, part.m, part.p

    def add_box(F, lo, hi, ch):
        lo, hi = _bound(lo, ch, "lo"), _bound(hi, ch, "hi")
        if hi is not None:
            h = np.tile(hi, N)
            keep = np.isfinite(h)
            rows.append(F[keep])
            rhs.append(h[keep])
        if lo is not None:
            l_ = np.tile(lo, N)
            keep = np.isfinite(l_)
            rows.append(-F[keep])
            rhs.append(-l_[keep])

    add_box(part.Uf, cfg.u_lo, cfg.u_hi, m)
    add_box(part.Yf, cfg.y_lo, cfg.y_hi, p)
    for G, h, F, name in ((cfg.G_u, cfg.h_u, part.Uf, "G_u"), (cfg.G_y, cfg.h_y, part.Yf, "G_y")):
        if G is None:
            continue
        G = np.atleast_2d(np.asarray(G, dtype=float))
        if G.shape[1] != F.shape[0]:
            raise DimensionError(f"{name} has {G.shape[1]} columns, expected {F.shape[0]}")
        rows.append(G @ F)
        rhs.append(np.asarray(h, dtype=float).ravel())
    if not rows:
        return np.zeros((0, part.n_cols)), np.zeros(0)
    return np.vstack(rows), np.concatenate(rhs)


def assemble(part: LibraryPartition, cfg: DeepcConfig, u_ini, y_ini, y_r) -> QpProblem:
    """Condensed QP for any partitioned library (full or reduced)."""
    if not cfg.lambdas_positive():
        raise ValueError(
            f"regularizers must be positive, got lambda_u={cfg.lambda_u}, "
            f"lambda_y={cfg.lambda_y}, lambda_g={cfg.lambda_g}"
        )
    T_ini, N, m, p = part.T_ini, part.N, part.m, part.p
    if (T_ini, N) != (cfg.T_ini, cfg.N):
        raise DimensionError(f"partition horizons {(T_ini, N)} differ from config {(cfg.T_ini, cfg.N)}")
    u_ini = np.asarray(u_ini, dtype=float).ravel()
    y_ini = np.asarray(y_ini, dtype=float).ravel()
    y_r = np.asarray(y_r, dtype=float).ravel()
    for vec, size, name in ((u_ini, m * T_ini, "u_ini"), (y_ini, p * T_ini, "y_ini"), (y_r, p * N, "y_r")):
        if vec.size != size:
            raise DimensionError(f"{name} has length {vec.size}, expected {size}")
    H = part.stacked()
    b = np.concatenate([u_ini, np.zeros(m * N), y_ini, y_r])
    Qf = _weight(cfg.Q, p * N, p, "Q")
    Rf = _weight(cfg.R, m * N, m, "R")
    P = np.zeros((H.shape[0], H.shape[0]))
    a1, a2, a3 = m * T_ini, m * (T_ini + N), m * (T_ini + N) + p * T_ini
    P[:a1, :a1] = cfg.lambda_u * np.eye(a1)
    P[a1:a2, a1:a2] = Rf
    P[a2:a3, a2:a3] = cfg.lambda_y * np.eye(a3 - a2)
    P[a3:, a3:] = Qf
    if np.count_nonzero(P - np.diag(np.diag(P))) == 0:
        PH = np.diag(P)[:, None] * H
    else:
        PH = P @ H
    hess = 2.0 * (H.T @ PH)
    hess = 0.5 * (hess + hess.T)
    hess[np.diag_indices_from(hess)] += 2.0 * cfg.lambda_g
    lin = -2.0 * (PH.T @ b)
    const = float(b @ P @ b)
    C, c = _constraints(part, cfg)
    return QpProblem(hess, lin, const, C, c, part, H, b, P, cfg.lambda_g)


def assemble_full(part: LibraryPartition, cfg: DeepcConfig, u_ini, y_ini, y_r) -> QpProblem:
    """DeePC over the raw data library; decision dimension = library columns."""
    return assemble(part, cfg, u_ini, y_ini, y_r)


def assemble_reduced(part: LibraryPartition, cfg: DeepcConfig, u_ini, y_ini, y_r) -> QpProblem:
    """Minimum-dimension DeePC: ``part`` comes from ``H_bar``, dimension ``r``.

    The inequality matrix equals ``C V1`` of the full problem because the
    future blocks of ``H_bar`` are ``U_f V1`` and ``Y_f V1``.
    """
    return assemble(part, cfg, u_ini, y_ini, y_r)


def solve_problem(problem: QpProblem, settings: Settings | None = None,
                  warm_x=None, warm_mu=None) -> SolveCertificate:
    sol: QpSolution = solve(problem.spec(warm_x, warm_mu), settings)
    stat, comp, infeas = kkt_residuals(problem, sol.x, sol.mu)
    return SolveCertificate(sol.x, sol.mu, stat, comp, infeas, sol.iterations,
                            sol.wall_time, sol.status, bool(np.all(sol.mu >= 0)))


def kkt_residuals(problem: QpProblem, g, mu=None) -> tuple[float, float, float]:
    """Unscaled stationarity, complementarity and infeasibility norms.

    stationarity = ||2 H'P(Hg - b) + 2 lambda_g g + C'mu||_2,
    complementarity = |mu'(Cg - c)|, infeasibility = ||max(Cg - c, 0)||_2.
    """
    if isinstance(g, SolveCertificate):
        g, mu = g.g_star, g.mu_star
    g = np.asarray(g, dtype=float)
    mu = np.asarray(mu, dtype=float)
    H, P, b = problem.library, problem.weights, problem.b
    grad = 2.0 * H.T @ (P @ (H @ g - b)) + 2.0 * problem.lambda_g * g
    if problem.c.size:
        grad = grad + problem.C.T @ mu
        slack = problem.C @ g - problem.c
        comp = float(abs(mu @ slack))
        infeas = float(np.linalg.norm(np.maximum(slack, 0.0)))
    else:
        comp = infeas = 0.0
    return float(np.linalg.norm(grad)), comp, infeas


@dataclass
class EquivalenceReport:
    g_transfer_error: float
    solution_error: float
    prediction_error: float
    tol: float
    passed_transfer: bool
    passed_solution: bool
    passed_prediction: bool
    hypothesis_ok: bool
    notes: list = field(default_factory=list)
    full: SolveCertificate | None = None
    reduced: SolveCertificate | None = None

    @property
    def passed(self) -> bool:
        return self.passed_transfer and self.passed_solution and self.passed_prediction

    def as_dict(self) -> dict:
        return {
            "g_transfer_error": self.g_transfer_error,
            "solution_error": self.solution_error,
            "prediction_error": self.prediction_error,
            "tol": self.tol,
            "passed": self.passed,
            "hypothesis_ok": self.hypothesis_ok,
            "notes": list(self.notes),
        }


def verify_theorem1(full: QpProblem, reduced: QpProblem, V1, tol: float = 1e-6,
                    settings: Settings | None = None,
                    rank_tol: float = DEFAULT_RANK_TOL) -> EquivalenceReport:
    """Solve both problems and compare them through ``V1``.

    Checks ``g_bar* = V1' g*``, equality of the recovered
    ``(u, y, sigma_u, sigma_y)``, and ``H g* = H_bar g_bar*``, each relative
    to ``1 + norm`` of the reference quantity. A reduced library whose rank
    falls short of the full library's numerical rank is flagged as a
    hypothesis violation instead of raising.
    """
    V1 = np.asarray(V1, dtype=float)
    notes = []
    hyp = True
    if full.lambda_g <= 0 or reduced.lambda_g <= 0:
        hyp = False
        notes.append("regularizers must be positive")
    sv = np.linalg.svd(full.library, compute_uv=False)
    r_full = numerical_rank(sv, rank_tol)
    if V1.shape[1] != r_full:
        hyp = False
        notes.append(f"reduced rank {V1.shape[1]} != numerical rank {r_full} of the full library")
    lib_gap = np.linalg.norm(full.library @ V1 - reduced.library) / max(1.0, sv[0])
    if lib_gap > 1e-8:
        hyp = False
        notes.append(f"H_bar differs from H V1 (relative gap {lib_gap:.2e})")

    cf = solve_problem(full, settings)
    cr = solve_problem(reduced, settings)
    if cf.status != OPTIMAL or cr.status != OPTIMAL:
        raise RuntimeError(f"solver failed: full={cf.status}, reduced={cr.status}")
    g, gb = cf.g_star, cr.g_star
    e_a = float(np.linalg.norm(gb - V1.T @ g) / (1.0 + np.linalg.norm(g)))
    rf, rr = full.recover(g), reduced.recover(gb)
    e_b = max(float(np.linalg.norm(rf[k] - rr[k]) / (1.0 + np.linalg.norm(rf[k]))) for k in rf)
    Hg = full.library @ g
    e_c = float(np.linalg.norm(Hg - reduced.library @ gb) / (1.0 + np.linalg.norm(Hg)))
    return EquivalenceReport(e_a, e_b, e_c, tol, e_a <= tol, e_b <= tol, e_c <= tol, hyp,
                          notes, cf, cr)


# ---------------------------------------------------------------------------
# receding horizon

class LtiPlant:
    """Plant interface over an :class:`LtiSystem`.

    ``apply(u)`` returns ``y(t) = C x(t) + D u(t)`` and advances the state.
    Optional measurement noise is drawn uniformly from ``noise_box``.
    """

    def __init__(self, sys: LtiSystem, x0=None, noise_box=None, seed=None):
        self.sys = sys
        self.x = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float).copy()
        self.noise_box = noise_box
        self._rng = make_rng(seed) if noise_box is not None else None

    def apply(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).ravel()
        y = self.sys.C @ self.x + self.sys.D @ u
        self.x = self.sys.A @ self.x + self.sys.B @ u
        if self._rng is not None:
            lo, hi = self.noise_box
            y = y + self._rng.uniform(lo, hi, size=y.shape)
        return y


class DeepcController:
    """Stateful receding-horizon controller over one data library.

    Keeps the last ``T_ini`` input/output samples and the previous solution
    (used only to warm-start the next solve).
    """

    def __init__(self, library, cfg: DeepcConfig, m: int, p: int,
                 settings: Settings | None = None, name: str = "deepc"):
        self.part = partition(library, cfg.T_ini, cfg.N, m, p)
        self.cfg = cfg
        self.m, self.p = m, p
        self.settings = settings or Settings()
        self.name = name
        self.u_hist: deque = deque(maxlen=cfg.T_ini)
        self.y_hist: deque = deque(maxlen=cfg.T_ini)
        self._warm_mu = None

    @property
    def dim(self) -> int:
        return self.part.n_cols

    @property
    def warm(self) -> bool:
        return len(self.u_hist) == self.cfg.T_ini

    def observe(self, u, y) -> None:
        self.u_hist.append(np.asarray(u, dtype=float).ravel())
        self.y_hist.append(np.asarray(y, dtype=float).ravel())

    def window(self) -> tuple[np.ndarray, np.ndarray]:
        return np.concatenate(self.u_hist), np.concatenate(self.y_hist)

    def assemble(self, t: int) -> QpProblem:
        u_ini, y_ini = self.window()
        return assemble(self.part, self.cfg, u_ini, y_ini, self.cfg.reference_stack(t, self.p))

    def plan(self, t: int) -> tuple[np.ndarray, SolveCertificate, float]:
        """Solve at time ``t``; returns (N x m input plan, certificate, seconds)."""
        if not self.warm:
            raise RuntimeError(f"controller needs {self.cfg.T_ini} past samples, has {len(self.u_hist)}")
        t0 = time.perf_counter()
        prob = self.assemble(t)
        cert = solve_problem(prob, self.settings, warm_mu=self._warm_mu)
        elapsed = time.perf_counter() - t0
        if cert.status != OPTIMAL:
            raise InfeasibleProblemError(
                f"{self.name}: QP at t={t} returned {cert.status} "
                f"(stationarity={cert.stationarity:.2e}, infeasibility={cert.primal_infeasibility:.2e})"
            )
        self._warm_mu = cert.mu_star
        u_plan = (self.part.Uf @ cert.g_star).reshape(self.cfg.N, self.m)
        return u_plan, cert, elapsed


@dataclass
class StepResult:
    t: int
    inputs: np.ndarray
    outputs: np.ndarray
    certificate: SolveCertificate
    solve_time: float


def receding_horizon_step(controller: DeepcController, plant, t: int) -> StepResult:
    """Plan, apply the first ``apply_steps`` inputs, slide the window."""
    u_plan, cert, elapsed = controller.plan(t)
    l = controller.cfg.apply_steps
    ys = []
    for k in range(l):
        y = plant.apply(u_plan[k])
        controller.observe(u_plan[k], y)
        ys.append(y)
    return StepResult(t, u_plan[:l].copy(), np.array(ys), cert, elapsed)


@dataclass
class ClosedLoopLog:
    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    stage_cost: np.ndarray
    solve_ms: np.ndarray
    iters: np.ndarray
    dim: int
    seed: int
    name: str = ""
    warmup_u: np.ndarray | None = None
    warmup_y: np.ndarray | None = None
    reference: np.ndarray | None = None
    cost_start: int = 0

    @property
    def accumulated_cost(self) -> float:
        """Sum of stage costs from ``cost_start`` on."""
        return float(self.stage_cost[self.cost_start:].sum())

    def solve_times(self) -> np.ndarray:
        return self.solve_ms[np.isfinite(self.solve_ms)]

    def summary(self) -> dict:
        st = self.solve_times()
        return {
            "name": self.name,
            "decision_dimension": self.dim,
            "steps": int(self.t.size),
            "accumulated_cost": self.accumulated_cost,
            "cost_start": self.cost_start,
            "mean_solve_ms": float(st.mean()) if st.size else float("nan"),
            "median_solve_ms": float(np.median(st)) if st.size else float("nan"),
            "mean_iterations": float(self.iters[self.iters >= 0].mean()) if st.size else 0.0,
            "seed": self.seed,
        }

    def to_csv(self, path: str | PathLike) -> None:
        m, p = self.u.shape[1], self.y.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"u{i}" for i in range(m)] + [f"y{i}" for i in range(p)]
                       + ["stage_cost", "solve_ms", "iters"])
            for k in range(self.t.size):
                w.writerow([int(self.t[k])] + [repr(float(v)) for v in self.u[k]]
                           + [repr(float(v)) for v in self.y[k]]
                           + [repr(float(self.stage_cost[k])),
                              "" if not np.isfinite(self.solve_ms[k]) else repr(float(self.solve_ms[k])),
                              int(self.iters[k])])

    def write_summary(self, path: str | PathLike, extra: dict | None = None) -> None:
        doc = self.summary()
        if extra:
            doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")


def warmup_inputs(cfg: DeepcConfig, m: int, seed, amplitude: float = 0.1) -> np.ndarray:
    """Small uniform inputs inside the input box for filling the first window."""
    rng = make_rng(seed)
    lo = -amplitude * np.ones(m)
    hi = amplitude * np.ones(m)
    if cfg.u_lo is not None:
        lo = np.maximum(lo, _bound(cfg.u_lo, m, "lo"))
    if cfg.u_hi is not None:
        hi = np.minimum(hi, _bound(cfg.u_hi, m, "hi"))
    return rng.uniform(lo, hi, size=(cfg.T_ini, m))


def run_closed_loop(plant, controller: DeepcController, steps: int, seed=0,
                    warmup_amplitude: float = 0.1, warmup_u=None, cost_start: int | None = None,
                    on_step: Callable[[StepResult], None] | None = None) -> ClosedLoopLog:
    """Warm up for ``T_ini`` samples, then control for ``steps`` time steps.

    Stage cost at time ``t`` is ``||y(t) - y_r(t)||_Q1^2 + ||u(t)||_R1^2``
    with ``Q1``, ``R1`` the first-step blocks of ``Q``, ``R`` and ``y(t)`` the
    output measured when ``u(t)`` is applied. The accumulated cost starts at
    ``cost_start``; by default 1 for strictly proper plants (``D = 0``),
    whose ``y(0)`` precedes any control action, else 0. Timing covers
    assembly and solve only.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    cfg, m, p = controller.cfg, controller.m, controller.p
    if cost_start is None:
        sys = getattr(plant, "sys", None)
        cost_start = 1 if sys is not None and not np.any(sys.D) else 0
    if warmup_u is None:
        warmup_u = warmup_inputs(cfg, m, seed, warmup_amplitude)
    warmup_u = np.asarray(warmup_u, dtype=float).reshape(-1, m)
    wy = []
    for u in warmup_u:
        y = plant.apply(u)
        controller.observe(u, y)
        wy.append(y)
    Q1, R1 = cfg.stage_weights(m, p)
    ts, us, ys, costs, ms, its, refs = [], [], [], [], [], [], []
    t = 0
    while t < steps:
        res = receding_horizon_step(controller, plant, t)
        ref = cfg.reference_stack(t, p).reshape(cfg.N, p)
        for k in range(res.inputs.shape[0]):
            if t >= steps:
                break
            u, y = res.inputs[k], res.outputs[k]
            e = y - ref[k]
            ts.append(t)
            us.append(u)
            ys.append(y)
            refs.append(ref[k])
            costs.append(float(e @ Q1 @ e + u @ R1 @ u))
            ms.append(1e3 * res.solve_time if k == 0 else np.nan)
            its.append(res.certificate.iterations if k == 0 else -1)
            t += 1
        if on_step is not None:
            on_step(res)
    return ClosedLoopLog(np.array(ts), np.array(us), np.array(ys), np.array(costs),
                         np.array(ms, dtype=float), np.array(its), controller.dim,
                         int(seed) if np.isscalar(seed) else 0, controller.name,
                         warmup_u, np.array(wy), np.array(refs), cost_start)
