"""Discrete-time LTI plants: simulation, data collection and structural factors."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from os import PathLike

import numpy as np
import yaml

from .data_matrices import DEFAULT_RANK_TOL, DimensionError, Trajectory, numerical_rank

#: Generator algorithm used for every seeded draw; echoed into reports.
RNG_ALGORITHM = "numpy.random.Generator(PCG64)"


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


class UnobservableError(ValueError):
    """No observability index exists (the pair (C, A) is unobservable)."""


@dataclass(frozen=True)
class LtiSystem:
    """``x(t+1) = A x(t) + B u(t)``, ``y(t) = C x(t) + D u(t)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, A is {n}x{n}")
        if C.shape[1] != n:
            raise DimensionError(f"C has {C.shape[1]} columns, A is {n}x{n}")
        D = np.zeros((C.shape[0], B.shape[1])) if self.D is None else np.atleast_2d(
            np.asarray(self.D, dtype=float))
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(f"D must be {C.shape[0]}x{B.shape[1]}, got {D.shape}")
        for name, M in zip("ABCD", (A, B, C, D)):
            M.flags.writeable = False
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def controllability_matrix(self) -> np.ndarray:
        blocks, AkB = [], self.B
        for _ in range(self.n):
            blocks.append(AkB)
            AkB = self.A @ AkB
        return np.hstack(blocks)

    def is_controllable(self, rank_tol: float = DEFAULT_RANK_TOL) -> bool:
        sv = np.linalg.svd(self.controllability_matrix(), compute_uv=False)
        return numerical_rank(sv, rank_tol) == self.n

    def digest(self) -> str:
        """Short content hash used to tag data manifests."""
        h = hashlib.sha256()
        for M in (self.A, self.B, self.C, self.D):
            h.update(np.ascontiguousarray(M).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class StructuralFactors:
    conv: np.ndarray   # T_L, pL x mL
    obs: np.ndarray    # O_L, pL x n
    depth: int

    def io_factor(self) -> np.ndarray:
        """``[[I, 0], [T_L, O_L]]`` mapping (input stack, initial state) to (u, y)."""
        mL = self.conv.shape[1]
        n = self.obs.shape[1]
        top = np.hstack([np.eye(mL), np.zeros((mL, n))])
        return np.vstack([top, np.hstack([self.conv, self.obs])])


def benchmark_plant() -> LtiSystem:
    """Four-state, two-input, two-output benchmark plant."""
    A = [[0.921, 0, 0.041, 0],
         [0, 0.918, 0, 0.033],
         [0, 0, 0.924, 0],
         [0, 0, 0, 0.937]]
    B = [[0.017, 0.001],
         [0.001, 0.023],
         [0, 0.061],
         [0.072, 0]]
    C = [[1, 0, 0, 0],
         [0, 1, 0, 0]]
    return LtiSystem(A, B, C, np.zeros((2, 2)))


def simulate(sys: LtiSystem, x0, u) -> tuple[Trajectory, Trajectory]:
    """Propagate the plant from ``x0`` under input ``u``.

    Returns state and output trajectories with the same length as ``u``;
    ``x[t]`` is the state before ``u[t]`` is applied.
    """
    u = u if isinstance(u, Trajectory) else Trajectory(np.asarray(u, dtype=float))
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != sys.n:
        raise DimensionError(f"x0 has length {x0.size}, plant has n={sys.n}")
    if u.channels != sys.m:
        raise DimensionError(f"input has {u.channels} channels, plant has m={sys.m}")
    T = u.length
    X = np.empty((T, sys.n))
    x = x0
    U = u.samples
    for t in range(T):
        X[t] = x
        x = sys.A @ x + sys.B @ U[t]
    Y = X @ sys.C.T + U @ sys.D.T
    return Trajectory(X), Trajectory(Y)


def collect_data(
    sys: LtiSystem,
    T: int,
    input_box=(-1.0, 1.0),
    noise_box=(0.0, 0.0),
    seed=0,
    x0=None,
) -> tuple[Trajectory, Trajectory]:
    """Offline experiment: i.i.d. uniform inputs, uniform noise on outputs only.

    ``input_box`` and ``noise_box`` are ``(lo, hi)`` pairs of scalars or
    per-channel arrays. Inputs are drawn before noise from one generator, so
    a given seed fixes both.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    rng = make_rng(seed)
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (sys.m,)) for b in input_box)
    u = rng.uniform(lo, hi, size=(T, sys.m))
    x0 = np.zeros(sys.n) if x0 is None else x0
    _, y = simulate(sys, x0, u)
    nlo, nhi = (np.broadcast_to(np.asarray(b, dtype=float), (sys.p,)) for b in noise_box)
    noise = rng.uniform(nlo, nhi, size=(T, sys.p))
    return Trajectory(u), Trajectory(y.samples + noise)


def observability_matrix(sys: LtiSystem, depth: int) -> np.ndarray:
    blocks, CAk = [], sys.C
    for _ in range(depth):
        blocks.append(CAk)
        CAk = CAk @ sys.A
    return np.vstack(blocks)


def observability_index(sys: LtiSystem, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Smallest ``l`` with ``rank [C; CA; ...; CA^(l-1)] = n``."""
    scale = max(np.linalg.norm(sys.C, 2), 1e-300)
    for l in range(1, sys.n + 1):
        sv = np.linalg.svd(observability_matrix(sys, l), compute_uv=False)
        # absolute floor relative to ||C|| so C = 0 is never "full rank"
        if np.count_nonzero(sv > rank_tol * max(sv[0], scale)) == sys.n:
            return l
    raise UnobservableError(f"(C, A) is unobservable: rank < n={sys.n} for all depths <= n")


def structural_factors(sys: LtiSystem, L: int) -> StructuralFactors:
    """Convolution matrix ``T_L`` and extended observability matrix ``O_L``."""
    if L < 1:
        raise ValueError(f"depth must be >= 1, got {L}")
    p, m = sys.p, sys.m
    markov = [sys.D]
    CAk = sys.C
    for _ in range(L - 1):
        markov.append(CAk @ sys.B)
        CAk = CAk @ sys.A
    conv = np.zeros((p * L, m * L))
    for i in range(L):
        for j in range(i + 1):
            conv[i * p:(i + 1) * p, j * m:(j + 1) * m] = markov[i - j]
    return StructuralFactors(conv, observability_matrix(sys, L), L)


def random_plant(n: int, m: int, p: int, rng: np.random.Generator,
                 spectral_radius: float = 0.95, feedthrough: bool = False) -> LtiSystem:
    """Random plant, redrawn until it is stable and minimal."""
    while True:
        Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
        eig = rng.uniform(-spectral_radius, spectral_radius, size=n)
        A = Qm @ np.diag(eig) @ Qm.T
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        D = rng.standard_normal((p, m)) if feedthrough else np.zeros((p, m))
        sys = LtiSystem(A, B, C, D)
        if not sys.is_controllable(1e-6):
            continue
        try:
            observability_index(sys, 1e-6)
        except UnobservableError:
            continue
        return sys


def save_plant(path: str | PathLike, sys: LtiSystem) -> None:
    """Write a plant file (YAML: dimension header plus nested-list matrices)."""
    doc = {
        "n": sys.n, "m": sys.m, "p": sys.p,
        "A": sys.A.tolist(), "B": sys.B.tolist(),
        "C": sys.C.tolist(), "D": sys.D.tolist(),
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_plant(path: str | PathLike) -> LtiSystem:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    try:
        sys = LtiSystem(doc["A"], doc["B"], doc["C"], doc.get("D"))
    except KeyError as exc:
        raise ValueError(f"{path}: missing matrix {exc}") from None
    for key in ("n", "m", "p"):
        if key in doc and doc[key] != getattr(sys, key):
            raise DimensionError(f"{path}: header {key}={doc[key]} disagrees with matrices")
    return sys
