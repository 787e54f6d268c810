"""SVD-based column reduction of data libraries.

The reduced library ``H_bar = H V1 = W1 S1`` keeps the range of ``H`` with
only ``r`` columns; ``V1`` maps full decision vectors to reduced ones.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from os import PathLike

import numpy as np

from .data_matrices import DEFAULT_RANK_TOL, BlockMatrix, DimensionError, numerical_rank


class SvdConvergenceError(ArithmeticError):
    pass


class ZeroLibraryError(ValueError):
    pass


@dataclass(frozen=True)
class SvdBundle:
    singular_values: np.ndarray
    W: np.ndarray       # left singular vectors, rows x k
    V: np.ndarray       # right singular vectors, cols x k
    source_shape: tuple[int, int]

    def reconstruct(self) -> np.ndarray:
        return (self.W * self.singular_values) @ self.V.T


@dataclass(frozen=True)
class RankRule:
    """How to pick the retained rank.

    ``kind`` is one of ``fixed``, ``threshold``, ``log_gap``, ``structural``
    or ``truncate_columns``. The last keeps the first ``r`` raw columns of
    the library instead of singular directions; it exists as a baseline.
    """

    kind: str = "log_gap"
    r: int | None = None
    rel_tol: float = 1e-6
    min_decades: float = 1.0
    mL_plus_n: int | None = None

    KINDS = ("fixed", "threshold", "log_gap", "structural", "truncate_columns")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown rank rule {self.kind!r}; expected one of {self.KINDS}")
        if self.kind in ("fixed", "truncate_columns") and (self.r is None or self.r < 1):
            raise ValueError(f"{self.kind} rule needs r >= 1")
        if self.kind == "structural" and (self.mL_plus_n is None or self.mL_plus_n < 1):
            raise ValueError("structural rule needs mL_plus_n >= 1")

    @classmethod
    def fixed(cls, r: int) -> "RankRule":
        return cls("fixed", r=r)

    @classmethod
    def threshold(cls, rel_tol: float = 1e-6) -> "RankRule":
        return cls("threshold", rel_tol=rel_tol)

    @classmethod
    def log_gap(cls, min_decades: float = 1.0, rel_tol: float = 1e-6) -> "RankRule":
        return cls("log_gap", min_decades=min_decades, rel_tol=rel_tol)

    @classmethod
    def structural(cls, m: int, L: int, n: int) -> "RankRule":
        return cls("structural", mL_plus_n=m * L + n)

    @classmethod
    def truncate_columns(cls, r: int) -> "RankRule":
        return cls("truncate_columns", r=r)

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("fixed", "truncate_columns"):
            d["r"] = self.r
        elif self.kind == "threshold":
            d["rel_tol"] = self.rel_tol
        elif self.kind == "log_gap":
            d.update(min_decades=self.min_decades, fallback_rel_tol=self.rel_tol)
        else:
            d["mL_plus_n"] = self.mL_plus_n
        return d


@dataclass(frozen=True)
class ReducedLibrary:
    H_bar: np.ndarray
    V1: np.ndarray
    rank: int
    retained: np.ndarray
    discarded: np.ndarray
    rule: RankRule
    block_height: int = 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.H_bar.shape

    def as_block(self) -> BlockMatrix:
        structure = "hankel" if self.rule.kind == "truncate_columns" else "unstructured"
        return BlockMatrix(self.H_bar, self.block_height, structure)

    def to_reduced(self, g: np.ndarray) -> np.ndarray:
        """Map a full decision vector ``g`` to ``V1^T g``."""
        return self.V1.T @ g


def _entries(M) -> np.ndarray:
    return np.asarray(M.entries if isinstance(M, BlockMatrix) else M, dtype=float)


def svd(library) -> SvdBundle:
    """Thin SVD, ``min(rows, cols)`` triplets in non-increasing order."""
    H = _entries(library)
    if H.size == 0:
        raise DimensionError("cannot decompose an empty matrix")
    if not np.all(np.isfinite(H)):
        raise SvdConvergenceError(f"library {H.shape} contains non-finite entries")
    try:
        W, s, Vt = np.linalg.svd(H, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(
            f"LAPACK gesdd did not converge on a {H.shape} matrix "
            f"(Frobenius norm {np.linalg.norm(H):.3e}): {exc}"
        ) from exc
    return SvdBundle(s, W, Vt.T, H.shape)


def select_rank(bundle: SvdBundle, rule: RankRule) -> int:
    s = np.asarray(bundle.singular_values, dtype=float)
    if s.size == 0 or s[0] <= 0.0:
        raise ZeroLibraryError("zero library: no positive singular values")
    kmax = s.size
    if rule.kind in ("fixed", "truncate_columns"):
        return int(min(max(rule.r, 1), kmax))
    if rule.kind == "threshold":
        return max(1, int(np.count_nonzero(s > rule.rel_tol * s[0])))
    if rule.kind == "structural":
        return max(1, min(rule.mL_plus_n, numerical_rank(s, DEFAULT_RANK_TOL)))
    # log_gap
    if kmax == 1:
        return 1
    logs = np.log10(np.maximum(s, np.finfo(float).tiny))
    gaps = logs[:-1] - logs[1:]
    i = int(np.argmax(gaps))
    if gaps[i] >= rule.min_decades:
        return i + 1
    return max(1, int(np.count_nonzero(s > rule.rel_tol * s[0])))


def reduce(library, rule: RankRule | None = None, bundle: SvdBundle | None = None) -> ReducedLibrary:
    """Minimum-dimension library ``H_bar = W1 S1`` with transfer map ``V1``.

    A precomputed ``bundle`` may be passed to avoid a second decomposition.
    """
    rule = rule or RankRule.log_gap()
    H = _entries(library)
    block_height = library.block_height if isinstance(library, BlockMatrix) else 1
    bundle = bundle or svd(H)
    r = select_rank(bundle, rule)
    s = bundle.singular_values
    if rule.kind == "truncate_columns":
        V1 = np.eye(H.shape[1], r)
        H_bar = H[:, :r].copy()
    else:
        V1 = bundle.V[:, :r].copy()
        H_bar = bundle.W[:, :r] * s[:r]
    return ReducedLibrary(H_bar, V1, r, s[:r].copy(), s[r:].copy(), rule, block_height)


def orth_basis(M: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    W, s, _ = np.linalg.svd(M, full_matrices=False)
    return W[:, :numerical_rank(s, rank_tol)]


def range_distance(a, b, rank_tol: float = DEFAULT_RANK_TOL) -> float:
    """Sine of the largest principal angle between ``range(a)`` and ``range(b)``.

    Both directions are checked, so subspaces of different dimension are at
    distance 1.
    """
    A, B = _entries(a), _entries(b)
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"row counts differ: {A.shape[0]} vs {B.shape[0]}")
    Qa, Qb = orth_basis(A, rank_tol), orth_basis(B, rank_tol)
    if Qa.shape[1] == 0 or Qb.shape[1] == 0:
        return 0.0 if Qa.shape[1] == Qb.shape[1] else 1.0
    da = np.linalg.norm(Qa - Qb @ (Qb.T @ Qa), 2)
    db = np.linalg.norm(Qb - Qa @ (Qa.T @ Qb), 2)
    return float(min(1.0, max(da, db)))


def save_spectrum_csv(path: str | PathLike, singular_values) -> None:
    """Write ``index,sigma,log10_sigma`` (1-based index)."""
    s = np.asarray(singular_values, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "sigma", "log10_sigma"])
        for i, v in enumerate(s, start=1):
            w.writerow([i, repr(float(v)), repr(float(np.log10(v))) if v > 0 else "-inf"])


def load_spectrum_csv(path: str | PathLike) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["sigma"]) for r in rows])
