"""Structured data matrices built from recorded trajectories.

Hankel, Page and mosaic-Hankel constructions, the matching excitation
checks, and a least-squares membership test against a library's column
space.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from os import PathLike
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_RANK_TOL = 1e-9

STRUCTURES = ("hankel", "page", "mosaic", "unstructured")


class DimensionError(ValueError):
    """Raised when array shapes are incompatible with a requested operation."""


@dataclass(frozen=True)
class Trajectory:
    """A time-indexed vector signal.

    ``samples`` has shape ``(T, channels)``; each time step is a contiguous
    row so window gathers are cheap.
    """

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2:
            raise DimensionError(f"samples must be 1-D or 2-D, got ndim={s.ndim}")
        if s.shape[0] < 1 or s.shape[1] < 1:
            raise DimensionError(f"trajectory must be non-empty, got shape {s.shape}")
        s = np.ascontiguousarray(s)
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.length

    def window(self, start: int, stop: int) -> "Trajectory":
        """Samples ``start .. stop-1`` as a new trajectory."""
        return Trajectory(self.samples[start:stop])

    def stacked(self) -> np.ndarray:
        """Time-major vector ``[w(0); w(1); ...]``."""
        return self.samples.reshape(-1).copy()

    @classmethod
    def from_stacked(cls, vec: np.ndarray, channels: int) -> "Trajectory":
        vec = np.asarray(vec, dtype=float).ravel()
        if vec.size % channels:
            raise DimensionError(
                f"stacked length {vec.size} is not a multiple of channels={channels}"
            )
        return cls(vec.reshape(-1, channels))


@dataclass(frozen=True)
class BlockMatrix:
    """Dense data matrix with block-row metadata.

    ``block_height`` is the number of rows per time step; ``discarded``
    counts trailing samples dropped by a Page construction.
    """

    entries: np.ndarray
    block_height: int
    structure: str = "unstructured"
    discarded: int = 0

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2:
            raise DimensionError(f"entries must be 2-D, got ndim={e.ndim}")
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure tag {self.structure!r}")
        if self.block_height < 1:
            raise DimensionError("block_height must be positive")
        if self.structure != "unstructured" and e.shape[0] % self.block_height:
            raise DimensionError(
                f"{self.structure} matrix has {e.shape[0]} rows, not a multiple "
                f"of block_height={self.block_height}"
            )
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True)
class ExcitationReport:
    order: int
    required_rank: int
    computed_rank: int
    satisfied: bool
    smallest_retained_singular_value: float
    rank_tolerance: float
    rows: int = 0
    cols: int = 0
    shortfall: int = 0
    message: str = ""

    def __bool__(self) -> bool:
        return self.satisfied


def _as_traj(w) -> Trajectory:
    return w if isinstance(w, Trajectory) else Trajectory(np.asarray(w, dtype=float))


def _check_depth(T: int, k: int) -> None:
    if k < 1:
        raise DimensionError(f"depth must be >= 1, got k={k}")
    if k > T:
        raise DimensionError(f"depth k={k} exceeds trajectory length T={T}")


def hankel_array(samples: np.ndarray, k: int) -> np.ndarray:
    """Depth-``k`` Hankel matrix of a ``(T, channels)`` sample array."""
    T, ch = samples.shape
    _check_depth(T, k)
    # windows[j] has shape (ch, k); transpose to time-major before flattening
    windows = sliding_window_view(samples, k, axis=0)
    return np.ascontiguousarray(windows.transpose(0, 2, 1).reshape(T - k + 1, k * ch).T)


def page_array(samples: np.ndarray, k: int) -> tuple[np.ndarray, int]:
    """Depth-``k`` Page matrix and the number of trailing samples dropped."""
    T, ch = samples.shape
    _check_depth(T, k)
    cols = T // k
    used = samples[: cols * k]
    return np.ascontiguousarray(used.reshape(cols, k * ch).T), T - cols * k


def build_hankel(w, k: int) -> BlockMatrix:
    """Hankel matrix of depth ``k``: column ``j`` stacks ``w(j) .. w(j+k-1)``.

    >>> build_hankel([1.0, 2.0, 3.0, 4.0], 2).entries
    array([[1., 2., 3.],
           [2., 3., 4.]])
    """
    w = _as_traj(w)
    return BlockMatrix(hankel_array(w.samples, k), w.channels, "hankel")


def build_page(w, k: int) -> BlockMatrix:
    """Page matrix of depth ``k`` (disjoint windows, remainder discarded)."""
    w = _as_traj(w)
    entries, dropped = page_array(w.samples, k)
    return BlockMatrix(entries, w.channels, "page", discarded=dropped)


def build_mosaic_hankel(ws: Sequence, k: int) -> BlockMatrix:
    """Horizontal concatenation of depth-``k`` Hankel matrices."""
    ws = [_as_traj(w) for w in ws]
    if not ws:
        raise DimensionError("mosaic-Hankel needs at least one trajectory")
    ch = ws[0].channels
    for i, w in enumerate(ws):
        if w.channels != ch:
            raise DimensionError(
                f"trajectory {i} has {w.channels} channels, expected {ch}"
            )
    blocks = [hankel_array(w.samples, k) for w in ws]
    return BlockMatrix(np.hstack(blocks), ch, "mosaic")


def stack_io(u_lib: BlockMatrix, y_lib: BlockMatrix) -> BlockMatrix:
    """Place an input library above an output library (same columns)."""
    if u_lib.cols != y_lib.cols:
        raise DimensionError(
            f"input library has {u_lib.cols} columns, output library {y_lib.cols}"
        )
    structure = u_lib.structure if u_lib.structure == y_lib.structure else "unstructured"
    return BlockMatrix(
        np.vstack([u_lib.entries, y_lib.entries]),
        u_lib.block_height + y_lib.block_height,
        structure,
        discarded=u_lib.discarded,
    )


def io_library(u, y, L: int, structure: str = "hankel") -> BlockMatrix:
    """Stacked input/output library ``[M_L(u); M_L(y)]``.

    ``structure`` is ``"hankel"`` or ``"page"``; for a mosaic library pass
    lists of trajectories to :func:`mosaic_io_library`.
    """
    u, y = _as_traj(u), _as_traj(y)
    if u.length != y.length:
        raise DimensionError(f"input length {u.length} != output length {y.length}")
    if structure == "hankel":
        return stack_io(build_hankel(u, L), build_hankel(y, L))
    if structure == "page":
        return stack_io(build_page(u, L), build_page(y, L))
    raise ValueError(f"unsupported structure {structure!r}")


def mosaic_io_library(us: Sequence, ys: Sequence, L: int) -> BlockMatrix:
    if len(us) != len(ys):
        raise DimensionError(f"{len(us)} input trajectories but {len(ys)} outputs")
    for i, (u, y) in enumerate(zip(us, ys)):
        if len(_as_traj(u)) != len(_as_traj(y)):
            raise DimensionError(f"trajectory {i}: input and output lengths differ")
    return stack_io(build_mosaic_hankel(us, L), build_mosaic_hankel(ys, L))


def numerical_rank(sv: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Count of singular values above ``rank_tol * sigma_max``."""
    if sv.size == 0 or sv[0] <= 0.0:
        return 0
    return int(np.count_nonzero(sv > rank_tol * sv[0]))


def _full_row_rank_report(M: np.ndarray, order: int, rank_tol: float) -> ExcitationReport:
    rows, cols = M.shape
    shortfall = max(0, rows - cols)
    sv = np.linalg.svd(M, compute_uv=False)
    rank = numerical_rank(sv, rank_tol)
    smallest = float(sv[rank - 1]) if rank else 0.0
    msg = ""
    if shortfall:
        msg = (
            f"{cols} columns cannot give full row rank {rows}: "
            f"{shortfall} more columns (data points) needed"
        )
    elif rank < rows:
        msg = f"rank {rank} < required {rows}"
    return ExcitationReport(
        order=order,
        required_rank=rows,
        computed_rank=rank,
        satisfied=rank == rows,
        smallest_retained_singular_value=smallest,
        rank_tolerance=rank_tol,
        rows=rows,
        cols=cols,
        shortfall=shortfall,
        message=msg,
    )


def check_persistent_excitation(w, k: int, rank_tol: float = DEFAULT_RANK_TOL) -> ExcitationReport:
    """Whether ``H_k(w)`` has full row rank ``channels * k``."""
    w = _as_traj(w)
    return _full_row_rank_report(hankel_array(w.samples, k), k, rank_tol)


def shifted_page_stack(w, k: int, l: int) -> np.ndarray:
    """Stack of ``l`` Page matrices of depth ``k``, each shifted by ``k`` samples.

    Block ``t`` (0-based) is the Page matrix of samples ``t*k .. T-1-(l-1-t)*k``.
    Every block covers the same number of samples, so all share one column
    count (floor of sub-length over ``k``).
    """
    w = _as_traj(w)
    T = w.length
    if l < 1:
        raise DimensionError(f"order must be >= 1, got l={l}")
    sub = T - (l - 1) * k
    if sub < k:
        raise DimensionError(
            f"k-Page excitation of order {l} with k={k} needs T >= {k * l}, got T={T}"
        )
    blocks = [page_array(w.samples[t * k: t * k + sub], k)[0] for t in range(l)]
    return np.vstack(blocks)


def check_page_excitation(w, k: int, l: int, rank_tol: float = DEFAULT_RANK_TOL) -> ExcitationReport:
    """``k``-Page excitation of order ``l``: full row rank of the shifted Page stack."""
    return _full_row_rank_report(shifted_page_stack(w, k, l), l, rank_tol)


def check_collective_excitation(ws: Sequence, k: int, rank_tol: float = DEFAULT_RANK_TOL) -> ExcitationReport:
    """Full row rank of the depth-``k`` mosaic-Hankel matrix."""
    return _full_row_rank_report(build_mosaic_hankel(ws, k).entries, k, rank_tol)


def membership_residual(library, traj_stack) -> float:
    """Distance from ``traj_stack`` to the column space of ``library``.

    Computes ``min_g ||H g - v||_2``. A value near zero means ``v`` is a
    linear combination of the library's columns.
    """
    H = np.asarray(library.entries if isinstance(library, BlockMatrix) else library, dtype=float)
    v = np.asarray(traj_stack, dtype=float).ravel()
    if v.size != H.shape[0]:
        raise DimensionError(f"vector has length {v.size}, library has {H.shape[0]} rows")
    g, *_ = np.linalg.lstsq(H, v, rcond=None)
    return float(np.linalg.norm(H @ g - v))


def save_trajectory_csv(path: str | PathLike, w) -> None:
    """Write ``t,ch0,ch1,...`` with one row per time step."""
    w = _as_traj(w)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"ch{i}" for i in range(w.channels)])
        for t, row in enumerate(w.samples):
            writer.writerow([t] + [repr(float(v)) for v in row])


def load_trajectory_csv(path: str | PathLike) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t" or any(
            h != f"ch{i}" for i, h in enumerate(header[1:])
        ):
            raise ValueError(f"{path}: expected header t,ch0,ch1,..., got {header}")
        rows = [[float(v) for v in r[1:]] for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no samples")
    return Trajectory(np.array(rows))
