"""Pure-numpy row kernels.

These are the fallback implementations of the hot inner loops; the numba
twins in :mod:`star.kernels.jit` compute the same functions element for
element (up to float summation order).  All kernels take contiguous
float64 / int64 arrays; bounds are validated by the callers in
:mod:`star.tensor`.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def gather_rows(src: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """out[i] = src[idx[i]] for 2-D src."""
    return src[idx]


def scatter_add_rows(src: np.ndarray, idx: np.ndarray, num_rows: int) -> np.ndarray:
    """out[j] = sum of src rows i with idx[i] == j; missing groups are zero."""
    out = np.zeros((num_rows, src.shape[1]), dtype=np.float64)
    np.add.at(out, idx, src)
    return out


def scatter_max_rows(src: np.ndarray, idx: np.ndarray, num_rows: int):
    """Per-group, per-column maximum.

    Returns (out, argrow).  Groups with no contributors get out = 0.0 and
    argrow = -1; ties resolve to the lowest contributing row index.
    """
    m, cols = src.shape
    out = np.full((num_rows, cols), -np.inf, dtype=np.float64)
    np.maximum.at(out, idx, src)
    # Recover the first row achieving each maximum.
    rows = np.arange(m, dtype=np.int64)[:, None]
    cand = np.where(src == out[idx], rows, m)
    arg = np.full((num_rows, cols), m, dtype=np.int64)
    np.minimum.at(arg, idx, cand)
    empty = arg == m
    arg[empty] = -1
    out[empty] = 0.0
    return out, arg


def _segment_bounds(seg: np.ndarray, num_segments: int):
    ids = np.arange(num_segments, dtype=np.int64)
    starts = np.searchsorted(seg, ids, side="left")
    ends = np.searchsorted(seg, ids, side="right")
    return starts, ends


def seg_outer_rows(a: np.ndarray, b: np.ndarray, seg: np.ndarray, num_segments: int) -> np.ndarray:
    """out[s] = sum over rows r in segment s of outer(a[r], b[r]).

    `seg` must be non-decreasing so each segment is a contiguous row run.
    """
    out = np.zeros((num_segments, a.shape[1], b.shape[1]), dtype=np.float64)
    starts, ends = _segment_bounds(seg, num_segments)
    for s in range(num_segments):
        lo, hi = starts[s], ends[s]
        if hi > lo:
            out[s] = a[lo:hi].T @ b[lo:hi]
    return out


def seg_matvec_rows(mats: np.ndarray, x: np.ndarray, seg: np.ndarray) -> np.ndarray:
    """out[r] = mats[seg[r]] @ x[r] with mats of shape [S, d_out, d_in].

    `seg` must be non-decreasing (contiguous segments).
    """
    out = np.empty((x.shape[0], mats.shape[1]), dtype=np.float64)
    starts, ends = _segment_bounds(seg, mats.shape[0])
    for s in range(mats.shape[0]):
        lo, hi = starts[s], ends[s]
        if hi > lo:
            out[lo:hi] = x[lo:hi] @ mats[s].T
    return out
