"""Numba twins of the reference kernels.

Serial row loops, deliberately not prange: accumulation order must be
fixed (ascending row index) so runs are bit-reproducible per backend.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def gather_rows(src, idx):
    m = idx.shape[0]
    cols = src.shape[1]
    out = np.empty((m, cols), dtype=np.float64)
    for i in range(m):
        row = idx[i]
        for c in range(cols):
            out[i, c] = src[row, c]
    return out


@njit(cache=True)
def scatter_add_rows(src, idx, num_rows):
    cols = src.shape[1]
    out = np.zeros((num_rows, cols), dtype=np.float64)
    for i in range(src.shape[0]):
        row = idx[i]
        for c in range(cols):
            out[row, c] += src[i, c]
    return out


@njit(cache=True)
def scatter_max_rows(src, idx, num_rows):
    m = src.shape[0]
    cols = src.shape[1]
    out = np.zeros((num_rows, cols), dtype=np.float64)
    arg = np.full((num_rows, cols), -1, dtype=np.int64)
    for i in range(m):
        row = idx[i]
        for c in range(cols):
            v = src[i, c]
            if arg[row, c] < 0 or v > out[row, c]:
                out[row, c] = v
                arg[row, c] = i
    return out, arg


@njit(cache=True)
def seg_outer_rows(a, b, seg, num_segments):
    fa = a.shape[1]
    fb = b.shape[1]
    out = np.zeros((num_segments, fa, fb), dtype=np.float64)
    for r in range(a.shape[0]):
        s = seg[r]
        for i in range(fa):
            ai = a[r, i]
            for j in range(fb):
                out[s, i, j] += ai * b[r, j]
    return out


@njit(cache=True)
def seg_matvec_rows(mats, x, seg):
    rows = x.shape[0]
    dout = mats.shape[1]
    din = mats.shape[2]
    out = np.empty((rows, dout), dtype=np.float64)
    for r in range(rows):
        s = seg[r]
        for i in range(dout):
            acc = 0.0
            for j in range(din):
                acc += mats[s, i, j] * x[r, j]
            out[r, i] = acc
    return out
