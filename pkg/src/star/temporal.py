"""Segmented linear multi-head self-attention along joint trajectories.

Joints are the logical batch: each joint's sequence of frames is one
trajectory.  Attention factorizes through a positive feature map phi as

    out_i = phi(q_i)^T U_s / (phi(q_i)^T Z_s)      for row i in segment s
    U_s   = sum_{j in s} phi(k_j) v_j^T,   Z_s = sum_{j in s} phi(k_j)

so cost is linear in the number of frames and no row ever attends across
a segment boundary.  The accumulators are built by the fused segment
kernels (ascending frame order, bit-reproducible per backend).

:func:`quadratic_segment_oracle` computes the same function through the
explicit per-segment score matrix, O(T^2), and doubles as the standard
softmax attention reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import profiler as _prof
from . import tensor as T
from .errors import ConfigError, NumericError, ShapeError
from .spatial import MhsaConfig, _project
from .tensor import Tensor

CORE_SCOPE = "temporal.core"
PROJ_SCOPE = "temporal.proj"
ORACLE_CORE_SCOPE = "temporal.oracle.core"
ORACLE_PROJ_SCOPE = "temporal.oracle.proj"

DENOM_EPS = 1e-20


@dataclass(frozen=True)
class KernelSpec:
    """Feature map turning dot-product attention into a linear-time form.

    kind="elu": phi(x) = elu(x) + 1, strictly positive, feature dim equals
    head_dim; the deterministic default.

    kind="favor": phi(x) = (c / sqrt(M)) f(W x + b), W an [M, head_dim]
    Gaussian matrix drawn from `seed`, b zeros.  With f="exp" the map uses
    the positive-features construction (inputs pre-scaled by
    head_dim**-0.25 and exp taken of W x - ||x||^2 / 2) whose expected
    feature dot product equals the softmax kernel exp(q.k / sqrt(head_dim)).
    """

    kind: str = "elu"
    num_features: int = 256
    feature_map: str = "exp"
    constant: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("elu", "favor"):
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        if self.feature_map not in ("exp", "relu"):
            raise ConfigError(f"unknown feature map {self.feature_map!r}")
        if self.num_features < 1:
            raise ConfigError("num_features must be >= 1")

    def feature_dim(self, head_dim: int) -> int:
        return head_dim if self.kind == "elu" else self.num_features


_favor_cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def favor_features(spec: KernelSpec, head_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Projection matrix and bias for the random-feature map (cached)."""
    key = (spec.seed, spec.num_features, head_dim)
    hit = _favor_cache.get(key)
    if hit is None:
        rng = np.random.Generator(np.random.Philox(spec.seed))
        w = rng.normal(0.0, 1.0, size=(spec.num_features, head_dim))
        b = np.zeros(spec.num_features)
        hit = (w, b)
        _favor_cache[key] = hit
    return hit


def kernel_map(x: Tensor, spec: KernelSpec) -> Tensor:
    """Apply the feature map along the last axis of x[..., head_dim]."""
    head_dim = x.shape[-1]
    if spec.kind == "elu":
        return T.add(T.elu(x), 1.0)
    w, b = favor_features(spec, head_dim)
    m = spec.num_features
    c = spec.constant / np.sqrt(m)
    if spec.feature_map == "exp":
        xs = T.scale(x, head_dim ** -0.25)
        proj = T.add(T.matmul(xs, Tensor(w.T)), Tensor(b))
        sq = T.scale(T.reduce_sum(T.mul(xs, xs), axis=-1, keepdims=True), 0.5)
        return T.scale(T.exp(T.sub(proj, sq)), c)
    proj = T.add(T.matmul(x, Tensor(w.T)), Tensor(b))
    return T.scale(T.relu(proj), c)


def _frame_segments(segment_offsets: np.ndarray, num_frames: int) -> np.ndarray:
    offsets = np.asarray(segment_offsets, dtype=np.int64)
    if offsets.size == 0 or offsets[0] != 0 or np.any(np.diff(offsets) < 1):
        raise ShapeError("segment_offsets must start at 0 and strictly increase")
    if offsets[-1] >= num_frames:
        raise ShapeError("last segment would be empty")
    lengths = np.diff(np.append(offsets, num_frames))
    return np.repeat(np.arange(len(offsets), dtype=np.int64), lengths)


def segmented_linear_mhsa(x: Tensor, segment_offsets, params: dict,
                          cfg: MhsaConfig, spec: KernelSpec) -> Tensor:
    """Linear-time attention within each segment of the frame axis.

    x: [N, V, d_model]; segment_offsets: start row of each segment,
    partitioning [0, N).
    """
    n, v, d = x.shape
    if d != cfg.d_model:
        raise ShapeError(f"input channel {d} != configured d_model {cfg.d_model}")
    h, hd = cfg.num_heads, cfg.head_dim
    seg_frame = _frame_segments(segment_offsets, n)
    num_segments = int(seg_frame[-1]) + 1

    with _prof.maybe_scope(PROJ_SCOPE):
        x2 = T.reshape(x, (n * v, d))
        q = _traj_rows(_project(x2, params, "q"), n, v, h, hd)
        k = _traj_rows(_project(x2, params, "k"), n, v, h, hd)
        val = _traj_rows(_project(x2, params, "v"), n, v, h, hd)

    # one accumulator per (joint, head, segment); rows are trajectory-major
    # so segment ids stay non-decreasing
    seg_rows = (np.arange(v * h, dtype=np.int64)[:, None] * num_segments
                + seg_frame[None, :]).ravel()
    total_segments = v * h * num_segments

    # feature maps are preprocessing shared with the quadratic route, so
    # they count as projection work, not mechanism work
    with _prof.maybe_scope(PROJ_SCOPE):
        phi_q = kernel_map(q, spec)
        phi_k = kernel_map(k, spec)
    with _prof.maybe_scope(CORE_SCOPE):
        acc = T.segment_outer(phi_k, val, seg_rows, total_segments)
        norm = T.scatter_reduce(phi_k, seg_rows, total_segments, reduce="sum")
        numer = T.segment_matvec(T.transpose(acc, (0, 2, 1)), phi_q, seg_rows)
        denom = T.reduce_sum(T.mul(phi_q, T.gather(norm, seg_rows)),
                             axis=-1, keepdims=True)
        if float(np.min(denom.data)) < DENOM_EPS:
            raise NumericError(
                "segmented_linear_mhsa: attention denominator below "
                f"{DENOM_EPS:g}; the feature map lost positivity")
        out_rows = T.div(numer, denom)

    with _prof.maybe_scope(PROJ_SCOPE):
        out = T.reshape(out_rows, (v, h, n, hd))
        out = T.reshape(T.transpose(out, (2, 0, 1, 3)), (n * v, d))
        out = T.add(T.matmul(out, params["wo"]), params["bo"])
    return T.reshape(out, (n, v, d))


def _traj_rows(x2: Tensor, n: int, v: int, h: int, hd: int) -> Tensor:
    """[N*V, d] -> [V*H*N, head_dim], trajectory-major row order."""
    x4 = T.transpose(T.reshape(x2, (n, v, h, hd)), (1, 2, 0, 3))
    return T.reshape(x4, (v * h * n, hd))


def quadratic_segment_oracle(x: Tensor, segment_offsets, params: dict,
                             cfg: MhsaConfig, spec: KernelSpec,
                             scores: str = "kernel") -> Tensor:
    """Reference attention via the explicit per-segment score matrix.

    scores="kernel" reproduces segmented_linear_mhsa exactly (same feature
    map, quadratic route); scores="softmax" is standard exp(q.k/sqrt(d))
    attention per segment.  Test-scale only: O(T^2) per segment.
    """
    n, v, d = x.shape
    if scores not in ("kernel", "softmax"):
        raise ConfigError(f"unknown score mode {scores!r}")
    h, hd = cfg.num_heads, cfg.head_dim
    seg_frame = _frame_segments(segment_offsets, n)
    offsets = np.asarray(segment_offsets, dtype=np.int64)
    bounds = np.append(offsets, n)

    with _prof.maybe_scope(ORACLE_PROJ_SCOPE):
        x2 = T.reshape(x, (n * v, d))
        q4 = T.reshape(_project(x2, params, "q"), (n, v, h, hd))
        k4 = T.reshape(_project(x2, params, "k"), (n, v, h, hd))
        v4 = T.reshape(_project(x2, params, "v"), (n, v, h, hd))

    pieces = []
    for s in range(len(offsets)):
        lo, hi = int(bounds[s]), int(bounds[s + 1])
        with _prof.maybe_scope(ORACLE_PROJ_SCOPE):
            qs = T.transpose(T.slice_rows(q4, lo, hi), (1, 2, 0, 3))
            ks = T.transpose(T.slice_rows(k4, lo, hi), (1, 2, 0, 3))
            vs = T.transpose(T.slice_rows(v4, lo, hi), (1, 2, 0, 3))
            if scores == "kernel":
                qs = kernel_map(qs, spec)
                ks = kernel_map(ks, spec)
        with _prof.maybe_scope(ORACLE_CORE_SCOPE):
            if scores == "kernel":
                att = T.matmul(qs, T.transpose(ks, (0, 1, 3, 2)))
            else:
                raw = T.scale(T.matmul(qs, T.transpose(ks, (0, 1, 3, 2))),
                              1.0 / np.sqrt(hd))
                rowmax = np.max(raw.data, axis=-1, keepdims=True)  # detached
                att = T.exp(T.sub(raw, Tensor(rowmax)))
            denom = T.reduce_sum(att, axis=-1, keepdims=True)
            if float(np.min(denom.data)) < DENOM_EPS:
                raise NumericError("quadratic_segment_oracle: zero attention row")
            ctx = T.div(T.matmul(att, vs), denom)
        with _prof.maybe_scope(ORACLE_PROJ_SCOPE):
            pieces.append(T.transpose(ctx, (2, 0, 1, 3)))

    with _prof.maybe_scope(ORACLE_PROJ_SCOPE):
        out = pieces[0] if len(pieces) == 1 else T.concat_rows(pieces)
        out = T.add(T.matmul(T.reshape(out, (n * v, d)), params["wo"]), params["bo"])
    return T.reshape(out, (n, v, d))
