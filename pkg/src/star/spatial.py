"""Multi-head self-attention over the joints of each frame.

Two routes compute the same function on the support set:

* :func:`sparse_mhsa` touches only the admitted (query, key) pairs via
  gather / scatter; this is the production path.
* :func:`dense_masked_mhsa` materializes the full joints x joints score
  matrix and masks it: the oracle, and (with an all-ones mask) the
  full-attention ablation arm.

Frames are the logical batch: every frame attends independently over its
joints with shared parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import profiler as _prof
from . import tensor as T
from .errors import NumericError, ShapeError
from .graph import AttentionSupport
from .kernels import active as _kernels
from .tensor import Tensor

SCORE_SCOPE = "spatial.scores"

_MASK_OFF = -1e30  # additive bias; exp underflows to exactly 0.0


@dataclass(frozen=True)
class MhsaConfig:
    d_model: int
    num_heads: int

    def __post_init__(self):
        if self.num_heads < 1 or self.d_model % self.num_heads:
            raise ShapeError(
                f"num_heads {self.num_heads} must divide d_model {self.d_model}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads


def _project(x2: Tensor, params: dict, name: str) -> Tensor:
    return T.add(T.matmul(x2, params[f"w{name}"]), params[f"b{name}"])


def sparse_mhsa(x: Tensor, support: AttentionSupport, params: dict,
                cfg: MhsaConfig) -> Tensor:
    """Attention restricted to the support pairs.

    x: [N, V, d_model].  Per head, scores exp(<q_i, k_j> / sqrt(head_dim))
    exist only for support pairs (i, j); each query normalizes over its
    neighborhood; values aggregate back through scatter-sum.
    """
    n, v, d = x.shape
    if d != cfg.d_model:
        raise ShapeError(f"input channel {d} != configured d_model {cfg.d_model}")
    if support.edge_index.size and support.edge_index.max() >= v:
        raise ShapeError("support references joints beyond the input")
    h, hd = cfg.num_heads, cfg.head_dim
    rows = n * v
    q_rows, k_rows = support.pair_rows(n)

    x2 = T.reshape(x, (rows, d))
    q = T.reshape(_project(x2, params, "q"), (rows, h, hd))
    k = T.reshape(_project(x2, params, "k"), (rows, h, hd))
    val = T.reshape(_project(x2, params, "v"), (rows, h, hd))

    with _prof.maybe_scope(SCORE_SCOPE):
        qg = T.gather(q, q_rows)
        kg = T.gather(k, k_rows)
        scores = T.scale(T.reduce_sum(T.mul(qg, kg), axis=-1), 1.0 / np.sqrt(hd))
        # Stability shift: per-query max is a constant w.r.t. the graph
        # (softmax is shift-invariant, so detaching is exact).
        smax, _ = _kernels().scatter_max_rows(
            np.ascontiguousarray(scores.data), q_rows, rows)
        shifted = T.sub(scores, T.gather(Tensor(smax), q_rows))
        try:
            escore = T.exp(shifted)
        except NumericError:
            raise NumericError(
                "sparse_mhsa: overflow in attention scores "
                f"(max score {float(np.max(scores.data)):.3e})") from None
        denom = T.scatter_reduce(escore, q_rows, rows, reduce="sum")
        alpha = T.div(escore, T.gather(denom, q_rows))
        vg = T.gather(val, k_rows)
        weighted = T.mul(vg, T.reshape(alpha, (alpha.shape[0], h, 1)))
        ctx = T.scatter_reduce(weighted, q_rows, rows, reduce="sum")

    out = T.add(T.matmul(T.reshape(ctx, (rows, d)), params["wo"]), params["bo"])
    return T.reshape(out, (n, v, d))


def dense_masked_mhsa(x: Tensor, mask: Tensor, params: dict,
                      cfg: MhsaConfig) -> Tensor:
    """Full score-matrix attention with masked entries excluded from the
    softmax normalization.  mask: [V, V] of 0/1, each row needs a 1."""
    n, v, d = x.shape
    if mask.shape != (v, v):
        raise ShapeError(f"mask shape {mask.shape} != ({v}, {v})")
    md = mask.data
    if not np.all((md == 0.0) | (md == 1.0)):
        raise ShapeError("mask entries must be 0 or 1")
    if np.any(md.sum(axis=1) == 0):
        raise ShapeError("mask has an all-zero row: a query with no keys")
    h, hd = cfg.num_heads, cfg.head_dim
    rows = n * v

    x2 = T.reshape(x, (rows, d))
    q = _split_heads(_project(x2, params, "q"), n, v, h, hd)
    k = _split_heads(_project(x2, params, "k"), n, v, h, hd)
    val = _split_heads(_project(x2, params, "v"), n, v, h, hd)

    bias = Tensor(np.where(md == 1.0, 0.0, _MASK_OFF)[None, None, :, :])
    with _prof.maybe_scope(SCORE_SCOPE):
        scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(hd))
        masked = T.add(scores, bias)
        rowmax = np.max(masked.data, axis=-1, keepdims=True)  # detached shift
        escore = T.exp(T.sub(masked, Tensor(rowmax)))
        denom = T.reduce_sum(escore, axis=-1, keepdims=True)
        alpha = T.div(escore, denom)
        ctx = T.matmul(alpha, val)

    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (rows, d))
    out = T.add(T.matmul(ctx, params["wo"]), params["bo"])
    return T.reshape(out, (n, v, d))


def _split_heads(x2: Tensor, n: int, v: int, h: int, hd: int) -> Tensor:
    return T.transpose(T.reshape(x2, (n, v, h, hd)), (0, 2, 1, 3))


def count_spatial_macs(cfg: MhsaConfig, num_joints: int, num_entries: int,
                       num_frames: int) -> int:
    """Multiply-accumulate count of one spatial attention call:
    q/k/v projections + per-entry score and aggregation products + output
    projection.  Pass num_entries = V**2 for the dense variant."""
    n, v, d = num_frames, num_joints, cfg.d_model
    proj = 3 * n * v * d * d
    scores = 2 * n * cfg.num_heads * num_entries * cfg.head_dim
    out = n * v * d * d
    return proj + scores + out
