"""Dense float64 tensors with taped reverse-mode differentiation.

The op set is intentionally small: matrix products, a handful of
elementwise maps, row gather/scatter, two fused segment kernels, layer
norm and dropout, plus shape plumbing (reshape / transpose / row slice /
row concat / reductions).  Every backward rule is a few lines and is
checked against central finite differences in the test suite.

Broadcasting is restricted to three cases: identical shapes, a scalar
(0-d tensor or Python number) against anything, and trailing-dimension
alignment: one shape is a suffix of the other, or both have equal rank
with size-1 axes.  Anything else needs an explicit reshape.

Tensors are immutable values: ops never write into their inputs and
callers must not mutate ``.data`` after construction.  A :class:`Tape`
is single-owner (enter at most one per thread); independent tapes on
different threads do not interact.
"""

from __future__ import annotations

import threading
import time
from numbers import Real
from typing import Callable, Sequence

import numpy as np

from . import kernels
from . import profiler as _prof
from .errors import (
    ConfigError,
    NumericError,
    OutOfBoundsError,
    ShapeError,
    TapeError,
)


class Tensor:
    """Immutable dense array of 64-bit floats."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Thin operator sugar over the module-level ops.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


class _Node:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


_tls = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_tls, "tape", None)


class Tape:
    """Ordered record of executed ops; replays them in reverse for grads.

    Nodes are appended in execution order, so the record is topologically
    sorted by construction.  Gradient slots are keyed by tensor identity;
    the tape keeps references to every recorded tensor, which keeps those
    identities stable.
    """

    def __init__(self) -> None:
        self._nodes: list[_Node] = []
        self._out_ids: set[int] = set()
        self._grads: dict[int, np.ndarray] = {}

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise TapeError("a Tape is already active on this thread")
        _tls.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _tls.tape = None

    def _append(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
        self._nodes.append(_Node(out, inputs, backward_fn))
        self._out_ids.add(id(out))

    def backward(self, loss: Tensor) -> None:
        """Fill gradient slots for everything reachable from `loss`."""
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._out_ids:
            raise TapeError("loss was not recorded on this tape (detached graph)")
        grads = self._grads
        grads.clear()
        grads[id(loss)] = np.ones_like(loss.data)
        for node in reversed(self._nodes):
            g = grads.get(id(node.out))
            if g is None:
                continue
            in_grads = node.backward_fn(g)
            for t, ig in zip(node.inputs, in_grads):
                if ig is None or not t.requires_grad:
                    continue
                cur = grads.get(id(t))
                grads[id(t)] = ig if cur is None else cur + ig

    def grad(self, t: Tensor) -> np.ndarray:
        """Gradient of the last backward() w.r.t. `t`; zeros if unused."""
        if not t.requires_grad:
            raise TapeError("grad() asked for a tensor that does not require grad")
        g = self._grads.get(id(t))
        if g is None:
            return np.zeros_like(t.data)
        return np.asarray(g, dtype=np.float64).reshape(t.shape)


# ---------------------------------------------------------------------------
# op plumbing

def _ensure_finite(kind: str, arr: np.ndarray) -> None:
    # sum is finite iff every element is (inf/nan propagate through it);
    # one allocation-free pass instead of isfinite().all()
    if not np.isfinite(arr.sum()):
        raise NumericError(f"non-finite values produced by op '{kind}'")


def _finish(
    kind: str,
    prof,
    t0: float,
    macs: int,
    out_data: np.ndarray,
    inputs: tuple[Tensor, ...],
    backward_fn: Callable[[np.ndarray], tuple],
    check: bool = True,
) -> Tensor:
    if check:
        _ensure_finite(kind, out_data)
    out = Tensor(out_data, any(t.requires_grad for t in inputs))
    if prof is not None:
        prof.add(kind, macs, time.perf_counter() - t0)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape._append(out, inputs, backward_fn)
    return out


def _begin():
    prof = _prof.active()
    t0 = time.perf_counter() if prof is not None else 0.0
    return prof, t0


def _broadcast_allowed(sa: tuple, sb: tuple) -> bool:
    if sa == sb or not sa or not sb:
        return True
    if len(sa) == len(sb):
        return all(x == y or 1 in (x, y) for x, y in zip(sa, sb))
    short, long_ = (sa, sb) if len(sa) < len(sb) else (sb, sa)
    tail = long_[len(long_) - len(short):]
    return all(x == y or 1 in (x, y) for x, y in zip(short, tail))


def _check_pair(kind: str, a: Tensor, b: Tensor) -> None:
    if not _broadcast_allowed(a.shape, b.shape):
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} are not "
                         "broadcast-compatible (scalar / trailing-dim only)")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape`, the adjoint of broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _as_index(idx, n: int, what: str) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"{what} must be a 1-D integer vector")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise OutOfBoundsError(f"{what} has entries outside [0, {n})")
    return idx


# ---------------------------------------------------------------------------
# binary elementwise

def add(a: Tensor, b) -> Tensor:
    prof, t0 = _begin()
    if isinstance(b, Real):
        out_data = a.data + float(b)
        return _finish("add", prof, t0, 0, out_data, (a,), lambda g: (g,), check=False)
    _check_pair("add", a, b)
    out_data = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _finish("add", prof, t0, 0, out_data, (a, b), bwd, check=False)


def sub(a: Tensor, b) -> Tensor:
    prof, t0 = _begin()
    if isinstance(b, Real):
        out_data = a.data - float(b)
        return _finish("sub", prof, t0, 0, out_data, (a,), lambda g: (g,), check=False)
    _check_pair("sub", a, b)
    out_data = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _finish("sub", prof, t0, 0, out_data, (a, b), bwd, check=False)


def mul(a: Tensor, b) -> Tensor:
    prof, t0 = _begin()
    if isinstance(b, Real):
        c = float(b)
        out_data = a.data * c
        return _finish("mul", prof, t0, out_data.size, out_data, (a,),
                       lambda g: (g * c,))
    _check_pair("mul", a, b)
    out_data = a.data * b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _finish("mul", prof, t0, out_data.size, out_data, (a, b), bwd)


def div(a: Tensor, b) -> Tensor:
    prof, t0 = _begin()
    if isinstance(b, Real):
        c = float(b)
        if c == 0.0:
            raise NumericError("div: division by zero")
        out_data = a.data / c
        return _finish("div", prof, t0, out_data.size, out_data, (a,),
                       lambda g: (g / c,))
    _check_pair("div", a, b)
    if np.any(b.data == 0.0):
        raise NumericError("div: division by zero")
    out_data = a.data / b.data
    bd = b.data

    def bwd(g):
        gb = g / bd
        return (_unbroadcast(gb, a.shape),
                _unbroadcast(-gb * out_data, b.shape))

    return _finish("div", prof, t0, out_data.size, out_data, (a, b), bwd)


def scale(x: Tensor, s: float) -> Tensor:
    prof, t0 = _begin()
    s = float(s)
    out_data = x.data * s
    return _finish("scale", prof, t0, out_data.size, out_data, (x,),
                   lambda g: (g * s,), check=False)


# ---------------------------------------------------------------------------
# unary elementwise

def exp(x: Tensor) -> Tensor:
    prof, t0 = _begin()
    with np.errstate(over="ignore"):  # overflow is surfaced as NumericError
        out_data = np.exp(x.data)
    return _finish("exp", prof, t0, out_data.size, out_data, (x,),
                   lambda g: (g * out_data,))


def log(x: Tensor) -> Tensor:
    prof, t0 = _begin()
    if np.any(x.data <= 0.0):
        raise NumericError("log: non-positive input")
    out_data = np.log(x.data)
    xd = x.data
    return _finish("log", prof, t0, out_data.size, out_data, (x,),
                   lambda g: (g / xd,))


def tanh(x: Tensor) -> Tensor:
    prof, t0 = _begin()
    out_data = np.tanh(x.data)
    return _finish("tanh", prof, t0, out_data.size, out_data, (x,),
                   lambda g: (g * (1.0 - out_data * out_data),), check=False)


def _sigmoid(xd: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(xd))
    return np.where(xd >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(x: Tensor) -> Tensor:
    prof, t0 = _begin()
    out_data = _sigmoid(x.data)
    return _finish("sigmoid", prof, t0, out_data.size, out_data, (x,),
                   lambda g: (g * out_data * (1.0 - out_data),), check=False)


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    prof, t0 = _begin()
    sig = _sigmoid(x.data)
    out_data = x.data * sig
    xd = x.data

    def bwd(g):
        return (g * sig * (1.0 + xd * (1.0 - sig)),)

    return _finish("silu", prof, t0, 2 * out_data.size, out_data, (x,), bwd,
                   check=False)


def elu(x: Tensor) -> Tensor:
    """elu with alpha = 1: x for x > 0, exp(x) - 1 otherwise."""
    prof, t0 = _begin()
    xd = x.data
    out_data = np.where(xd > 0, xd, np.expm1(xd))

    def bwd(g):
        return (g * np.where(xd > 0, 1.0, np.exp(xd)),)

    return _finish("elu", prof, t0, out_data.size, out_data, (x,), bwd,
                   check=False)


def relu(x: Tensor) -> Tensor:
    prof, t0 = _begin()
    xd = x.data
    out_data = np.maximum(xd, 0.0)

    def bwd(g):
        return (g * (xd > 0),)

    return _finish("relu", prof, t0, out_data.size, out_data, (x,), bwd,
                   check=False)


# ---------------------------------------------------------------------------
# matrix product

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a @ b for a[..., m, k] with b[k, n] or b[..., k, n] (equal leading dims)."""
    prof, t0 = _begin()
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    if b.ndim != 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: leading dims differ, {a.shape} @ {b.shape}")
    out_data = a.data @ b.data
    k = a.shape[-1]
    macs = out_data.size * k
    ad, bd = a.data, b.data

    if b.ndim == 2:
        def bwd(g):
            ga = g @ bd.T
            gb = ad.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
    else:
        def bwd(g):
            ga = g @ np.swapaxes(bd, -1, -2)
            gb = np.swapaxes(ad, -1, -2) @ g
            return ga, gb

    return _finish("matmul", prof, t0, macs, out_data, (a, b), bwd)


# ---------------------------------------------------------------------------
# gather / scatter / segment kernels

def _rows2d(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr.reshape(arr.shape[0], -1))


def gather(src: Tensor, index) -> Tensor:
    """Row gather along axis 0: out[i] = src[index[i]]."""
    prof, t0 = _begin()
    if src.ndim < 1:
        raise ShapeError("gather source must have at least 1 dimension")
    n = src.shape[0]
    idx = _as_index(index, n, "gather index")
    K = kernels.active()
    src2 = _rows2d(src.data)
    out_data = K.gather_rows(src2, idx).reshape((idx.size,) + src.shape[1:])

    def bwd(g):
        g2 = _rows2d(g)
        gs = K.scatter_add_rows(g2, idx, n)
        return (gs.reshape(src.shape),)

    return _finish("gather", prof, t0, 0, out_data, (src,), bwd, check=False)


def scatter_reduce(src: Tensor, index, num_rows: int, reduce: str = "sum",
                   return_empty_mask: bool = False):
    """Group rows of `src` by `index` into `num_rows` output rows.

    reduce="sum": out[j] = sum of rows mapped to j (empty groups zero).
    reduce="max": per-column max; empty groups yield 0.0 and are flagged
    in the optional mask (the value is a placeholder, not a true max).
    """
    prof, t0 = _begin()
    if num_rows < 1:
        raise ShapeError("scatter_reduce: num_rows must be >= 1")
    idx = _as_index(index, num_rows, "scatter index")
    if idx.size != src.shape[0]:
        raise ShapeError("scatter_reduce: index length must match src rows")
    K = kernels.active()
    src2 = _rows2d(src.data)
    trail = src.shape[1:]

    if reduce == "sum":
        out2 = K.scatter_add_rows(src2, idx, num_rows)
        empty = np.bincount(idx, minlength=num_rows) == 0

        def bwd(g):
            g2 = _rows2d(g)
            return (K.gather_rows(g2, idx).reshape(src.shape),)

        out = _finish("scatter_sum", prof, t0, 0, out2.reshape((num_rows,) + trail),
                      (src,), bwd)
    elif reduce == "max":
        out2, arg = K.scatter_max_rows(src2, idx, num_rows)
        empty = arg[:, 0] < 0

        def bwd(g):
            g2 = _rows2d(g)
            gs = np.zeros_like(src2)
            valid = arg >= 0
            rows = arg[valid]
            cols = np.nonzero(valid)[1]
            np.add.at(gs, (rows, cols), g2[valid])
            return (gs.reshape(src.shape),)

        out = _finish("scatter_max", prof, t0, 0, out2.reshape((num_rows,) + trail),
                      (src,), bwd, check=False)
    else:
        raise ConfigError(f"scatter_reduce: unknown reduction {reduce!r}")

    if return_empty_mask:
        return out, empty
    return out


def segment_outer(a: Tensor, b: Tensor, seg, num_segments: int) -> Tensor:
    """out[s] = sum over rows r with seg[r] == s of outer(a[r], b[r]).

    Fused scatter of per-row outer products; `seg` must be non-decreasing
    (rows of one segment are contiguous) and accumulation runs in
    ascending row order.
    """
    prof, t0 = _begin()
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError("segment_outer expects a[R, F] and b[R, D]")
    seg = _as_index(seg, num_segments, "segment ids")
    if seg.size != a.shape[0]:
        raise ShapeError("segment_outer: segment ids must match row count")
    if seg.size and np.any(np.diff(seg) < 0):
        raise ShapeError("segment_outer: segment ids must be non-decreasing")
    K = kernels.active()
    ad = np.ascontiguousarray(a.data)
    bd = np.ascontiguousarray(b.data)
    out_data = K.seg_outer_rows(ad, bd, seg, num_segments)
    macs = a.shape[0] * a.shape[1] * b.shape[1]

    def bwd(g):
        g = np.ascontiguousarray(g)
        ga = K.seg_matvec_rows(g, bd, seg)
        gb = K.seg_matvec_rows(np.ascontiguousarray(np.swapaxes(g, 1, 2)), ad, seg)
        return ga, gb

    return _finish("seg_outer", prof, t0, macs, out_data, (a, b), bwd)


def segment_matvec(mats: Tensor, x: Tensor, seg) -> Tensor:
    """out[r] = mats[seg[r]] @ x[r] for mats[S, d_out, d_in], x[R, d_in]."""
    prof, t0 = _begin()
    if mats.ndim != 3 or x.ndim != 2 or mats.shape[2] != x.shape[1]:
        raise ShapeError("segment_matvec expects mats[S, do, di] and x[R, di]")
    seg = _as_index(seg, mats.shape[0], "segment ids")
    if seg.size != x.shape[0]:
        raise ShapeError("segment_matvec: segment ids must match row count")
    if seg.size and np.any(np.diff(seg) < 0):
        raise ShapeError("segment_matvec: segment ids must be non-decreasing")
    K = kernels.active()
    md = np.ascontiguousarray(mats.data)
    xd = np.ascontiguousarray(x.data)
    out_data = K.seg_matvec_rows(md, xd, seg)
    macs = x.shape[0] * mats.shape[1] * mats.shape[2]

    def bwd(g):
        g = np.ascontiguousarray(g)
        gm = K.seg_outer_rows(g, xd, seg, mats.shape[0])
        gx = K.seg_matvec_rows(np.ascontiguousarray(np.swapaxes(md, 1, 2)), g, seg)
        return gm, gx

    return _finish("seg_matvec", prof, t0, macs, out_data, (mats, x), bwd)


# ---------------------------------------------------------------------------
# normalization / regularization

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last dimension to mean 0 / variance 1, then affine."""
    prof, t0 = _begin()
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise ShapeError("layer_norm: last dimension is empty")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layer_norm: gamma/beta must have shape (d,)")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gamma.data + beta.data
    gd = gamma.data

    def bwd(g):
        dgamma = (g * xhat).reshape(-1, d).sum(axis=0)
        dbeta = g.reshape(-1, d).sum(axis=0)
        dxhat = g * gd
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = (dxhat - m1 - xhat * m2) * inv
        return dx, dgamma, dbeta

    return _finish("layer_norm", prof, t0, 4 * out_data.size, out_data,
                   (x, gamma, beta), bwd, check=False)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Zero entries with probability p and rescale survivors by 1/(1-p).

    Identity in eval mode or at p == 0 (returns `x` itself).
    """
    if not (0.0 <= p < 1.0):
        raise ConfigError(f"dropout: p must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout: training mode needs an rng")
    prof, t0 = _begin()
    keep = rng.random(x.shape) >= p
    inv = 1.0 / (1.0 - p)
    out_data = x.data * keep * inv

    def bwd(g):
        return (g * keep * inv,)

    return _finish("dropout", prof, t0, out_data.size, out_data, (x,), bwd,
                   check=False)


# ---------------------------------------------------------------------------
# shape plumbing

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    prof, t0 = _begin()
    shape = tuple(int(s) for s in shape)
    try:
        out_data = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: {e}") from None
    old = x.shape
    return _finish("reshape", prof, t0, 0, out_data, (x,),
                   lambda g: (g.reshape(old),), check=False)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    prof, t0 = _begin()
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: {axes} is not a permutation of {x.ndim} axes")
    # materialized: downstream ufuncs and matmuls on strided views are
    # several times slower and stride-sensitive
    out_data = np.ascontiguousarray(np.transpose(x.data, axes))
    inverse = np.argsort(axes)
    return _finish("transpose", prof, t0, 0, out_data, (x,),
                   lambda g: (np.ascontiguousarray(np.transpose(g, inverse)),),
                   check=False)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    prof, t0 = _begin()
    n = x.shape[0]
    if not (0 <= start <= stop <= n):
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for {n} rows")
    out_data = x.data[start:stop]

    def bwd(g):
        gx = np.zeros(x.shape, dtype=np.float64)
        gx[start:stop] = g
        return (gx,)

    return _finish("slice_rows", prof, t0, 0, out_data, (x,), bwd, check=False)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    prof, t0 = _begin()
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat_rows: empty input")
    trail = parts[0].shape[1:]
    if any(p.shape[1:] != trail for p in parts):
        raise ShapeError("concat_rows: trailing dimensions differ")
    out_data = np.concatenate([p.data for p in parts], axis=0)
    sizes = [p.shape[0] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _finish("concat_rows", prof, t0, 0, out_data, parts, bwd, check=False)


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    prof, t0 = _begin()
    axes = _norm_axes(axis, x.ndim)
    out_data = x.data.sum(axis=axes, keepdims=keepdims)
    shape = x.shape

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        # read-only broadcast view is safe: grads are never mutated in place
        return (np.broadcast_to(g, shape),)

    return _finish("sum", prof, t0, 0, out_data, (x,), bwd, check=False)


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    prof, t0 = _begin()
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if x.ndim else 1
    out_data = x.data.mean(axis=axes, keepdims=keepdims)
    shape = x.shape

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape) / count,)

    return _finish("mean", prof, t0, 0, out_data, (x,), bwd, check=False)
