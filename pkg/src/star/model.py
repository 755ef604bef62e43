"""Full classifier: embedding, parallel spatial/temporal encoder blocks,
context-aware clip summarization and the MLP head.

Every block computes y = spatial_encoder(x) + temporal_encoder(x); each
encoder is attention -> add & norm -> feed-forward -> add & norm.  After
the blocks, each clip's frames are collapsed to a single vector by
context attention (a sigmoid-gated weighted sum against the clip's own
mean context) followed by a mean over joints, then classified.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tensor as T
from .data import RaggedBatch, segmented_positional_encoding
from .errors import ConfigError, DataFormatError, ShapeError
from .graph import AttentionSupport, SkeletonGraph, build_support, dense_mask, ntu25_graph
from .spatial import MhsaConfig, dense_masked_mhsa, sparse_mhsa
from .temporal import KernelSpec, segmented_linear_mhsa
from .tensor import Tensor

RAW_CHANNELS = 3


@dataclass(frozen=True)
class StarConfig:
    d_model: int = 64
    num_layers: int = 5
    num_heads: int = 8
    ffn_hidden: int = 0        # 0 -> 2 * d_model
    mlp_hidden: int = 0        # 0 -> 2 * d_model
    num_classes: int = 60
    dropout: float = 0.5
    max_hops: int = 3
    spatial_variant: str = "sparse"   # "sparse" | "full"
    segment_per: str = "person"
    final_norm: bool = False
    kernel: KernelSpec = field(default_factory=KernelSpec)
    seed: int = 0

    def __post_init__(self):
        if min(self.d_model, self.num_layers, self.num_heads, self.num_classes) < 1:
            raise ConfigError("model dimensions must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must be in [0, 1)")
        if self.spatial_variant not in ("sparse", "full"):
            raise ConfigError(f"unknown spatial variant {self.spatial_variant!r}")

    @property
    def ffn_dim(self) -> int:
        return self.ffn_hidden or 2 * self.d_model

    @property
    def mlp_dim(self) -> int:
        return self.mlp_hidden or 2 * self.d_model

    @property
    def mhsa(self) -> MhsaConfig:
        return MhsaConfig(d_model=self.d_model, num_heads=self.num_heads)


PRESETS: dict[str, StarConfig] = {
    "tiny": StarConfig(d_model=8, num_layers=2, num_heads=2, num_classes=3,
                       dropout=0.1),
    "star64": StarConfig(d_model=64),
    "star128": StarConfig(d_model=128),
}


def preset(name: str, **overrides) -> StarConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides) if overrides else PRESETS[name]


class StarModel:
    """Parameter collection plus the immutables needed to run it."""

    def __init__(self, config: StarConfig, graph: SkeletonGraph,
                 params: dict[str, Tensor], support: AttentionSupport):
        self.config = config
        self.graph = graph
        self.params = params
        self.support = support
        self._mask = dense_mask(support, graph.num_joints)
        self._full_mask = Tensor(np.ones((graph.num_joints,) * 2))

    @property
    def num_joints(self) -> int:
        return self.graph.num_joints


def init_model(config: StarConfig, graph: SkeletonGraph | None = None) -> StarModel:
    """Build a model with Xavier-uniform weights drawn from config.seed."""
    if graph is None:
        graph = ntu25_graph()
    rng = np.random.Generator(np.random.Philox(config.seed))
    d, ffn, mlp = config.d_model, config.ffn_dim, config.mlp_dim
    params: dict[str, Tensor] = {}

    def linear(name: str, fan_in: int, fan_out: int):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{name}.w"] = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)),
                                     requires_grad=True)
        params[f"{name}.b"] = Tensor(np.zeros(fan_out), requires_grad=True)

    def norm(name: str):
        params[f"{name}.gamma"] = Tensor(np.ones(d), requires_grad=True)
        params[f"{name}.beta"] = Tensor(np.zeros(d), requires_grad=True)

    linear("embed", RAW_CHANNELS, d)
    for layer in range(config.num_layers):
        for enc in ("spatial", "temporal"):
            base = f"layers.{layer}.{enc}"
            for proj in ("q", "k", "v", "o"):
                linear(f"{base}.attn.{proj}", d, d)
            norm(f"{base}.norm1")
            linear(f"{base}.ffn.1", d, ffn)
            linear(f"{base}.ffn.2", ffn, d)
            norm(f"{base}.norm2")
    if config.final_norm:
        norm("final_norm")
    bound = np.sqrt(6.0 / (2 * d))
    params["context.w"] = Tensor(rng.uniform(-bound, bound, (d, d)), requires_grad=True)
    linear("head.1", d, mlp)
    linear("head.2", mlp, config.num_classes)
    # zero-init the classifier layer: clip summaries scale with clip length,
    # so Xavier logits would start saturated; zeros start the loss at ln(C)
    params["head.2.w"] = Tensor(np.zeros((mlp, config.num_classes)), requires_grad=True)
    return StarModel(config, graph, params, build_support(graph, config.max_hops))


def _attn_params(params: dict[str, Tensor], base: str) -> dict[str, Tensor]:
    return {
        "wq": params[f"{base}.q.w"], "bq": params[f"{base}.q.b"],
        "wk": params[f"{base}.k.w"], "bk": params[f"{base}.k.b"],
        "wv": params[f"{base}.v.w"], "bv": params[f"{base}.v.b"],
        "wo": params[f"{base}.o.w"], "bo": params[f"{base}.o.b"],
    }


def _encoder(x: Tensor, attn_out: Tensor, params: dict, base: str,
             cfg: StarConfig, training: bool, rng) -> Tensor:
    """add & norm around the attention output, then FFN with add & norm."""
    a = T.dropout(attn_out, cfg.dropout, training, rng)
    x1 = T.layer_norm(T.add(x, a), params[f"{base}.norm1.gamma"],
                      params[f"{base}.norm1.beta"])
    hmid = T.silu(T.add(T.matmul(x1, params[f"{base}.ffn.1.w"]),
                        params[f"{base}.ffn.1.b"]))
    hmid = T.dropout(hmid, cfg.dropout, training, rng)
    f = T.add(T.matmul(hmid, params[f"{base}.ffn.2.w"]), params[f"{base}.ffn.2.b"])
    return T.layer_norm(T.add(x1, f), params[f"{base}.norm2.gamma"],
                        params[f"{base}.norm2.beta"])


def context_attention(v: Tensor, w: Tensor) -> Tensor:
    """Summarize one clip's frames [F, V, d] into [V, d].

    The context c = tanh(mean_over_frames(v) @ w); each frame gets a
    scalar weight sigmoid(<v_i, c>) (Frobenius inner product) and the
    result is the unnormalized weighted sum of frames.
    """
    if v.ndim != 3 or v.shape[0] < 1:
        raise ShapeError("context_attention expects a non-empty [F, V, d] block")
    ctx = T.tanh(T.matmul(T.reduce_mean(v, axis=0), w))
    joints, d = ctx.shape
    weights = T.sigmoid(T.reduce_sum(T.mul(v, T.reshape(ctx, (1, joints, d))),
                                     axis=(1, 2)))
    gated = T.mul(v, T.reshape(weights, (v.shape[0], 1, 1)))
    return T.reduce_sum(gated, axis=0)


def forward(model: StarModel, batch: RaggedBatch, training: bool = False,
            rng: np.random.Generator | None = None) -> Tensor:
    """Run the full pipeline; returns logits [num_clips, num_classes]."""
    cfg = model.config
    params = model.params
    if batch.num_joints != model.num_joints:
        raise DataFormatError(
            f"batch has {batch.num_joints} joints, model expects {model.num_joints}")
    n, v = batch.num_frames, batch.num_joints

    x = T.reshape(T.add(T.matmul(Tensor(batch.frames.reshape(n * v, RAW_CHANNELS)),
                                 params["embed.w"]), params["embed.b"]),
                  (n, v, cfg.d_model))
    pe = segmented_positional_encoding(batch, cfg.d_model)
    x = T.add(x, T.reshape(pe, (n, 1, cfg.d_model)))

    mhsa_cfg = cfg.mhsa
    for layer in range(cfg.num_layers):
        sp_base = f"layers.{layer}.spatial"
        tp_base = f"layers.{layer}.temporal"
        sp_params = _attn_params(params, f"{sp_base}.attn")
        tp_params = _attn_params(params, f"{tp_base}.attn")
        if cfg.spatial_variant == "sparse":
            sp_attn = sparse_mhsa(x, model.support, sp_params, mhsa_cfg)
        else:
            sp_attn = dense_masked_mhsa(x, model._full_mask, sp_params, mhsa_cfg)
        tp_attn = segmented_linear_mhsa(x, batch.segment_offsets, tp_params,
                                        mhsa_cfg, cfg.kernel)
        sp_out = _encoder(x, sp_attn, params, sp_base, cfg, training, rng)
        tp_out = _encoder(x, tp_attn, params, tp_base, cfg, training, rng)
        x = T.add(sp_out, tp_out)
    if cfg.final_norm:
        x = T.layer_norm(x, params["final_norm.gamma"], params["final_norm.beta"])

    # The head runs per clip on a [1, d] row so a clip's logits are bit
    # identical no matter how it is batched (BLAS picks different kernels
    # for different row counts).
    clip_bounds = np.append(batch.clip_offsets, n)
    logit_rows = []
    for c in range(batch.num_clips):
        lo, hi = int(clip_bounds[c]), int(clip_bounds[c + 1])
        block = T.slice_rows(x, lo, hi)
        pooled = T.reduce_mean(context_attention(block, params["context.w"]), axis=0)
        # length-normalized pooling: the context summary is a weighted sum
        # over frames, so dividing by the clip's frame count keeps the head
        # input scale independent of clip length (20 vs 600 frames)
        feat = T.reshape(T.scale(pooled, 1.0 / (hi - lo)), (1, cfg.d_model))
        hid = T.silu(T.add(T.matmul(feat, params["head.1.w"]), params["head.1.b"]))
        hid = T.dropout(hid, cfg.dropout, training, rng)
        logit_rows.append(T.add(T.matmul(hid, params["head.2.w"]),
                                params["head.2.b"]))
    return logit_rows[0] if len(logit_rows) == 1 else T.concat_rows(logit_rows)


def param_count(model: StarModel) -> tuple[int, dict[str, int]]:
    """Trainable scalar count, total and broken down by parameter kind."""
    breakdown: dict[str, int] = {}
    for name, tensor in model.params.items():
        if ".norm" in name or name.startswith("final_norm"):
            kind = "LayerNorm"
        elif name.startswith("context"):
            kind = "Context"
        else:
            kind = "Linear"
        breakdown[kind] = breakdown.get(kind, 0) + tensor.size
    return sum(breakdown.values()), breakdown


def format_param_table(model: StarModel) -> str:
    total, breakdown = param_count(model)
    rows = sorted(breakdown.items(), key=lambda kv: kv[1], reverse=True)
    lines = [f"{'kind':<12}{'parameters':>12}"]
    for i, (kind, count) in enumerate(rows):
        star = " *" if i < 3 else "  "
        lines.append(f"{kind:<12}{count:>12,}{star}")
    lines.append(f"{'total':<12}{total:>12,}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_VERSION = 1


def skeleton_hash(graph: SkeletonGraph) -> str:
    canon = f"V {graph.num_joints};" + ";".join(
        f"{min(i, j)},{max(i, j)}" for i, j in sorted(
            (min(i, j), max(i, j)) for i, j in graph.edges))
    return hashlib.sha256(canon.encode()).hexdigest()


def save_checkpoint(model: StarModel, path) -> None:
    """JSON container: config, skeleton, then parameters in sorted-name
    order, each as {shape, row-major data}."""
    cfg = asdict(model.config)  # nested KernelSpec becomes a dict too
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": cfg,
        "skeleton": {
            "num_joints": model.graph.num_joints,
            "edges": [list(e) for e in model.graph.edges],
            "hash": skeleton_hash(model.graph),
        },
        "params": {
            name: {"shape": list(t.shape), "data": t.data.ravel().tolist()}
            for name, t in sorted(model.params.items())
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> StarModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version "
                              f"{payload.get('format_version')!r}")
    cfg_dict = dict(payload["config"])
    cfg_dict["kernel"] = KernelSpec(**cfg_dict["kernel"])
    config = StarConfig(**cfg_dict)
    graph = SkeletonGraph(num_joints=payload["skeleton"]["num_joints"],
                          edges=tuple(tuple(e) for e in payload["skeleton"]["edges"]))
    if skeleton_hash(graph) != payload["skeleton"]["hash"]:
        raise DataFormatError("checkpoint skeleton hash mismatch")
    params = {
        name: Tensor(np.array(rec["data"]).reshape(rec["shape"]), requires_grad=True)
        for name, rec in payload["params"].items()
    }
    model = init_model(config, graph)
    if set(params) != set(model.params):
        raise DataFormatError("checkpoint parameter names do not match the config")
    for name, t in params.items():
        if t.shape != model.params[name].shape:
            raise DataFormatError(f"checkpoint parameter {name} has shape "
                                  f"{t.shape}, expected {model.params[name].shape}")
    model.params = params
    return model


def toy_batch(model: StarModel, num_frames: int, num_segments: int = 1,
              seed: int = 0) -> RaggedBatch:
    """Random single-clip batch shaped for this model (bench/profile input)."""
    rng = np.random.Generator(np.random.Philox(seed))
    frames = rng.normal(0.0, 1.0, size=(num_frames, model.num_joints, RAW_CHANNELS))
    if num_segments < 1 or num_segments > num_frames:
        raise ConfigError("num_segments must be in [1, num_frames]")
    offsets = np.linspace(0, num_frames, num_segments, endpoint=False).astype(np.int64)
    offsets[0] = 0
    return RaggedBatch(
        frames=frames,
        clip_index=np.zeros(num_frames, dtype=np.int64),
        segment_index=np.repeat(np.arange(num_segments),
                                np.diff(np.append(offsets, num_frames))),
        segment_offsets=offsets,
        labels=np.zeros(1, dtype=np.int64),
    )
