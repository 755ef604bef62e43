"""Profiling harness and the attention / kernel-backend benchmarks.

Latency methodology: 3 warmup iterations, then the median wall time of
10 measured iterations (both configurable).  MAC columns come from the
profiler's attention-core scopes so complexity fits are not diluted by
the linear-cost projections; totals are also reported.
"""

from __future__ import annotations

import csv
import time
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - always present in the test env
    def threadpool_limits(limits=None):
        return nullcontext()

from . import kernels, spatial, temporal
from .model import StarModel, forward, init_model, param_count, preset
from .profiler import Profiler
from .spatial import MhsaConfig, dense_masked_mhsa, sparse_mhsa
from .temporal import quadratic_segment_oracle, segmented_linear_mhsa
from .tensor import Tensor


# ---------------------------------------------------------------------------
# model-level profile

@dataclass
class ProfileReport:
    op_table: list[dict]
    total_macs: int
    total_seconds: float
    scope_macs: dict[str, int]
    params_total: int
    params_breakdown: dict[str, int]

    def to_json(self) -> dict:
        return {
            "ops": self.op_table,
            "total_macs": self.total_macs,
            "total_seconds": self.total_seconds,
            "scope_macs": self.scope_macs,
            "params": {"total": self.params_total, **self.params_breakdown},
        }


def profile_model(model: StarModel, batch) -> tuple[ProfileReport, Profiler]:
    """Profile one eval-mode forward pass; outputs are unaffected."""
    with Profiler() as prof:
        forward(model, batch, training=False)
    table = sorted(prof.by_kind().values(), key=lambda r: r.macs, reverse=True)
    total, breakdown = param_count(model)
    scopes = {}
    for (scope, _), rec in prof._records.items():
        if scope:
            scopes[scope] = scopes.get(scope, 0) + rec.macs
    report = ProfileReport(
        op_table=[{"kind": r.kind, "macs": r.macs, "seconds": r.seconds,
                   "count": r.count} for r in table],
        total_macs=prof.total_macs(),
        total_seconds=prof.total_seconds(),
        scope_macs=scopes,
        params_total=total,
        params_breakdown=breakdown,
    )
    return report, prof


# ---------------------------------------------------------------------------
# attention benchmark

BENCH_HEADER = ["variant", "n_frames", "num_joints", "num_segments",
                "core_macs", "total_macs", "wall_ms", "core_ms"]

_VARIANTS = ("sparse-spatial", "dense-spatial", "segmented-linear",
             "quadratic-oracle")


@dataclass
class BenchPoint:
    variant: str
    n_frames: int
    num_joints: int
    num_segments: int
    core_macs: int
    total_macs: int
    wall_ms: float
    core_ms: float

    def row(self) -> list:
        return [self.variant, self.n_frames, self.num_joints, self.num_segments,
                self.core_macs, self.total_macs, repr(self.wall_ms),
                repr(self.core_ms)]


def _median_ms(fn, warmup: int, iters: int) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(samples))


def _median_core_ms(fn, scopes, iters: int) -> float:
    samples = []
    for _ in range(iters):
        with Profiler() as prof:
            fn()
        samples.append(sum(prof.scope_seconds(s) for s in scopes) * 1e3)
    return float(np.median(samples))


_CORE_SCOPES = {
    "sparse-spatial": (spatial.SCORE_SCOPE,),
    "dense-spatial": (spatial.SCORE_SCOPE,),
    "segmented-linear": (temporal.CORE_SCOPE,),
    "quadratic-oracle": (temporal.ORACLE_CORE_SCOPE,),
}


def bench_attention(lengths, model=None, variants=_VARIANTS, num_segments: int = 1,
                    warmup: int = 3, iters: int = 10, seed: int = 0,
                    parallel: bool = False) -> list[BenchPoint]:
    """Forward-only sweep of the four attention routes over clip lengths.

    Single-threaded by default: BLAS thread-count heuristics flip between
    matrix sizes and wreck timing comparability across the sweep.  With
    `parallel` the sweep points run concurrently (each with its own
    thread-local profiler); timings are then only indicative.
    """
    lengths = list(lengths)
    if not lengths:
        raise ValueError("empty sweep")
    if parallel:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor() as pool:
            chunks = pool.map(
                lambda n: _bench_attention([n], model, variants, num_segments,
                                           warmup, iters, seed),
                lengths)
        return [p for chunk in chunks for p in chunk]
    with threadpool_limits(limits=1):
        return _bench_attention(lengths, model, variants, num_segments,
                                warmup, iters, seed)


def _bench_attention(lengths, model, variants, num_segments, warmup, iters,
                     seed) -> list[BenchPoint]:
    if model is None:
        model = init_model(preset("star64", num_heads=2, num_layers=1, seed=seed))
    cfg = MhsaConfig(d_model=model.config.d_model, num_heads=model.config.num_heads)
    spec = model.config.kernel
    v = model.num_joints
    mask_full = Tensor(np.ones((v, v)))
    attn = _bench_params(model)
    rng = np.random.Generator(np.random.Philox(seed))

    points = []
    for n in lengths:
        x = Tensor(rng.normal(0.0, 1.0, size=(n, v, cfg.d_model)))
        offsets = np.linspace(0, n, num_segments, endpoint=False).astype(np.int64)
        offsets[0] = 0
        runs = {
            "sparse-spatial": lambda: sparse_mhsa(x, model.support, attn, cfg),
            "dense-spatial": lambda: dense_masked_mhsa(x, mask_full, attn, cfg),
            "segmented-linear": lambda: segmented_linear_mhsa(
                x, offsets, attn, cfg, spec),
            "quadratic-oracle": lambda: quadratic_segment_oracle(
                x, offsets, attn, cfg, spec),
        }
        for variant in variants:
            fn = runs[variant]
            scopes = _CORE_SCOPES[variant]
            with Profiler() as prof:
                fn()
            core = sum(prof.scope_macs(s) for s in scopes)
            ms = _median_ms(fn, warmup, iters)
            core_ms = _median_core_ms(fn, scopes, iters)
            points.append(BenchPoint(variant=variant, n_frames=n, num_joints=v,
                                     num_segments=num_segments, core_macs=core,
                                     total_macs=prof.total_macs(), wall_ms=ms,
                                     core_ms=core_ms))
    return points


def _bench_params(model: StarModel) -> dict:
    base = "layers.0.spatial.attn"
    return {
        "wq": model.params[f"{base}.q.w"], "bq": model.params[f"{base}.q.b"],
        "wk": model.params[f"{base}.k.w"], "bk": model.params[f"{base}.k.b"],
        "wv": model.params[f"{base}.v.w"], "bv": model.params[f"{base}.v.b"],
        "wo": model.params[f"{base}.o.w"], "bo": model.params[f"{base}.o.b"],
    }


def write_bench_csv(points: list[BenchPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_HEADER)
        for p in points:
            writer.writerow(p.row())


def fit_exponent(sizes, values) -> float:
    """Least-squares slope of log(value) against log(size)."""
    xs = np.log(np.asarray(sizes, dtype=np.float64))
    ys = np.log(np.asarray(values, dtype=np.float64))
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


# ---------------------------------------------------------------------------
# kernel backend comparison

KERNEL_BENCH_HEADER = ["kernel", "backend", "rows", "cols", "wall_us"]


def bench_kernels(row_counts=(4096, 65536), cols: int = 32, groups: int = 64,
                  warmup: int = 2, iters: int = 7, seed: int = 0) -> list[dict]:
    """Time each hot kernel under both backends (numba twin skipped when
    numba is unavailable)."""
    backends = [kernels.reference]
    if kernels.have_numba():
        from .kernels import jit as jit_mod
        backends.append(jit_mod)
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    for rows in row_counts:
        src = rng.normal(size=(rows, cols))
        idx = np.sort(rng.integers(0, groups, size=rows)).astype(np.int64)
        mats = rng.normal(size=(groups, cols, cols))
        cases = {
            "gather_rows": lambda k: k.gather_rows(src, idx),
            "scatter_add_rows": lambda k: k.scatter_add_rows(src, idx, groups),
            "scatter_max_rows": lambda k: k.scatter_max_rows(src, idx, groups),
            "seg_outer_rows": lambda k: k.seg_outer_rows(src, src, idx, groups),
            "seg_matvec_rows": lambda k: k.seg_matvec_rows(mats, src, idx),
        }
        for name, call in cases.items():
            for mod in backends:
                us = _median_ms(lambda: call(mod), warmup, iters) * 1e3
                out.append({"kernel": name, "backend": mod.NAME, "rows": rows,
                            "cols": cols, "wall_us": us})
    return out


def write_kernel_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=KERNEL_BENCH_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
