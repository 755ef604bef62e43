"""Attention benchmark rows, CSV schemas, and the kernel backend sweep."""

import csv

import numpy as np

from star.bench import (BENCH_HEADER, KERNEL_BENCH_HEADER, bench_attention,
                        bench_kernels, fit_exponent, write_bench_csv,
                        write_kernel_csv)
from star.model import init_model, preset


def _fast_points(lengths=(16, 32), iters=2, warmup=1):
    model = init_model(preset("tiny", seed=0))
    return bench_attention(lengths, model=model, warmup=warmup, iters=iters)


def test_rows_cover_all_variants_and_lengths():
    points = _fast_points()
    variants = {p.variant for p in points}
    assert variants == {"sparse-spatial", "dense-spatial", "segmented-linear",
                        "quadratic-oracle"}
    assert {p.n_frames for p in points} == {16, 32}


def test_dense_macs_dominate_sparse_everywhere():
    points = _fast_points()
    sparse = {p.n_frames: p.core_macs for p in points
              if p.variant == "sparse-spatial"}
    dense = {p.n_frames: p.core_macs for p in points
             if p.variant == "dense-spatial"}
    for n in sparse:
        assert dense[n] >= sparse[n]


def test_sparse_dense_ratio_matches_support_fraction():
    model = init_model(preset("tiny", seed=0))
    points = bench_attention((8,), model=model, warmup=0, iters=1)
    sparse = next(p for p in points if p.variant == "sparse-spatial")
    dense = next(p for p in points if p.variant == "dense-spatial")
    v = model.num_joints
    assert sparse.core_macs / dense.core_macs == model.support.num_entries / v ** 2
    # the published ablation reports 15.58 vs 73.33 GMACs (ratio 0.2125);
    # the measured attention-MAC ratio must land within 2x of it
    measured = sparse.core_macs / dense.core_macs
    assert 0.5 < measured / 0.2125 < 2.0


def test_csv_schema_round_trip(tmp_path):
    points = _fast_points(lengths=(8,), iters=1, warmup=0)
    path = tmp_path / "bench.csv"
    write_bench_csv(points, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == BENCH_HEADER
    assert len(rows) == 1 + len(points)
    for row in rows[1:]:
        assert int(row[4]) >= 0
        float(row[6])  # wall_ms parses


def test_fit_exponent_recovers_powers():
    xs = [16, 32, 64, 128]
    assert abs(fit_exponent(xs, [3.0 * x for x in xs]) - 1.0) < 1e-9
    assert abs(fit_exponent(xs, [0.5 * x * x for x in xs]) - 2.0) < 1e-9


def test_kernel_bench_covers_both_backends(tmp_path):
    rows = bench_kernels(row_counts=(256,), cols=4, groups=8, warmup=0, iters=1)
    backends = {r["backend"] for r in rows}
    assert "numpy" in backends
    kernels_seen = {r["kernel"] for r in rows}
    assert "scatter_add_rows" in kernels_seen and "seg_outer_rows" in kernels_seen
    path = tmp_path / "kernels.csv"
    write_kernel_csv(rows, path)
    with open(path, newline="") as fh:
        got = list(csv.reader(fh))
    assert got[0] == KERNEL_BENCH_HEADER
    assert len(got) == 1 + len(rows)


def test_parallel_sweep_matches_serial_macs():
    model = init_model(preset("tiny", seed=0))
    serial = bench_attention((8, 16), model=model, warmup=0, iters=1)
    par = bench_attention((8, 16), model=model, warmup=0, iters=1, parallel=True)
    key = lambda p: (p.variant, p.n_frames)
    assert ({key(p): p.core_macs for p in serial}
            == {key(p): p.core_macs for p in par})
