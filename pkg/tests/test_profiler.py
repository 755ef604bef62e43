"""MAC/latency accounting: zero observational effect, consistency with the
analytic counts, linear scaling of the temporal path."""

import numpy as np
from fractions import Fraction

import star.bench as bench_mod
from star.data import collate, synth_dataset
from star.model import forward, init_model, param_count, preset, toy_batch
from star.profiler import Profiler
from star.spatial import SCORE_SCOPE
from star.tensor import Tensor


def test_profiling_does_not_change_outputs():
    model = init_model(preset("tiny", seed=2))
    r = np.random.default_rng(3)
    model.params["head.2.w"] = Tensor(r.normal(0, 0.3, (16, 3)),
                                      requires_grad=True)
    batch = collate(synth_dataset(classes=2, clips_per_class=2,
                                  len_range=(8, 12), seed=4))
    plain = forward(model, batch).data
    with Profiler():
        profiled = forward(model, batch).data
    assert np.array_equal(plain, profiled)


def test_totals_equal_sum_of_records():
    model = init_model(preset("tiny", seed=2))
    batch = toy_batch(model, 30, 2)
    with Profiler() as prof:
        forward(model, batch)
    assert prof.total_macs() == sum(r.macs for r in prof.records())
    assert prof.by_kind()["matmul"].count > 0


def test_params_table_matches_param_count():
    model = init_model(preset("tiny", seed=2))
    report, _ = bench_mod.profile_model(model, toy_batch(model, 20, 1))
    total, breakdown = param_count(model)
    assert report.params_total == total
    assert report.params_breakdown == breakdown


def test_doubling_frames_doubles_temporal_macs():
    model = init_model(preset("tiny", seed=2))
    macs = {}
    for n in (40, 80):
        with Profiler() as prof:
            forward(model, toy_batch(model, n, 1))
        macs[n] = (prof.scope_macs("temporal.core")
                   + prof.scope_macs("temporal.proj"))
    assert macs[80] == 2 * macs[40]


def test_sparse_vs_full_model_score_ratio_is_support_fraction():
    sparse_model = init_model(preset("tiny", seed=2))
    full_model = init_model(preset("tiny", seed=2, spatial_variant="full"))
    batch = toy_batch(sparse_model, 25, 1)
    with Profiler() as p1:
        forward(sparse_model, batch)
    with Profiler() as p2:
        forward(full_model, batch)
    v = sparse_model.num_joints
    assert (Fraction(p1.scope_macs(SCORE_SCOPE), p2.scope_macs(SCORE_SCOPE))
            == Fraction(sparse_model.support.num_entries, v * v))


def test_format_table_highlights_top3():
    model = init_model(preset("tiny", seed=2))
    with Profiler() as prof:
        forward(model, toy_batch(model, 10, 1))
    table = prof.format_table()
    assert table.count("*") == 3
    assert "total" in table
