"""Full-pipeline contracts: shapes, isolation, context attention, parameter
accounting, checkpoints."""

import numpy as np
import pytest

from star.data import collate, synth_dataset
from star.errors import ShapeError
from star.model import (PRESETS, StarConfig, context_attention, forward,
                        format_param_table, init_model, load_checkpoint,
                        param_count, preset, save_checkpoint, skeleton_hash,
                        toy_batch)
from star.tensor import Tensor


@pytest.fixture(scope="module")
def tiny_model():
    model = init_model(preset("tiny", seed=4))
    # the classifier layer starts at zeros; randomize it so logit-equality
    # assertions are not vacuously true
    r = np.random.default_rng(99)
    model.params["head.2.w"] = Tensor(r.normal(0, 0.3, (16, 3)),
                                      requires_grad=True)
    return model


@pytest.fixture(scope="module")
def clips():
    return synth_dataset(classes=3, clips_per_class=3, len_range=(8, 16),
                         noise_sigma=0.02, seed=9)


class TestForward:
    def test_logit_shape_any_layout(self, tiny_model, clips):
        for chunk in (clips[:1], clips[:4], clips):
            batch = collate(chunk)
            logits = forward(tiny_model, batch)
            assert logits.shape == (len(chunk), 3)

    def test_permuting_clips_permutes_logits_exactly(self, tiny_model, clips):
        batch = collate(clips)
        base = forward(tiny_model, batch).data
        order = [4, 0, 8, 2, 6, 1, 7, 3, 5]
        permuted = forward(tiny_model, collate([clips[i] for i in order])).data
        assert np.array_equal(permuted, base[order])

    def test_duplicated_clips_identical_rows(self, tiny_model, clips):
        batch = collate([clips[0], clips[3], clips[0]])
        logits = forward(tiny_model, batch).data
        assert np.array_equal(logits[0], logits[2])

    def test_batch_size_invariance(self, tiny_model, clips):
        alone = forward(tiny_model, collate([clips[5]])).data[0]
        together = forward(tiny_model, collate(clips)).data[5]
        assert np.array_equal(alone, together)

    def test_segment_isolation_random_trials(self, tiny_model, clips):
        rng = np.random.default_rng(0)
        batch = collate(clips)
        base = forward(tiny_model, batch).data
        for _ in range(10):
            victim = int(rng.integers(len(clips)))
            mutated = [c for c in clips]
            persons = [p.copy() for p in clips[victim].persons]
            f = int(rng.integers(persons[0].shape[0]))
            persons[0][f] += rng.normal(size=persons[0][f].shape)
            mutated[victim] = type(clips[victim])(persons=persons,
                                                  label=clips[victim].label)
            out = forward(tiny_model, collate(mutated)).data
            others = [i for i in range(len(clips)) if i != victim]
            assert np.array_equal(out[others], base[others])
            assert not np.array_equal(out[victim], base[victim])

    def test_full_variant_runs(self, clips):
        model = init_model(preset("tiny", seed=4, spatial_variant="full"))
        logits = forward(model, collate(clips[:2]))
        assert logits.shape == (2, 3)

    def test_no_padding_rows_for_long_two_person_clip(self, tiny_model):
        batch = toy_batch(tiny_model, num_frames=600, num_segments=2)
        assert batch.frames.shape[0] == 600
        logits = forward(tiny_model, batch)
        assert logits.shape == (1, 3)


class TestContextAttention:
    def test_single_frame(self, rng):
        v = Tensor(rng.normal(size=(1, 4, 6)))
        w = Tensor(rng.normal(size=(6, 6)) * 0.3)
        out = context_attention(v, w)
        c = np.tanh(v.data[0] @ w.data)
        a = 1.0 / (1.0 + np.exp(-np.sum(v.data[0] * c)))
        assert 0.0 < a < 1.0
        assert np.abs(out.data - a * v.data[0]).max() < 1e-12

    def test_zero_context_weight_halves_sum(self, rng):
        v = Tensor(rng.normal(size=(5, 3, 4)))
        out = context_attention(v, Tensor(np.zeros((4, 4))))
        assert np.abs(out.data - 0.5 * v.data.sum(axis=0)).max() < 1e-12

    def test_matches_frame_loop_oracle(self, rng):
        f, j, d = 7, 4, 5
        v = rng.normal(size=(f, j, d))
        w = rng.normal(size=(d, d)) * 0.4
        c = np.tanh(v.mean(axis=0) @ w)
        weights = [1.0 / (1.0 + np.exp(-np.sum(v[i] * c))) for i in range(f)]
        want = sum(weights[i] * v[i] for i in range(f))
        out = context_attention(Tensor(v), Tensor(w))
        assert np.abs(out.data - want).max() < 1e-12

    def test_weights_strictly_inside_unit_interval(self, rng):
        # extreme inputs still give weights in (0, 1): outputs stay bounded
        v = Tensor(rng.normal(size=(3, 2, 4)) * 50)
        out = context_attention(v, Tensor(np.eye(4)))
        total = np.abs(v.data).sum(axis=0)
        assert np.all(np.abs(out.data) <= total + 1e-9)

    def test_empty_clip_rejected(self):
        with pytest.raises(ShapeError):
            context_attention(Tensor(np.zeros((0, 2, 4))), Tensor(np.eye(4)))


class TestParamCount:
    def test_d_model_doubling_quadruples_linear(self):
        m64 = init_model(preset("star64"))
        m128 = init_model(preset("star128"))
        _, b64 = param_count(m64)
        _, b128 = param_count(m128)
        ratio = b128["Linear"] / b64["Linear"]
        assert 3.5 < ratio < 4.1

    def test_star64_total_in_expected_band(self):
        total, _ = param_count(init_model(preset("star64")))
        # published model size for this configuration is 0.42M
        assert 200_000 <= total <= 900_000

    def test_layer_norm_closed_form(self):
        for name in ("tiny", "star64"):
            cfg = PRESETS[name]
            model = init_model(cfg)
            _, breakdown = param_count(model)
            want = cfg.num_layers * 2 * 2 * 2 * cfg.d_model
            if cfg.final_norm:
                want += 2 * cfg.d_model
            assert breakdown["LayerNorm"] == want

    def test_context_block_is_d_squared(self):
        model = init_model(preset("tiny"))
        _, breakdown = param_count(model)
        assert breakdown["Context"] == 8 * 8

    def test_table_lists_all_kinds(self):
        table = format_param_table(init_model(preset("tiny")))
        for kind in ("Linear", "LayerNorm", "Context", "total"):
            assert kind in table


class TestCheckpoint:
    def test_round_trip(self, tmp_path, clips):
        model = init_model(preset("tiny", seed=8))
        path = tmp_path / "ckpt.json"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.config == model.config
        for name, t in model.params.items():
            assert np.array_equal(t.data, loaded.params[name].data)
        batch = collate(clips[:2])
        assert np.array_equal(forward(model, batch).data,
                              forward(loaded, batch).data)

    def test_skeleton_hash_tracks_edges(self):
        m = init_model(preset("tiny"))
        h1 = skeleton_hash(m.graph)
        from star.graph import SkeletonGraph
        other = SkeletonGraph(num_joints=3, edges=((0, 1), (1, 2)))
        assert h1 != skeleton_hash(other)


class TestConfig:
    def test_presets_match_published_dims(self):
        assert PRESETS["star64"].d_model == 64
        assert PRESETS["star128"].d_model == 128
        assert PRESETS["star64"].num_layers == 5
        assert PRESETS["star64"].dropout == 0.5

    def test_ffn_defaults_to_twice_d(self):
        assert StarConfig(d_model=32).ffn_dim == 64
        assert StarConfig(d_model=32, ffn_hidden=48).ffn_dim == 48
