"""Op-level contracts: examples, oracles, and error surfaces."""

import numpy as np
import pytest

from star import tensor as T
from star.errors import (ConfigError, NumericError, OutOfBoundsError, ShapeError,
                         TapeError)
from star.tensor import Tape, Tensor


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 0.0], [0.0, 1.0]])
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(T.matmul(a, b).data, b.data)

    def test_ones_inner_product(self):
        a = Tensor(np.ones((1, 3)))
        b = Tensor(np.ones((3, 1)))
        assert T.matmul(a, b).data[0, 0] == 3.0

    def test_matches_triple_loop_oracle(self, rng):
        a = rng.normal(size=(4, 5))
        b = rng.normal(size=(5, 2))
        want = np.zeros((4, 2))
        for i in range(4):
            for j in range(2):
                for k in range(5):
                    want[i, j] += a[i, k] * b[k, j]
        got = T.matmul(Tensor(a), Tensor(b)).data
        assert np.abs(got - want).max() < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_stacked_leading_dims(self, rng):
        a = rng.normal(size=(3, 2, 4, 5))
        b = rng.normal(size=(3, 2, 5, 6))
        got = T.matmul(Tensor(a), Tensor(b)).data
        assert np.allclose(got, a @ b)


class TestElementwise:
    def test_silu_at_zero(self):
        assert T.silu(Tensor([0.0])).data[0] == 0.0

    def test_elu_kernel_boundary(self):
        assert T.add(T.elu(Tensor([0.0])), 1.0).data[0] == 1.0

    def test_sigmoid_at_zero(self):
        assert T.sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_div_by_zero(self):
        with pytest.raises(NumericError):
            T.div(Tensor([1.0]), Tensor([0.0]))

    def test_exp_overflow_is_surfaced(self):
        with pytest.raises(NumericError):
            T.exp(Tensor([1000.0]))

    def test_disallowed_broadcast(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.ones((3, 1, 2))), Tensor(np.ones((3, 4))))

    def test_trailing_dim_broadcast(self, rng):
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=3)
        assert np.allclose(T.add(Tensor(a), Tensor(b)).data, a + b)


class TestGatherScatter:
    def test_gather_rows(self):
        src = Tensor([[1.0], [2.0], [3.0]])
        out = T.gather(src, [2, 0])
        assert np.array_equal(out.data, [[3.0], [1.0]])

    def test_gather_identity_permutation(self, rng):
        src = rng.normal(size=(5, 3))
        out = T.gather(Tensor(src), np.arange(5))
        assert np.array_equal(out.data, src)

    def test_gather_out_of_bounds(self):
        with pytest.raises(OutOfBoundsError):
            T.gather(Tensor(np.ones((3, 1))), [3])

    def test_scatter_sum_example(self):
        src = Tensor([[1.0], [2.0], [3.0]])
        out = T.scatter_reduce(src, [0, 0, 1], 2, reduce="sum")
        assert np.array_equal(out.data, [[3.0], [3.0]])

    def test_scatter_distinct_is_permutation(self, rng):
        src = rng.normal(size=(4, 2))
        out = T.scatter_reduce(Tensor(src), [2, 0, 3, 1], 4, reduce="sum")
        assert np.allclose(np.sort(out.data, axis=0), np.sort(src, axis=0))

    def test_scatter_then_gather_matches_loop_oracle(self, rng):
        src = rng.normal(size=(20, 3))
        idx = rng.integers(0, 6, size=20)
        summed = T.scatter_reduce(Tensor(src), idx, 6, reduce="sum")
        back = T.gather(summed, idx)
        want = np.zeros((6, 3))
        for i, j in enumerate(idx):
            want[j] += src[i]
        assert np.abs(back.data - want[idx]).max() < 1e-12

    def test_scatter_max_with_empty_groups(self):
        src = Tensor([[1.0, -2.0], [3.0, -4.0]])
        out, empty = T.scatter_reduce(src, [0, 0], 2, reduce="max",
                                      return_empty_mask=True)
        assert np.array_equal(out.data, [[3.0, -2.0], [0.0, 0.0]])
        assert list(empty) == [False, True]

    def test_gather_gradient_is_scatter_add(self, rng):
        src = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        idx = np.array([1, 1, 3])
        with Tape() as tape:
            out = T.gather(src, idx)
            loss = T.reduce_sum(T.mul(out, out))
        tape.backward(loss)
        g = tape.grad(src)
        want = np.zeros((4, 2))
        for i, j in enumerate(idx):
            want[j] += 2 * src.data[j]
        assert np.abs(g - want).max() < 1e-12


class TestLayerNorm:
    def test_constant_row_gives_beta(self):
        x = Tensor(np.full((2, 4), 7.0))
        gamma = Tensor(np.ones(4))
        beta = Tensor(np.arange(4.0))
        out = T.layer_norm(x, gamma, beta)
        assert np.abs(out.data - np.arange(4.0)).max() < 1e-9

    def test_output_mean_is_beta_mean(self, rng):
        x = Tensor(rng.normal(size=(5, 8)))
        gamma = Tensor(np.ones(8))
        beta = Tensor(rng.normal(size=8))
        out = T.layer_norm(x, gamma, beta)
        assert np.abs(out.data.mean(axis=-1) - beta.data.mean()).max() < 1e-9

    def test_empty_last_dim(self):
        with pytest.raises(ShapeError):
            T.layer_norm(Tensor(np.ones((2, 0))), Tensor(np.ones(0)), Tensor(np.ones(0)))


class TestDropout:
    def test_p_zero_is_identity(self, rng):
        x = Tensor(rng.normal(size=(4, 4)))
        assert T.dropout(x, 0.0, training=True, rng=rng) is x

    def test_eval_is_identity(self, rng):
        x = Tensor(rng.normal(size=(4, 4)))
        assert T.dropout(x, 0.9, training=False) is x

    def test_p_out_of_range(self, rng):
        with pytest.raises(ConfigError):
            T.dropout(Tensor([1.0]), 1.0, training=True, rng=rng)

    def test_expected_value_preserved(self):
        # Monte Carlo: mean over 1e5 samples within 2% at p = 0.5
        rng = np.random.Generator(np.random.Philox(9))
        x = Tensor(np.full(100_000, 3.0))
        out = T.dropout(x, 0.5, training=True, rng=rng)
        assert abs(out.data.mean() - 3.0) / 3.0 < 0.02


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        with Tape() as tape:
            loss = T.reduce_sum(x)
        tape.backward(loss)
        assert np.array_equal(tape.grad(x), np.ones((3, 4)))

    def test_quadratic_gradient(self, rng):
        x = Tensor(rng.normal(size=(5,)), requires_grad=True)
        with Tape() as tape:
            loss = T.reduce_sum(T.mul(x, x))
        tape.backward(loss)
        assert np.abs(tape.grad(x) - 2 * x.data).max() < 1e-12

    def test_unused_leaf_gets_zeros(self, rng):
        x = Tensor(rng.normal(size=(3,)), requires_grad=True)
        y = Tensor(rng.normal(size=(3,)), requires_grad=True)
        with Tape() as tape:
            loss = T.reduce_sum(x)
        tape.backward(loss)
        assert np.array_equal(tape.grad(y), np.zeros(3))

    def test_non_scalar_loss(self, rng):
        x = Tensor(rng.normal(size=(3,)), requires_grad=True)
        with Tape() as tape:
            y = T.mul(x, x)
        with pytest.raises(ShapeError):
            tape.backward(y)

    def test_detached_graph(self, rng):
        loss = Tensor([1.0], requires_grad=True)
        tape = Tape()
        with pytest.raises(TapeError):
            tape.backward(loss)

    def test_nested_tapes_forbidden(self):
        with Tape():
            with pytest.raises(TapeError):
                Tape().__enter__()


class TestSegmentOps:
    def test_segment_outer_matches_loop(self, rng):
        a = rng.normal(size=(7, 3))
        b = rng.normal(size=(7, 2))
        seg = np.array([0, 0, 1, 1, 1, 3, 3])
        out = T.segment_outer(Tensor(a), Tensor(b), seg, 4)
        want = np.zeros((4, 3, 2))
        for r in range(7):
            want[seg[r]] += np.outer(a[r], b[r])
        assert np.abs(out.data - want).max() < 1e-12

    def test_segment_matvec_matches_loop(self, rng):
        mats = rng.normal(size=(3, 4, 2))
        x = rng.normal(size=(6, 2))
        seg = np.array([0, 0, 1, 2, 2, 2])
        out = T.segment_matvec(Tensor(mats), Tensor(x), seg)
        want = np.stack([mats[seg[r]] @ x[r] for r in range(6)])
        assert np.abs(out.data - want).max() < 1e-12

    def test_decreasing_segments_rejected(self, rng):
        a = Tensor(rng.normal(size=(3, 2)))
        with pytest.raises(ShapeError):
            T.segment_outer(a, a, np.array([1, 0, 0]), 2)
