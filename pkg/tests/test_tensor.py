"""Unit and property tests for the autodiff core."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import check_gradients
from iram.tensor import (
    DegenerateMaskError,
    DimensionError,
    EmptyInputError,
    RankError,
    TapeError,
    Tensor,
    add,
    add_const,
    backward,
    concat,
    dropout,
    embedding_lookup,
    log_softmax_rows,
    matmul,
    max_pool_cols,
    mul,
    narrow,
    neg,
    no_grad,
    pick_rows,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    stack_rows,
    sub,
    tanh,
    tensor_mean,
    tensor_sum,
    transpose,
)


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matmul(a, b).data, b.data)

    def test_row_times_column(self):
        out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_gradient_matches_finite_differences(self):
        # d sum(a @ b) / da at a=[[1,2]], b=[[3],[4]] is [[3, 4]]
        a = Tensor([[1.0, 2.0]], requires_grad=True)
        b = Tensor([[3.0], [4.0]])
        worst = check_gradients(lambda: tensor_sum(matmul(a, b)), [a], h=1e-6)
        loss = tensor_sum(matmul(a, b))
        a.grad = None
        backward(loss)
        np.testing.assert_allclose(a.grad, [[3.0, 4.0]], atol=1e-12)
        assert worst < 1e-4

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError) as err:
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
        assert "(2, 3)" in str(err.value)

    def test_vector_forms(self):
        m = Tensor([[1.0, 2.0], [3.0, 4.0]])
        v = Tensor([1.0, 1.0])
        np.testing.assert_array_equal(matmul(v, m).data, [4.0, 6.0])
        np.testing.assert_array_equal(matmul(m, v).data, [3.0, 7.0])


class TestSoftmax:
    def test_uniform_on_equal_scores(self):
        out = softmax(Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)

    def test_reference_values(self):
        # independent oracle: direct exp/sum in float64
        values = [1.0, 2.0, 3.0]
        exp = [math.exp(v) for v in values]
        expected = [e / sum(exp) for e in exp]
        out = softmax(Tensor(values))
        np.testing.assert_allclose(out.data, expected, atol=1e-15)
        np.testing.assert_allclose(out.data, [0.09003057, 0.24472847, 0.66524096], atol=1e-8)

    def test_single_unmasked_position(self):
        out = softmax(Tensor([5.0, 5.0]), mask=[True, False])
        np.testing.assert_array_equal(out.data, [1.0, 0.0])

    def test_all_masked_is_degenerate(self):
        with pytest.raises(DegenerateMaskError):
            softmax(Tensor([1.0, 2.0]), mask=[False, False])

    def test_empty_vector(self):
        with pytest.raises(EmptyInputError):
            softmax(Tensor(np.zeros(0)))

    def test_large_scores_do_not_overflow(self):
        out = softmax(Tensor([1000.0, 1000.0, 999.0]))
        assert np.isfinite(out.data).all()
        assert abs(out.data.sum() - 1.0) < 1e-9

    @given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=12))
    @settings(max_examples=60, deadline=None)
    def test_probability_vector(self, values):
        out = softmax(Tensor(values))
        assert (out.data >= 0).all()
        assert abs(out.data.sum() - 1.0) < 1e-9


class TestBackward:
    def test_square_gradient(self):
        x = Tensor([3.0], requires_grad=True)
        backward(tensor_sum(mul(x, x)))
        np.testing.assert_allclose(x.grad, [6.0], atol=1e-12)
        check_gradients(lambda: tensor_sum(mul(x, x)), [x])

    def test_sum_gradient_is_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        backward(tensor_sum(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_detached_constant_raises(self):
        with pytest.raises(TapeError):
            backward(Tensor(5.0))

    def test_second_backward_raises(self):
        x = Tensor([2.0], requires_grad=True)
        loss = tensor_sum(mul(x, x))
        backward(loss)
        with pytest.raises(TapeError):
            backward(loss)

    def test_non_scalar_raises(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(RankError):
            backward(mul(x, x))

    def test_gradient_accumulates_over_shared_inputs(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(tensor_sum(add(mul(x, x), x)))
        np.testing.assert_allclose(x.grad, [3.0, 5.0])

    def test_no_grad_detaches(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = tensor_sum(mul(x, x))
        assert not y.requires_grad
        with pytest.raises(TapeError):
            backward(y)

    def test_deep_chain_does_not_recurse(self):
        x = Tensor([1.0], requires_grad=True)
        y = x
        for _ in range(5000):
            y = add_const(y, 0.0)
        backward(tensor_sum(y))
        np.testing.assert_array_equal(x.grad, [1.0])


class TestPrimitiveGradients:
    """Reverse-mode vs central finite differences for every primitive."""

    def setup_method(self):
        self.rng = np.random.default_rng(20240817)

    def leaf(self, *shape):
        return Tensor(self.rng.uniform(-2, 2, shape), requires_grad=True)

    def test_add_same_shape(self):
        a, b = self.leaf(3, 2), self.leaf(3, 2)
        check_gradients(lambda: tensor_sum(mul(add(a, b), add(a, b))), [a, b])

    def test_add_bias_broadcast(self):
        a, b = self.leaf(3, 4), self.leaf(4)
        check_gradients(lambda: tensor_sum(mul(add(a, b), add(a, b))), [a, b])

    def test_sub_mul_neg_scale(self):
        a, b = self.leaf(2, 3), self.leaf(2, 3)
        check_gradients(lambda: tensor_sum(mul(sub(a, b), neg(scale(b, 0.7)))), [a, b])

    def test_matmul_all_forms(self):
        a, b = self.leaf(3, 4), self.leaf(4, 2)
        v, u = self.leaf(3), self.leaf(4)
        check_gradients(lambda: tensor_sum(matmul(a, b)), [a, b])
        check_gradients(lambda: tensor_sum(matmul(v, a)), [v, a])
        check_gradients(lambda: tensor_sum(matmul(a, u)), [a, u])

    def test_transpose(self):
        a = self.leaf(3, 2)
        check_gradients(lambda: tensor_sum(mul(transpose(a), transpose(a))), [a])

    def test_sigmoid_tanh(self):
        a = self.leaf(4, 3)
        check_gradients(lambda: tensor_sum(sigmoid(a)), [a])
        check_gradients(lambda: tensor_sum(tanh(a)), [a])

    def test_relu(self):
        a = Tensor(self.rng.uniform(0.2, 2, (3, 3)) * self.rng.choice([-1, 1], (3, 3)),
                   requires_grad=True)
        check_gradients(lambda: tensor_sum(relu(a)), [a])

    def test_softmax(self):
        a = self.leaf(6)
        weights = Tensor(self.rng.uniform(0.5, 1.5, 6))
        mask = np.array([True, True, False, True, True, False])
        check_gradients(lambda: tensor_sum(mul(softmax(a), weights)), [a])
        check_gradients(lambda: tensor_sum(mul(softmax(a, mask), weights)), [a])

    def test_log_softmax_and_pick_rows(self):
        a = self.leaf(4, 3)
        idx = np.array([0, 2, 1, 2])
        check_gradients(lambda: tensor_mean(pick_rows(log_softmax_rows(a), idx)), [a])

    def test_concat_and_stack(self):
        a, b = self.leaf(2, 3), self.leaf(1, 3)
        check_gradients(lambda: tensor_sum(mul(concat([a, b]), concat([a, b]))), [a, b])
        v, w = self.leaf(4), self.leaf(4)
        check_gradients(lambda: tensor_sum(mul(stack_rows([v, w]), stack_rows([v, w]))), [v, w])

    def test_narrow_reshape(self):
        a = self.leaf(4, 5)
        check_gradients(lambda: tensor_sum(mul(narrow(a, 1, 1, 3), narrow(a, 1, 1, 3))), [a])
        check_gradients(lambda: tensor_sum(mul(reshape(a, (2, 10)), reshape(a, (2, 10)))), [a])

    def test_max_pool_cols(self):
        a = self.leaf(3, 8)
        check_gradients(lambda: tensor_sum(max_pool_cols(mul(a, a), 4)), [a])

    def test_dropout_fixed_mask(self):
        a = self.leaf(4, 4)
        check_gradients(
            lambda: tensor_sum(dropout(mul(a, a), 0.4, True, np.random.default_rng(3))), [a])

    def test_embedding_lookup(self):
        table = self.leaf(6, 3)
        ids = np.array([0, 3, 3, 5])
        check_gradients(lambda: tensor_sum(mul(embedding_lookup(table, ids),
                                               embedding_lookup(table, ids))), [table])


class TestDropout:
    def test_eval_mode_is_identity(self):
        x = Tensor(np.arange(6.0))
        assert dropout(x, 0.5, train=False) is x

    def test_zero_rate_is_identity(self):
        x = Tensor(np.arange(6.0))
        assert dropout(x, 0.0, train=True, rng=np.random.default_rng(0)) is x

    def test_inverted_scaling(self):
        x = Tensor(np.ones((50, 50)))
        out = dropout(x, 0.25, train=True, rng=np.random.default_rng(11))
        kept = out.data[out.data != 0]
        np.testing.assert_allclose(kept, 1.0 / 0.75)

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            dropout(Tensor([1.0]), 1.0, train=True, rng=np.random.default_rng(0))


class TestErrors:
    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            add(Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 2))))

    def test_narrow_out_of_range(self):
        with pytest.raises(DimensionError):
            narrow(Tensor(np.zeros((2, 2))), 0, 1, 5)

    def test_pick_rows_bad_index(self):
        with pytest.raises(IndexError):
            pick_rows(Tensor(np.zeros((2, 3))), np.array([0, 3]))

    def test_max_pool_indivisible(self):
        with pytest.raises(DimensionError):
            max_pool_cols(Tensor(np.zeros((2, 5))), 2)
