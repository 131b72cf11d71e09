import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from naml.errors import ConfigError, DimensionError, GraphError, InvalidMaskError, NumericalError
from naml.tensor import (Tensor, backward, conv1d_same, dropout, embedding_gather, gradcheck, linear,
                         logsumexp, masked_softmax, matmul, no_grad, relu, stack, tanh, topological_order)

from oracles import conv_same_ref, softmax_ref


def T(x, name=None):
    return Tensor(np.array(x, dtype=np.float64), requires_grad=True, name=name)


def check(fn, tensors, tol=1e-6):
    report = gradcheck(fn, tensors)
    assert max(report.values()) < tol, report


# matmul

def test_matmul_identity_and_dot():
    assert np.array_equal(matmul(T([[1, 0], [0, 1]]), T([[3], [4]])).data, [[3], [4]])
    assert matmul(T([[1, 2]]), T([[3], [4]])).data.tolist() == [[11.0]]


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(T(np.ones((2, 3))), T(np.ones((2, 3))))


def test_matmul_gradcheck():
    rng = np.random.default_rng(0)
    a, b = T(rng.normal(size=(3, 4)), "a"), T(rng.normal(size=(4, 2)), "b")
    check(lambda: matmul(a, b).sum(), [a, b])


def test_matmul_batched_and_vector_gradcheck():
    rng = np.random.default_rng(1)
    a, b, v = T(rng.normal(size=(2, 3, 4)), "a"), T(rng.normal(size=(4, 5)), "b"), T(rng.normal(size=4), "v")
    check(lambda: (matmul(a, b) * matmul(a, b)).sum() + matmul(a, v).sum(), [a, b, v])


def test_linear_gradcheck():
    rng = np.random.default_rng(2)
    x, w, b = T(rng.normal(size=(2, 3, 4)), "x"), T(rng.normal(size=(5, 4)), "w"), T(rng.normal(size=5), "b")
    check(lambda: tanh(linear(x, w, b)).sum(), [x, w, b])


# conv1d_same

def test_conv_center_tap_identity():
    out = conv1d_same(T([[5.0]]), T([[0.0, 1.0, 0.0]]), T([0.0]), 1)
    assert out.data.tolist() == [[5.0]]


def test_conv_sliding_sum_zero_padded():
    out = conv1d_same(T([[1.0], [2.0], [3.0]]), T([[1.0, 1.0, 1.0]]), T([0.0]), 1)
    assert out.data.ravel().tolist() == [3.0, 6.0, 5.0]


def test_conv_matches_loop_reference():
    rng = np.random.default_rng(3)
    seq, kernel, bias = rng.normal(size=(7, 4)), rng.normal(size=(3, 12)), rng.normal(size=3)
    out = conv1d_same(T(seq), T(kernel), T(bias), 1).data
    ref = conv_same_ref(seq.tolist(), kernel.tolist(), bias.tolist(), 1)
    assert np.allclose(out, ref, rtol=0, atol=1e-12)


def test_conv_gradcheck():
    rng = np.random.default_rng(4)
    seq, k, b = T(rng.normal(size=(7, 4)), "seq"), T(rng.normal(size=(3, 12)), "k"), T(rng.normal(size=3), "b")
    check(lambda: tanh(conv1d_same(seq, k, b, 1)).sum(), [seq, k, b])


def test_conv_window_five_gradcheck():
    rng = np.random.default_rng(5)
    seq, k, b = T(rng.normal(size=(2, 3, 2)), "seq"), T(rng.normal(size=(2, 10)), "k"), T(rng.normal(size=2), "b")
    check(lambda: tanh(conv1d_same(seq, k, b, 2)).sum(), [seq, k, b])


def test_conv_errors():
    with pytest.raises(DimensionError):
        conv1d_same(T(np.zeros((0, 2))), T(np.zeros((1, 6))), T([0.0]), 1)
    with pytest.raises(DimensionError):
        conv1d_same(T(np.zeros((3, 2))), T(np.zeros((1, 5))), T([0.0]), 1)


@settings(max_examples=40, deadline=None)
@given(L=st.integers(1, 12), D=st.integers(1, 4), half=st.integers(0, 3))
def test_conv_length_preserved(L, D, half):
    rng = np.random.default_rng(L * 100 + D * 10 + half)
    out = conv1d_same(T(rng.normal(size=(L, D))), T(rng.normal(size=(2, (2 * half + 1) * D))), T([0.0, 0.0]), half)
    assert out.shape == (L, 2)


# relu / tanh

def test_relu_values_and_subgradient_at_zero():
    x = T([-1.0, 0.0, 2.0])
    y = relu(x)
    assert y.data.tolist() == [0.0, 0.0, 2.0]
    backward(y.sum())
    assert x.grad.tolist() == [0.0, 0.0, 1.0]
    assert not relu(T(-np.ones(4))).data.any()


def test_relu_gradcheck_away_from_zero():
    x = T([-1.5, -0.3, 0.4, 2.0], "x")
    check(lambda: (relu(x) * relu(x)).sum(), [x])


def test_tanh():
    assert tanh(T([0.0])).data[0] == 0.0
    big = tanh(T([30.0, -30.0])).data
    assert np.all(np.abs(big) <= 1.0)
    assert np.tanh(5.0) < 1.0 and abs(tanh(T([5.0])).data[0]) < 1.0
    x = T(np.random.default_rng(6).normal(size=5), "x")
    check(lambda: tanh(x).sum(), [x])


# masked_softmax

def test_softmax_examples():
    assert np.allclose(masked_softmax(T([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)
    assert masked_softmax(T([5.0, 5.0]), np.array([True, False])).data.tolist() == [1.0, 0.0]
    assert np.allclose(masked_softmax(T([math.log(2), 0.0])).data, [2 / 3, 1 / 3], atol=1e-15)


def test_softmax_all_masked():
    with pytest.raises(InvalidMaskError):
        masked_softmax(T([1.0, 2.0]), np.array([False, False]))
    assert masked_softmax(T([1.0, 2.0]), np.array([False, False]), allow_empty=True).data.tolist() == [0, 0]


def test_softmax_stable_for_large_scores():
    out = masked_softmax(T([1000.0, 999.0, -1000.0])).data
    assert np.allclose(out, softmax_ref([1000.0, 999.0, -1000.0]), atol=1e-15)


def test_softmax_gradcheck_with_mask():
    x = T(np.random.default_rng(7).normal(size=(3, 5)), "x")
    mask = np.array([[1, 1, 0, 1, 0], [1, 0, 0, 0, 0], [1, 1, 1, 1, 1]], dtype=bool)
    w = np.random.default_rng(8).normal(size=(3, 5))
    check(lambda: (masked_softmax(x, mask) * Tensor(w)).sum(), [x])


scores_st = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=12)


@settings(max_examples=200, deadline=None)
@given(scores=scores_st, data=st.data())
def test_softmax_simplex_property(scores, data):
    n = len(scores)
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    if not mask.any():
        mask[data.draw(st.integers(0, n - 1))] = True
    p = masked_softmax(T(scores), mask).data
    assert np.all(p >= 0)
    assert np.all(p[~mask] == 0)
    assert abs(p.sum() - 1) <= 1e-6


@settings(max_examples=200, deadline=None)
@given(scores=scores_st, shift=st.floats(-100, 100, allow_nan=False))
def test_softmax_shift_invariance(scores, shift):
    p = masked_softmax(T(scores)).data
    q = masked_softmax(T(np.array(scores) + shift)).data
    assert np.max(np.abs(p - q)) <= 1e-9


# embedding_gather

def test_gather_rows_and_repeated_gradient():
    table = T(np.arange(12.0).reshape(4, 3), "table")
    assert embedding_gather(table, np.array([0])).data.tolist() == [[0.0, 1.0, 2.0]]
    out = embedding_gather(table, np.array([2, 2, 1]))
    assert np.array_equal(out.data[0], out.data[1])
    backward(out.sum())
    assert table.grad[2].tolist() == [2.0, 2.0, 2.0]
    assert table.grad[1].tolist() == [1.0, 1.0, 1.0]
    assert not table.grad[[0, 3]].any()


def test_gather_gradcheck_repeated_ids():
    table = T(np.random.default_rng(9).normal(size=(5, 3)), "table")
    ids = np.array([[1, 1, 4], [0, 1, 1]])
    w = Tensor(np.random.default_rng(10).normal(size=(2, 3, 3)))
    check(lambda: (tanh(embedding_gather(table, ids)) * w).sum(), [table])


def test_gather_out_of_range():
    with pytest.raises(IndexError):
        embedding_gather(T(np.zeros((3, 2))), np.array([3]))
    with pytest.raises(IndexError):
        embedding_gather(T(np.zeros((3, 2))), np.array([-1]))


# dropout

def test_dropout_identity_cases():
    x = T(np.ones(10))
    assert dropout(x, 0.0, True, np.random.default_rng(0)) is x
    assert dropout(x, 0.5, False, np.random.default_rng(0)) is x
    with pytest.raises(ConfigError):
        dropout(x, 1.0, True, np.random.default_rng(0))


def test_dropout_rate_and_scaling():
    x = T(np.ones(100_000))
    y = dropout(x, 0.2, True, np.random.default_rng(123)).data
    assert abs(np.mean(y == 0) - 0.2) < 0.005
    assert np.allclose(y[y != 0], 1.25)


def test_dropout_backward_uses_mask():
    x = T(np.ones(50))
    y = dropout(x, 0.5, True, np.random.default_rng(1))
    backward(y.sum())
    assert np.array_equal(x.grad, y.data)


# backward / graph

def test_backward_sum_and_square():
    x = T([1.0, -2.0, 3.0])
    backward(x.sum())
    assert x.grad.tolist() == [1.0, 1.0, 1.0]
    x = T([1.0, -2.0, 3.0])
    backward((x * x).sum())
    assert x.grad.tolist() == [2.0, -4.0, 6.0]


def test_backward_requires_scalar():
    with pytest.raises(DimensionError):
        backward(T([1.0, 2.0]) * 2.0)


def test_second_backward_raises():
    x = T([1.0, 2.0])
    loss = (x * x).sum()
    backward(loss)
    first = x.grad.copy()
    with pytest.raises(GraphError):
        backward(loss)
    assert np.array_equal(x.grad, first)


def test_leaf_gradients_accumulate_across_graphs():
    x = T([1.0, 2.0])
    backward((x * 3.0).sum())
    backward((x * 3.0).sum())
    assert x.grad.tolist() == [6.0, 6.0]
    x.zero_grad()
    assert x.grad.tolist() == [0.0, 0.0]


def test_shared_subexpression_visited_once():
    x = T([2.0])
    y = x * x
    z = y + y
    order = topological_order(z)
    assert len(order) == len({id(n) for n in order})
    assert order.index(x) < order.index(y) < order.index(z)
    backward(z.sum())
    assert x.grad.tolist() == [8.0]


def test_unreachable_parameter_gets_no_gradient():
    a, b = T([1.0]), T([1.0])
    backward((a * 2.0).sum())
    assert b.grad is None


def test_no_grad_records_nothing():
    x = T([1.0])
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad and y._parents == ()


def test_nonfinite_forward_raises():
    with pytest.raises(NumericalError):
        T([1.0]) * np.inf


def test_stack_logsumexp_gradcheck():
    rng = np.random.default_rng(11)
    a, b = T(rng.normal(size=(2, 3)), "a"), T(rng.normal(size=(2, 3)), "b")
    check(lambda: logsumexp(stack([a, b], axis=-1), axis=-1).sum() + (a[:, 1] * b[:, 0]).sum(), [a, b])


def test_logsumexp_value():
    x = np.array([[1000.0, 1000.0], [0.0, math.log(3)]])
    assert np.allclose(logsumexp(T(x)).data, [1000 + math.log(2), math.log(4)], atol=1e-12)
