import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from affectfusion import ndcore as nd
from affectfusion.ndcore import (
    ContractError, DegenerateInputError, DimensionError, DomainError, RngState, Tensor,
)

import gradsuite

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def fd_grad(fn, x, h=1e-5):
    """Central differences of a scalar numpy function, coordinate by coordinate."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fn(xp) - fn(xm)) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12))


# ---------------------------------------------------------------- matmul

def test_matmul_identity_and_annihilator():
    B = Tensor([[3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal(nd.matmul(Tensor(np.eye(2)), B).data, B.data)
    assert np.array_equal(nd.matmul(Tensor(np.zeros((2, 3))), Tensor(np.ones((3, 2)))).data,
                          np.zeros((2, 2)))


def test_matmul_grad_matches_fd():
    rng = np.random.default_rng(0)
    a0, b0 = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    A = Tensor(a0.copy(), requires_grad=True)
    nd.backward(nd.sum(nd.matmul(A, Tensor(b0))))
    assert rel_err(A.grad, fd_grad(lambda a: (a @ b0).sum(), a0)) <= 1e-6


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        nd.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


# ---------------------------------------------------------------- elementwise

def test_elementwise_values():
    assert nd.sigmoid(Tensor(0.0)).item() == 0.5
    assert nd.tanh(Tensor(0.0)).item() == 0.0
    assert nd.elementwise("relu", Tensor([-1.0, 2.0])).data.tolist() == [0.0, 2.0]
    assert nd.elementwise("scale", Tensor([1.0, 2.0]), 3.0).data.tolist() == [3.0, 6.0]


def test_sigmoid_grad_at_1_2():
    x = Tensor(1.2, requires_grad=True)
    nd.backward(nd.sigmoid(x))
    s = lambda v: 1 / (1 + np.exp(-v))
    num = (s(1.2 + 1e-5) - s(1.2 - 1e-5)) / 2e-5
    assert abs(x.grad - num) / abs(num) <= 1e-6


def test_log_domain_and_shape_errors():
    with pytest.raises(DomainError):
        nd.log(Tensor([1.0, 0.0]))
    with pytest.raises(DomainError):
        nd.log(Tensor([-2.0]))
    with pytest.raises(DimensionError):
        nd.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
    with pytest.raises(DimensionError):
        nd.mul(Tensor(np.ones((2, 3))), Tensor(np.ones(3)))


def test_exp_overflow_is_domain_error():
    with pytest.raises(DomainError):
        nd.exp(Tensor([1000.0]))


def test_scalar_broadcast_grad_reduces():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(2.0, requires_grad=True)
    nd.backward(nd.sum(a * b))
    assert b.grad == pytest.approx(6.0)
    assert np.array_equal(a.grad, np.full((2, 3), 2.0))


@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-700, 700)))
def test_sigmoid_stays_finite(x):
    y = nd.sigmoid(Tensor(x)).data
    assert np.all(np.isfinite(y)) and np.all((y >= 0) & (y <= 1))


# ---------------------------------------------------------------- reduce

def test_reduce_examples():
    assert nd.mean(Tensor([1.0, 2.0, 3.0])).item() == 2.0
    assert nd.sum(Tensor([[1.0, 2.0], [3.0, 4.0]]), axis=0).data.tolist() == [4.0, 6.0]
    x = Tensor(np.arange(5.0), requires_grad=True)
    nd.backward(nd.mean(x))
    assert np.allclose(x.grad, 0.2, rtol=0, atol=1e-15)


def test_reduce_errors():
    with pytest.raises(DegenerateInputError):
        nd.mean(Tensor(np.zeros((0, 3))))
    with pytest.raises(DimensionError):
        nd.sum(Tensor(np.ones((2, 2))), axis=2)


# ---------------------------------------------------------------- softmax

def test_softmax_examples():
    assert np.allclose(nd.softmax(Tensor([0.0, 0.0, 0.0])).data, 1 / 3, atol=1e-15)
    y = nd.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(y)) and y[0] == pytest.approx(1.0) and y[1] < 1e-300


def test_softmax_grad_length6():
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=6)
    r = rng.normal(size=6)
    x = Tensor(x0.copy(), requires_grad=True)
    nd.backward(nd.sum(nd.softmax(x) * Tensor(r)))

    def np_soft(v):
        e = np.exp(v - v.max())
        return (e / e.sum() * r).sum()

    assert rel_err(x.grad, fd_grad(np_soft, x0)) <= 1e-6


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 7)), elements=finite),
       st.floats(-100, 100), st.integers(0, 1))
def test_softmax_sums_to_one_and_is_shift_invariant(x, c, axis):
    y = nd.softmax(Tensor(x), axis=axis).data
    assert np.all(np.abs(y.sum(axis=axis) - 1) <= 1e-12)
    assert np.all(np.abs(nd.softmax(Tensor(x + c), axis=axis).data - y) <= 1e-12)


# ---------------------------------------------------------------- lstm

def test_lstm_cell_zero_params():
    z = lambda *s: Tensor(np.zeros(s))
    h, c = nd.lstm_cell(Tensor(np.arange(4.0)), z(8), z(8), z(4, 32), z(8, 32), z(32))
    assert h.shape == (8,) and c.shape == (8,)
    assert np.array_equal(h.data, np.zeros(8)) and np.array_equal(c.data, np.zeros(8))


def test_lstm_cell_full_grad():
    rep = gradsuite.run_case(gradsuite.OP_CASES["lstm_cell"], 0, tol=1e-5)
    assert rep.passed, rep


def test_lstm_cell_shape_error():
    z = lambda *s: Tensor(np.zeros(s))
    with pytest.raises(DimensionError):
        nd.lstm_cell(z(3), z(2), z(2), z(4, 8), z(2, 8), z(8))


def test_lstm_seq_matches_unrolled_cells():
    rng = np.random.default_rng(5)
    B, T, d, h = 2, 6, 3, 4
    x = rng.normal(size=(B, T, d))
    w, u, b = rng.normal(size=(d, 4 * h)), rng.normal(size=(h, 4 * h)), rng.normal(size=4 * h)
    hc = nd.lstm_seq(Tensor(x), Tensor(w), Tensor(u), Tensor(b)).data
    for i in range(B):
        hs, cs = Tensor(np.zeros(h)), Tensor(np.zeros(h))
        for t in range(T):
            hs, cs = nd.lstm_cell(Tensor(x[i, t]), hs, cs, Tensor(w), Tensor(u), Tensor(b))
            assert np.allclose(hc[0, i, t], hs.data, rtol=0, atol=1e-13)
            assert np.allclose(hc[1, i, t], cs.data, rtol=0, atol=1e-13)


# ---------------------------------------------------------------- backward

def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        nd.backward(x * 2.0)


def test_backward_accumulates_until_zeroed():
    x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    nd.backward(nd.sum(x * x))
    nd.backward(nd.sum(x * x))
    assert np.array_equal(x.grad, 2 * 2 * x.data)
    nd.zero_grad([x])
    nd.backward(nd.sum(x * x))
    assert np.array_equal(x.grad, 2 * x.data)


def test_backward_reaches_every_leaf_through_shared_nodes():
    a = Tensor(2.0, requires_grad=True)
    b = a * a
    loss = b * b + b   # a^4 + a^2
    nd.backward(loss)
    assert a.grad == pytest.approx(4 * 8 + 2 * 2)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with nd.no_grad():
        y = nd.sum(x * 3.0)
    assert not y.requires_grad


def test_deep_chain_does_not_recurse():
    x = Tensor(1.0, requires_grad=True)
    y = x
    for _ in range(5000):
        y = y + 0.0
    nd.backward(y)
    assert x.grad == 1.0


# ---------------------------------------------------------------- grad_check

def test_grad_check_analytic_square():
    x = Tensor([1.0, 2.0], requires_grad=True)
    rep = nd.grad_check(lambda: nd.sum(x * x), [x], tol=1e-6)
    assert rep.passed and rep.n_checked == 2
    nd.backward(nd.sum(x * x))
    assert np.allclose(x.grad, [2.0, 4.0])


def test_grad_check_catches_corrupted_backward():
    def bad_square(t):
        # backward deliberately off by a factor of 3/2
        return nd.make_op(t.data ** 2, (t,), lambda g: (3.0 * t.data * g,), "bad_square")

    x = Tensor(np.array([0.5, -1.5, 2.0]), requires_grad=True)
    rep = nd.grad_check(lambda: nd.sum(bad_square(x)), [x])
    assert not rep.passed and len(rep.failures) == 3


@pytest.mark.parametrize("name", sorted(gradsuite.OP_CASES))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ops_pass_grad_check(name, seed):
    rep = gradsuite.run_case(gradsuite.OP_CASES[name], seed)
    assert rep.passed, rep


# ---------------------------------------------------------------- clip / dropout

def test_clip_grad_norm_examples():
    p = Tensor(np.zeros(2), requires_grad=True)
    p.grad = np.array([3.0, 4.0])
    assert nd.clip_grad_norm([p], 0.8) == 5.0
    assert np.linalg.norm(p.grad) == pytest.approx(0.8, abs=1e-15)

    q = Tensor(np.zeros(2), requires_grad=True)
    q.grad = np.array([0.3, 0.4])
    before = q.grad.copy()
    nd.clip_grad_norm([q], 0.8)
    assert q.grad.tobytes() == before.tobytes()


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 10))
def test_clip_grad_norm_random(seed, max_norm):
    rng = np.random.default_rng(seed)
    params = []
    for shape in [(3, 2), (4,), ()]:
        t = Tensor(np.zeros(shape), requires_grad=True)
        t.grad = rng.normal(size=shape) * rng.uniform(0.01, 5)
        params.append(t)
    pre = nd.clip_grad_norm(params, max_norm)
    post = np.sqrt(sum(float(np.sum(t.grad ** 2)) for t in params))
    assert abs(post - min(pre, max_norm)) <= 1e-12 * max(1.0, pre)


def test_dropout_identity_cases():
    x = Tensor(np.arange(6.0))
    rng = np.random.default_rng(0)
    assert np.array_equal(nd.dropout(x, 0.0, rng, True).data, x.data)
    assert np.array_equal(nd.dropout(x, 0.5, rng, False).data, x.data)


def test_dropout_zero_fraction_and_scale():
    y = nd.dropout(Tensor(np.ones(100_000)), 0.2, RngState(11).stream("dropout"), True).data
    assert abs(np.mean(y == 0) - 0.2) <= 0.01
    assert np.allclose(y[y != 0], 1 / 0.8)


def test_dropout_rejects_bad_p():
    with pytest.raises(ContractError):
        nd.dropout(Tensor(np.ones(3)), 1.0, np.random.default_rng(0), True)


# ---------------------------------------------------------------- rng

def test_rng_streams_reproduce_and_differ():
    a = RngState(42).stream("dropout").random(5)
    b = RngState(42).stream("dropout").random(5)
    c = RngState(42).stream("init").random(5)
    d = RngState(43).stream("dropout").random(5)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def test_rng_unknown_stream():
    with pytest.raises(ContractError):
        RngState(0).stream("nonsense")


def test_layer_norm_statistics():
    rng = np.random.default_rng(9)
    x = rng.normal(3.0, 5.0, size=(2, 7, 16))
    y = nd.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16))).data
    assert np.all(np.abs(y.mean(-1)) <= 1e-6)
    assert np.all(np.abs(y.var(-1) - 1) <= 1e-6)


def test_ops_keep_finite_inputs_finite():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(4, 5)) * 30)
    for fn in (nd.sigmoid, nd.tanh, nd.relu, nd.softmax, nd.log_softmax):
        assert np.all(np.isfinite(fn(x).data))
