"""Tensor engine tests: the finite-difference oracle is validated first
against closed-form derivatives, then every op is checked against it."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvad import autodiff as ad
from lvad.autodiff import Tensor, backward, finite_diff_grad, forward_op, grad_close
from lvad.errors import ContractError, DimensionError, DomainError


# ---------------------------------------------------------------------------
# The oracle itself, checked against derivatives known in closed form.

def test_oracle_matches_closed_form_quadratic():
    x = Tensor([1.5, -2.0, 3.0])
    fd = finite_diff_grad(lambda t: float(np.sum(t.data**2)), x)
    assert grad_close(2.0 * x.data, fd, rtol=1e-6, atol=1e-9)


def test_oracle_matches_closed_form_exp():
    x = Tensor([[0.3, -1.1], [0.9, 0.2]])
    fd = finite_diff_grad(lambda t: float(np.sum(np.exp(t.data))), x)
    assert grad_close(np.exp(x.data), fd, rtol=1e-6, atol=1e-9)


def test_oracle_rejects_nonpositive_step():
    with pytest.raises(ContractError):
        finite_diff_grad(lambda t: 0.0, Tensor([1.0]), h=0.0)


# Frozen derived value: grad of sigmoid(w.x) at w=0 is 0.25*x.  The oracle
# run that produced it is kept alongside the frozen expectation.
def test_sigmoid_dot_gradient_at_zero_weights():
    x = np.array([0.4, -1.2, 2.0, 0.7])
    w = Tensor(np.zeros((1, 4)), requires_grad=True)

    def f(wt: Tensor) -> float:
        return float(1.0 / (1.0 + np.exp(-(wt.data @ x)))[0])

    fd = finite_diff_grad(f, w)
    frozen = 0.25 * x.reshape(1, 4)
    assert grad_close(frozen, fd, rtol=1e-6, atol=1e-9)

    out = ad.sigmoid(ad.matmul(w, Tensor(x.reshape(4, 1))))
    backward(out)
    assert grad_close(w.grad, frozen, rtol=1e-9, atol=1e-12)
    assert grad_close(w.grad, fd)


# ---------------------------------------------------------------------------
# Trivial anchors.

def test_matmul_identity_unchanged():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = ad.matmul(a, Tensor(np.eye(2)))
    np.testing.assert_array_equal(out.data, a.data)


def test_sum_of_concat_equals_sum_of_parts():
    a, b = Tensor([[1.0, 2.0]]), Tensor([[3.0, 5.0]])
    total = ad.concat([a, b], axis=1).sum()
    assert total.item() == pytest.approx(11.0)


def test_sigmoid_zero_is_half():
    assert ad.sigmoid(Tensor(0.0)).item() == 0.5


def test_relu_negative_is_zero():
    assert ad.relu(Tensor([-3.0])).data[0] == 0.0


def test_leaky_relu_paper_slope():
    # slope -2 reflects negatives upward: [-1, 2] -> [2, 2]
    out = ad.leaky_relu(Tensor([-1.0, 2.0]), slope=-2.0)
    np.testing.assert_allclose(out.data, [2.0, 2.0])


def test_dropout_eval_is_identity():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    out = ad.dropout(x, 0.5, training=False)
    np.testing.assert_array_equal(out.data, x.data)


def test_dropout_train_scales_survivors():
    x = Tensor(np.ones((50, 40)))
    out = ad.dropout(x, 0.25, training=True, rng=np.random.default_rng(3))
    vals = np.unique(out.data)
    assert set(np.round(vals, 12)) <= {0.0, np.round(1.0 / 0.75, 12)}
    kept = np.mean(out.data != 0.0)
    assert 0.70 < kept < 0.80


def test_softmax_of_equal_logits_is_uniform():
    out = ad.softmax(Tensor([[0.0, 0.0, 0.0]]), axis=1)
    np.testing.assert_allclose(out.data, np.full((1, 3), 1.0 / 3.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 10_000))
def test_softmax_rows_always_sum_to_one(rows, cols, seed):
    x = np.random.default_rng(seed).normal(scale=4.0, size=(rows, cols))
    out = ad.softmax(Tensor(x), axis=1)
    np.testing.assert_allclose(out.data.sum(axis=1), np.ones(rows), atol=1e-12)
    assert np.all(out.data > 0.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_tensor_shape_matches_payload(values):
    t = Tensor(values)
    assert int(np.prod(t.shape)) == t.data.size == len(values)


# ---------------------------------------------------------------------------
# Per-op gradient sweep against the oracle.  Inputs keep away from relu and
# arccosh kinks as the contract requires.

def _offset_from_zero(x, eps=5e-2):
    return np.where(np.abs(x) < eps, eps * np.sign(x) + (x == 0.0) * eps, x)


def _check(f_tensor, f_plain, x0, rtol=1e-4, atol=1e-6):
    x = Tensor(x0, requires_grad=True)
    out = f_tensor(x)
    backward(out.sum() if out.size > 1 else out)
    fd = finite_diff_grad(lambda t: float(np.sum(f_plain(t).data)), Tensor(x0))
    assert grad_close(x.grad, fd, rtol=rtol, atol=atol), f"analytic {x.grad} vs fd {fd}"


RNG = np.random.default_rng(2024)


@pytest.mark.parametrize("name", sorted(ad.op_names()))
def test_op_gradients_match_oracle(name):
    x0 = _offset_from_zero(RNG.normal(size=(3, 4)))
    other = Tensor(RNG.normal(size=(3, 4)))
    rhs = Tensor(RNG.normal(size=(4, 2)))
    pos = np.abs(RNG.normal(size=(3, 4))) + 0.5
    rng_seed = 11

    cases = {
        "add": (lambda t: ad.add(t, other), x0),
        "sub": (lambda t: ad.sub(t, other), x0),
        "elementwise-mul": (lambda t: ad.mul(t, other), x0),
        "scalar-mul": (lambda t: ad.scale(t, 1.7), x0),
        "matmul": (lambda t: ad.matmul(t, rhs), x0),
        "concat": (lambda t: ad.concat([t, other], axis=0), x0),
        "slice": (lambda t: t[[2, 0], 1:3], x0),
        "transpose": (lambda t: ad.transpose(t), x0),
        "sum": (lambda t: ad.reduce_sum(t, axis=1), x0),
        "mean": (lambda t: ad.reduce_mean(t, axis=0), x0),
        "exp": (lambda t: ad.exp(t), x0),
        "log": (lambda t: ad.log(t), pos),
        "sqrt": (lambda t: ad.sqrt(t), pos),
        "sigmoid": (lambda t: ad.sigmoid(t), x0),
        "softmax": (lambda t: ad.mul(ad.softmax(t, axis=1), other), x0),
        "gelu": (lambda t: ad.gelu(t), x0),
        "relu": (lambda t: ad.relu(t), x0),
        "leaky-relu": (lambda t: ad.leaky_relu(t, slope=-2.0), x0),
        "arccosh": (lambda t: ad.arccosh(t), pos + 1.001),
        "cosh": (lambda t: ad.cosh(t), x0),
        "sinh": (lambda t: ad.sinh(t), x0),
        "squared-norm": (lambda t: ad.squared_norm(t, axis=1), x0),
        "dropout": (
            lambda t: ad.dropout(t, 0.4, training=True, rng=np.random.default_rng(rng_seed)),
            x0,
        ),
    }
    f, arg = cases[name]
    _check(f, f, arg)


def test_composite_chain_gradient():
    x0 = RNG.normal(size=(2, 3)) + 3.0
    weights = Tensor(np.random.default_rng(7).normal(size=(3, 3)))

    def f(t):
        a = ad.gelu(ad.matmul(t, weights))
        b = ad.softmax(ad.add(a, 0.3), axis=1)
        return ad.log(ad.add(ad.squared_norm(b, axis=1, keepdims=True), 1.0))

    _check(f, f, x0)


def test_clamp_gradient_inside_and_outside():
    x = Tensor([[0.5, 2.0, -1.0]], requires_grad=True)
    out = ad.clamp(x, 0.0, 1.0)
    np.testing.assert_allclose(out.data, [[0.5, 1.0, 0.0]])
    backward(out.sum())
    np.testing.assert_allclose(x.grad, [[1.0, 0.0, 0.0]])


def test_composites_reciprocal_and_rsqrt():
    x = Tensor([[4.0, 0.25]], requires_grad=True)
    r = ad.reciprocal_positive(x)
    np.testing.assert_allclose(r.data, [[0.25, 4.0]])
    rs = ad.rsqrt_positive(Tensor([[4.0, 16.0]]))
    np.testing.assert_allclose(rs.data, [[0.5, 0.25]], atol=1e-15)


def test_absval_matches_numpy():
    x = Tensor([[-2.0, 3.0, -0.5]])
    np.testing.assert_allclose(ad.absval(x).data, [[2.0, 3.0, 0.5]])


def test_tile_helpers():
    col = Tensor(np.array([[1.0], [2.0]]))
    np.testing.assert_array_equal(ad.tile_rows(col, 3).data, [[1.0] * 3, [2.0] * 3])
    row = Tensor(np.array([[5.0, 6.0]]))
    np.testing.assert_array_equal(ad.tile_bias(row, 2).data, [[5.0, 6.0]] * 2)


# ---------------------------------------------------------------------------
# Tape mechanics.

def test_backward_accumulates_across_calls():
    x = Tensor([1.0, 2.0], requires_grad=True)
    backward(ad.squared_norm(x))
    first = x.grad.copy()
    backward(ad.squared_norm(x))
    np.testing.assert_allclose(x.grad, 2.0 * first)


def test_tape_cleared_after_backward():
    x = Tensor([1.0], requires_grad=True)
    backward(ad.exp(x).sum())
    assert ad.tape_size() == 0


def test_no_grad_records_nothing():
    ad.clear_tape()
    x = Tensor([1.0, 2.0], requires_grad=True)
    with ad.no_grad():
        out = ad.exp(x)
    assert ad.tape_size() == 0
    assert not out.requires_grad


def test_shared_input_used_twice_gets_both_contributions():
    x = Tensor([[2.0]], requires_grad=True)
    backward(ad.mul(x, x).sum())
    np.testing.assert_allclose(x.grad, [[4.0]])


# ---------------------------------------------------------------------------
# Errors.

def test_shape_mismatch_names_the_op():
    with pytest.raises(DimensionError, match="matmul"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(DimensionError, match="add"):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_arccosh_domain_error():
    with pytest.raises(DomainError, match="arccosh"):
        ad.arccosh(Tensor([0.5]))


def test_arccosh_noise_below_one_is_clamped():
    out = ad.arccosh(Tensor([1.0 - 1e-12]))
    assert out.data[0] == pytest.approx(np.arccosh(1.0 + 1e-12))


def test_log_and_sqrt_domain_errors():
    with pytest.raises(DomainError):
        ad.log(Tensor([0.0]))
    with pytest.raises(DomainError):
        ad.sqrt(Tensor([-1.0]))


def test_backward_requires_scalar_and_nonempty_tape():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = ad.exp(x)
    with pytest.raises(ContractError, match="scalar"):
        backward(y)
    ad.clear_tape()
    with pytest.raises(ContractError, match="empty"):
        backward(Tensor(1.0))


def test_forward_op_unknown_name():
    with pytest.raises(ContractError, match="unknown op"):
        forward_op("logsumexp", [Tensor([1.0])])


def test_forward_op_dispatch_roundtrip():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    out = forward_op("softmax", [forward_op("exp", [a])], {"axis": 1})
    np.testing.assert_allclose(out.data.sum(axis=1), [1.0, 1.0])
    backward(out.sum())
    assert a.grad is not None


def test_dropout_rate_contract():
    with pytest.raises(ContractError):
        ad.dropout(Tensor([1.0]), 1.0, training=True, rng=np.random.default_rng(0))
    with pytest.raises(ContractError):
        ad.dropout(Tensor([1.0]), 0.5, training=True)
