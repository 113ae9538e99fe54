import numpy as np
import pytest

from pointdet.nn.autodiff import (
    LOG_EPS,
    Tensor,
    concat,
    log_softmax,
    minimum_of,
    stack_scalars,
)


def numeric_grad(fn, x, h=1e-6):
    """Central finite differences of a scalar-valued fn at x."""
    g = np.zeros_like(x, dtype=float)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        g[i] = (fn(xp) - fn(xm)) / (2 * h)
        it.iternext()
    return g


def check_grad(build, x, tol=1e-6):
    """`build(Tensor) -> scalar Tensor`; compares backward to finite diff."""
    t = Tensor(x.copy())
    out = build(t)
    out.backward()
    fd = numeric_grad(lambda v: float(build(Tensor(v)).data), x)
    np.testing.assert_allclose(t.grad, fd, rtol=1e-5, atol=tol)


def test_backward_requires_scalar():
    with pytest.raises(ValueError):
        Tensor(np.zeros(3)).backward()


def test_add_mul_broadcast_grads():
    r = np.random.default_rng(0)
    x = r.normal(size=(4, 3))
    b = r.normal(size=(1, 3))
    check_grad(lambda t: ((t * 2.0 + Tensor(b)) * t).sum(), x)


def test_matmul_grads():
    r = np.random.default_rng(1)
    x = r.normal(size=(5, 4))
    w = r.normal(size=(4, 2))
    check_grad(lambda t: (t @ Tensor(w)).sum(), x)
    t = Tensor(x)
    wt = Tensor(w)
    loss = (t @ wt).sum()
    loss.backward()
    fd = numeric_grad(lambda v: float((Tensor(x) @ Tensor(v)).data.sum()), w)
    np.testing.assert_allclose(wt.grad, fd, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("op", ["relu", "sigmoid", "exp", "sin", "cos", "abs", "smooth_l1"])
def test_unary_op_grads(op):
    r = np.random.default_rng(hash(op) % 2**32)
    # Keep away from the relu/abs kink at 0 and the smooth-l1 kink at |x|=1.
    x = r.normal(size=(3, 4))
    x = np.where(np.abs(x) < 0.05, 0.3, x)
    x = np.where(np.abs(np.abs(x) - 1.0) < 0.05, 0.7, x)
    check_grad(lambda t: getattr(t, op)().sum(), x)


def test_log_clamps_small_values():
    t = Tensor(np.array([1e-20, 1.0]))
    out = t.log()
    assert out.data[0] == np.log(LOG_EPS)
    out.sum().backward()
    assert t.grad[0] == 0.0  # clamped entries get no gradient
    assert t.grad[1] == pytest.approx(1.0)


def test_sum_mean_axis_grads():
    r = np.random.default_rng(2)
    x = r.normal(size=(4, 5))
    check_grad(lambda t: t.sum(axis=1).mean(), x)
    check_grad(lambda t: t.mean(axis=0, keepdims=True).sum(), x)


def test_max_pool_routes_gradient_to_argmax():
    x = np.array([[1.0, 5.0, 2.0], [7.0, 1.0, 3.0]])
    t = Tensor(x)
    t.max_pool(axis=1).sum().backward()
    np.testing.assert_array_equal(t.grad, [[0, 1, 0], [1, 0, 0]])


def test_reshape_and_getitem_grads():
    r = np.random.default_rng(3)
    x = r.normal(size=(6,))
    check_grad(lambda t: t.reshape(2, 3).sum(), x)
    check_grad(lambda t: t[np.array([0, 2, 2])].sum(), x)  # repeated index accumulates


def test_getitem_fancy_rows():
    x = np.arange(12.0).reshape(4, 3)
    t = Tensor(x)
    t[np.array([1, 1, 3])].sum().backward()
    expect = np.zeros((4, 3))
    expect[1] = 2.0
    expect[3] = 1.0
    np.testing.assert_array_equal(t.grad, expect)


def test_concat_grads():
    r = np.random.default_rng(4)
    a, b = Tensor(r.normal(size=(2, 3))), Tensor(r.normal(size=(2, 2)))
    concat([a, b], axis=1).sum().backward()
    np.testing.assert_array_equal(a.grad, np.ones((2, 3)))
    np.testing.assert_array_equal(b.grad, np.ones((2, 2)))


def test_stack_scalars_grads():
    parts = [Tensor(np.array(2.0)), Tensor(np.array(3.0))]
    (stack_scalars(parts) * Tensor(np.array([1.0, 10.0]))).sum().backward()
    assert parts[0].grad == pytest.approx(1.0)
    assert parts[1].grad == pytest.approx(10.0)


def test_minimum_of_picks_smaller_branch():
    a, b = Tensor(np.array(1.0)), Tensor(np.array(2.0))
    minimum_of(a, b).backward()
    assert a.grad == 1.0 and b.grad is None


def test_log_softmax_matches_reference():
    r = np.random.default_rng(5)
    x = r.normal(size=(3, 4)) * 10
    out = log_softmax(Tensor(x), axis=1)
    ref = x - np.log(np.exp(x - x.max(axis=1, keepdims=True)).sum(axis=1, keepdims=True)) \
        - x.max(axis=1, keepdims=True)
    np.testing.assert_allclose(out.data, ref, atol=1e-12)
    check_grad(lambda t: (log_softmax(t, axis=1) * Tensor(np.eye(3, 4))).sum(), x)


def test_grad_accumulates_across_reuse():
    x = Tensor(np.array(3.0))
    (x * x + x).backward()  # d/dx (x^2 + x) = 2x + 1
    assert x.grad == pytest.approx(7.0)


def test_graph_with_shared_subexpression():
    x = Tensor(np.array(2.0))
    y = x * x
    (y + y).backward()
    assert x.grad == pytest.approx(8.0)
