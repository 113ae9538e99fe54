import numpy as np
import pytest

from pointdet.nn.autodiff import Tensor
from pointdet.nn.optim import Adam, OneCycleSchedule, Sgd


def test_onecycle_shape():
    sched = OneCycleSchedule(peak_lr=1.0, total_steps=100)
    warm = sched.warmup_steps
    assert sched.lr(0) == pytest.approx(1.0 / 25)
    assert sched.lr(warm) == pytest.approx(1.0)
    # Monotone rise through warmup, monotone fall afterwards.
    rise = [sched.lr(s) for s in range(warm + 1)]
    fall = [sched.lr(s) for s in range(warm, 101)]
    assert all(a <= b for a, b in zip(rise, rise[1:]))
    assert all(a >= b for a, b in zip(fall, fall[1:]))
    assert sched.lr(100) == pytest.approx(1e-4)


def test_onecycle_validates_steps():
    with pytest.raises(ValueError):
        OneCycleSchedule(0.1, 0)


def test_sgd_step_and_zero_grad():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    p.grad = np.array([0.5, -0.5])
    opt = Sgd([p], lr=0.1)
    opt.step()
    np.testing.assert_allclose(p.data, [0.95, 2.05])
    opt.zero_grad()
    assert p.grad is None


def test_sgd_skips_missing_grad():
    p = Tensor(np.ones(2), requires_grad=True)
    Sgd([p], lr=0.1).step()
    np.testing.assert_array_equal(p.data, np.ones(2))


def test_nonfinite_gradient_raises():
    p = Tensor(np.ones(2), requires_grad=True)
    p.grad = np.array([1.0, float("nan")])
    with pytest.raises(FloatingPointError):
        Sgd([p], lr=0.1).step()
    with pytest.raises(FloatingPointError):
        Adam([p], lr=0.1).step()


def test_adam_first_step_moves_by_lr():
    # With bias correction the very first Adam step has magnitude ~lr.
    p = Tensor(np.array([0.0]), requires_grad=True)
    p.grad = np.array([3.0])
    opt = Adam([p], lr=0.1)
    opt.step()
    assert p.data[0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_converges_on_quadratic():
    p = Tensor(np.array([5.0, -3.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        loss = (p * p).sum()
        loss.backward()
        opt.step()
    np.testing.assert_allclose(p.data, 0.0, atol=1e-3)


def test_adam_state_roundtrip():
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.array([0.3])
    opt.step()
    state = opt.state()
    fresh = Adam([Tensor(np.array([1.0]), requires_grad=True)], lr=0.1)
    fresh.load_state(state)
    assert fresh.step_count == opt.step_count
    np.testing.assert_array_equal(fresh.m[0], opt.m[0])
    np.testing.assert_array_equal(fresh.v[0], opt.v[0])


def test_adam_with_schedule_uses_scheduled_lr():
    sched = OneCycleSchedule(peak_lr=1.0, total_steps=10)
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([p], lr=123.0, schedule=sched)
    p.grad = np.array([1.0])
    opt.step()
    assert abs(p.data[0]) == pytest.approx(sched.lr(0), rel=1e-6)
