import numpy as np
import pytest

from echopipe.nn import RMSProp, rmsprop_step
from echopipe.nn import functional as F
from echopipe.nn import layers as L
from echopipe.nn.model import Model


def test_zero_gradient_leaves_param():
    p = np.array([1.5, -2.0])
    new, v = rmsprop_step(p, np.zeros(2), np.zeros(2))
    np.testing.assert_array_equal(new, p)
    np.testing.assert_array_equal(v, 0)


def test_first_step_magnitude():
    new, v = rmsprop_step(np.array([0.0]), np.array([1.0]), np.array([0.0]), lr=1e-3, rho=0.9, eps=1e-8)
    assert v[0] == pytest.approx(0.1)
    assert new[0] == pytest.approx(-1e-3 / np.sqrt(0.1 + 1e-8), rel=1e-12)
    assert new[0] == pytest.approx(-3.1623e-3, abs=1e-7)


def test_state_accumulates():
    p, v = np.array([0.0]), np.array([0.0])
    for _ in range(3):
        p, v = rmsprop_step(p, np.array([2.0]), v)
    assert v[0] == pytest.approx(4 * (1 - 0.9 ** 3))


def test_optimizer_reduces_loss():
    rng = np.random.default_rng(0)
    m = Model([L.dense(1, "none")], (3,), seed=1, bits=64)
    x = rng.standard_normal((32, 3))
    y = x @ np.array([[1.0], [-2.0], [0.5]])
    opt = RMSProp(lr=0.05)
    first = None
    for _ in range(200):
        loss, d = F.mse(y, m.forward(x, train=True))
        first = loss if first is None else first
        grads, _ = m.backward(d)
        opt.step(m.params, grads)
    assert loss < first * 1e-2


def test_step_keeps_dtype():
    m = Model([L.dense(2)], (2,), bits=32)
    opt = RMSProp()
    grads = [(np.ones_like(p.weight), np.ones_like(p.bias)) for p in m.params]
    opt.step(m.params, grads)
    assert m.params[0].weight.dtype == np.float32
