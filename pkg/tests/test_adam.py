"""Adam update semantics, including the fused whole-model variant."""

import numpy as np
import pytest

from motormeta.errors import NumericError
from motormeta.nn import Dense, FusedParams, LayerParams, adam_step


def scalar_params(w0: float) -> LayerParams:
    return LayerParams(np.array([w0]), None)


def test_zero_gradient_is_fixed_point():
    p = scalar_params(1.5)
    before = p.weights.copy()
    adam_step(p, lr=0.01)
    assert np.array_equal(p.weights, before)
    assert p.step_count == 1


def test_first_step_moves_by_lr_sign():
    # closed form: m_hat = g, v_hat = g^2, so the step is lr * g/(|g| + eps)
    p = scalar_params(0.0)
    p.grad_weights[...] = 1.0
    adam_step(p, lr=0.001)
    assert abs(p.weights[0] + 0.001) < 1e-10
    assert np.array_equal(p.grad_weights, np.zeros(1))


def test_two_steps_match_hand_rolled_trace():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    w, m, v = 0.3, 0.0, 0.0
    grads = [0.7, 0.7]
    p = scalar_params(0.3)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        p.grad_weights[...] = g
        adam_step(p, lr=lr, beta1=b1, beta2=b2, eps=eps)
    assert abs(p.weights[0] - w) < 1e-15
    assert p.step_count == 2


def test_nonfinite_gradient_aborts():
    p = scalar_params(0.0)
    p.grad_weights[...] = np.nan
    with pytest.raises(NumericError):
        adam_step(p, lr=0.01)


def test_fused_matches_per_layer_steps(rng):
    layers_a = [Dense(4, 3, np.random.default_rng(0)), Dense(3, 2, np.random.default_rng(1))]
    layers_b = [Dense(4, 3, np.random.default_rng(0)), Dense(3, 2, np.random.default_rng(1))]
    fused = FusedParams([l.params for l in layers_b])
    x = rng.standard_normal((5, 4))
    for _ in range(4):
        for group in (layers_a, layers_b):
            h = group[0].forward(x)
            y = group[1].forward(h)  # loss 0.5*||y||^2, so upstream grad is y
            group[0].backward(group[1].backward(y))
        for l in layers_a:
            adam_step(l.params, lr=0.01)
        fused.step(lr=0.01)
    for la, lb in zip(layers_a, layers_b):
        assert np.array_equal(la.params.weights, lb.params.weights)
        assert np.array_equal(la.params.biases, lb.params.biases)
        assert la.params.step_count == lb.params.step_count


def test_fused_views_stay_bound(rng):
    layer = Dense(3, 2, rng)
    fused = FusedParams([layer.params])
    layer.params.weights[0, 0] = 123.0
    assert fused.values[0] == 123.0  # layer writes land in the master buffer
    fused.values[...] = 0.5
    assert layer.params.weights[0, 0] == 0.5
