"""Adam optimizer acting on LayerParams buffers."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NumericError
from .layers import LayerParams


def adam_step(
    params: LayerParams,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update; zeroes gradients and bumps step_count.

    Raises NumericError on non-finite gradients so the caller can abort the
    batch before parameters are poisoned.
    """
    if lr <= 0.0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    for g in params.grads():
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient in adam_step")
    t = params.step_count + 1
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t
    for value, grad, m, v in zip(params.values(), params.grads(), params.adam_m, params.adam_v):
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad**2
        value -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
    params.zero_grads()
    params.step_count = t


def adam_step_all(
    param_sets: list[LayerParams],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    for p in param_sets:
        adam_step(p, lr, beta1=beta1, beta2=beta2, eps=eps)


class FusedParams:
    """Rebinds a set of LayerParams onto contiguous master buffers.

    Every per-layer array becomes a view into one flat vector, so one Adam step
    is four vector operations over the whole model instead of hundreds of
    small-array calls. Behaviour is identical to per-layer adam_step: layers
    keep accumulating into (views of) their own grad buffers.
    """

    def __init__(self, param_sets: list[LayerParams]):
        self.param_sets = list(param_sets)
        total = sum(p.n_params() for p in self.param_sets)
        self.values = np.zeros(total)
        self.grads = np.zeros(total)
        self.m = np.zeros(total)
        self.v = np.zeros(total)
        self.step_count = 0
        offset = 0
        for ps in self.param_sets:
            entries = [0] + ([1] if ps.biases is not None else [])
            for slot in entries:
                src_val = ps.weights if slot == 0 else ps.biases
                src_grad = ps.grad_weights if slot == 0 else ps.grad_biases
                size = src_val.size
                sl = slice(offset, offset + size)
                val = self.values[sl].reshape(src_val.shape)
                grad = self.grads[sl].reshape(src_val.shape)
                m = self.m[sl].reshape(src_val.shape)
                v = self.v[sl].reshape(src_val.shape)
                val[...] = src_val
                grad[...] = src_grad
                m[...] = ps.adam_m[slot]
                v[...] = ps.adam_v[slot]
                if slot == 0:
                    ps.weights, ps.grad_weights = val, grad
                else:
                    ps.biases, ps.grad_biases = val, grad
                ps.adam_m[slot] = m
                ps.adam_v[slot] = v
                offset += size

    def zero_grads(self) -> None:
        self.grads[...] = 0.0

    def step(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        """One bias-corrected Adam update over the fused buffers."""
        if lr <= 0.0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not np.all(np.isfinite(self.grads)):
            raise NumericError("non-finite gradient in adam step")
        t = self.step_count + 1
        np.multiply(self.m, beta1, out=self.m)
        self.m += (1.0 - beta1) * self.grads
        np.multiply(self.v, beta2, out=self.v)
        self.v += (1.0 - beta2) * self.grads**2
        denom = np.sqrt(self.v / (1.0 - beta2**t))
        denom += eps
        self.values -= lr * (self.m / (1.0 - beta1**t)) / denom
        self.zero_grads()
        self.step_count = t
        for ps in self.param_sets:
            ps.step_count = t
