"""Central finite-difference gradient checking for Network stacks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Network


@dataclass
class GradCheckReport:
    """Per-parameter relative errors between analytic and FD gradients."""

    max_rel_error: float
    per_param: list[tuple[str, float]] = field(default_factory=list)
    flagged: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flagged


def _rel_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def fd_gradient(loss_fn, array: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar loss w.r.t. one array, in place."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def jitter_biases(param_sets, rng: np.random.Generator, scale: float = 0.05) -> None:
    """Nudge biases off their zero init so the check runs at a generic point.

    Freshly initialized biases are exactly zero, which parks relu kinks exactly
    at pre-activations of 0 (dead or padded receptive fields); there the
    subgradient and a central difference legitimately disagree. One training
    step removes the degeneracy; so does this jitter.
    """
    for ps in param_sets:
        if ps.biases is not None:
            ps.biases += rng.uniform(-scale, scale, size=ps.biases.shape)


def grad_check(
    network: Network,
    x: np.ndarray,
    tolerance: float = 1e-5,
    h: float = 1e-6,
    jitter_rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare backprop gradients with finite differences of 0.5*sum(y^2).

    The quadratic readout makes the loss gradient w.r.t. the network output
    simply the output itself, so the check exercises every layer's backward
    with a dense, non-trivial upstream signal. Keep the batch small (<= 4):
    FD cost is two forward passes per scalar parameter. Pass jitter_rng when
    the network still has all-zero biases (see jitter_biases).
    """
    x = np.asarray(x, dtype=np.float64)
    if jitter_rng is not None:
        jitter_biases(network.param_sets(), jitter_rng)

    def loss() -> float:
        y = network.forward(x)
        return 0.5 * float(np.sum(y * y))

    network.zero_grads()
    y = network.forward(x)
    network.backward(y)

    per_param: list[tuple[str, float]] = []
    flagged: list[str] = []
    idx = 0
    for layer in network.layers:
        if layer.params is None:
            continue
        for kind, analytic, value in (
            ("weights", layer.params.grad_weights, layer.params.weights),
            ("biases", layer.params.grad_biases, layer.params.biases),
        ):
            if value is None:
                continue
            numeric = fd_gradient(loss, value, h=h)
            err = _rel_error(analytic, numeric)
            name = f"layer{idx}.{type(layer).__name__}.{kind}"
            per_param.append((name, err))
            if err >= tolerance:
                flagged.append(name)
        idx += 1
    max_err = max((e for _, e in per_param), default=0.0)
    return GradCheckReport(max_rel_error=max_err, per_param=per_param, flagged=flagged)
