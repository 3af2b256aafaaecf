"""Deterministic differentiable layers, Adam, and gradient checking."""

from .gradcheck import GradCheckReport, fd_gradient, grad_check, jitter_biases
from .layers import (
    ACTIVATIONS,
    Activation,
    Conv1d,
    ConvTranspose1d,
    Dense,
    Flatten,
    LayerParams,
    Network,
    Reshape,
    he_uniform,
    restore_params,
    snapshot_params,
)
from .optim import FusedParams, adam_step, adam_step_all

__all__ = [
    "ACTIVATIONS",
    "Activation",
    "Conv1d",
    "ConvTranspose1d",
    "Dense",
    "Flatten",
    "FusedParams",
    "GradCheckReport",
    "LayerParams",
    "Network",
    "Reshape",
    "adam_step",
    "adam_step_all",
    "fd_gradient",
    "grad_check",
    "he_uniform",
    "jitter_biases",
    "restore_params",
    "snapshot_params",
]
