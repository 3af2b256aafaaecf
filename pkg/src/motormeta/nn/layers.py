"""Minimal differentiable layer toolkit: dense, 1-d conv, 1-d transposed conv.

Everything is float64 numpy. Sequence tensors are channels-last,
[batch, length, channels], which lets every convolution run as a single GEMM
over an im2col view with no transposes. Layers cache what their backward pass
needs; gradients accumulate into ``LayerParams`` buffers until an optimizer
step zeroes them.

Convolution uses the cross-correlation convention (no kernel flip). Weights
are stored as [kernel, ch_in, ch_out]. Transposed convolution is the exact
adjoint of a valid-padding convolution with the same kernel/stride: viewing a
Conv1d weight with its channel axes swapped per tap makes the inner-product
identity ``<conv(x), y> == <x, convT(y)>`` hold to rounding error.

Finiteness is validated at network boundaries (``Network.forward`` input) and
by the optimizer on gradients, not per layer.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, GeometryError, NumericError, StateError

ACTIVATIONS = ("relu", "tanh", "linear")


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Kaiming-style uniform init, U(-sqrt(6/fan_in), +sqrt(6/fan_in))."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class LayerParams:
    """Weight/bias arrays plus same-shaped gradient and Adam moment buffers."""

    def __init__(self, weights: np.ndarray, biases: np.ndarray | None = None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.biases = None if biases is None else np.asarray(biases, dtype=np.float64)
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_biases = None if self.biases is None else np.zeros_like(self.biases)
        self.adam_m = [np.zeros_like(self.weights)]
        self.adam_v = [np.zeros_like(self.weights)]
        if self.biases is not None:
            self.adam_m.append(np.zeros_like(self.biases))
            self.adam_v.append(np.zeros_like(self.biases))
        self.step_count = 0

    def values(self) -> list[np.ndarray]:
        out = [self.weights]
        if self.biases is not None:
            out.append(self.biases)
        return out

    def grads(self) -> list[np.ndarray]:
        out = [self.grad_weights]
        if self.grad_biases is not None:
            out.append(self.grad_biases)
        return out

    def zero_grads(self) -> None:
        self.grad_weights[...] = 0.0
        if self.grad_biases is not None:
            self.grad_biases[...] = 0.0

    def n_params(self) -> int:
        return sum(v.size for v in self.values())


class Dense:
    """Affine layer: y = x @ W + b with W of shape [n_in, n_out]."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        if n_in < 1 or n_out < 1:
            raise GeometryError(f"dense extents must be positive, got ({n_in}, {n_out})")
        self.n_in = n_in
        self.n_out = n_out
        self.params = LayerParams(he_uniform((n_in, n_out), n_in, rng), np.zeros(n_out))
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"dense expects [batch, {self.n_in}], got {x.shape}")
        self._x = x
        return x @ self.params.weights + self.params.biases

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise StateError("dense backward called before forward")
        self.params.grad_weights += self._x.T @ grad_out
        self.params.grad_biases += grad_out.sum(axis=0)
        return grad_out @ self.params.weights.T

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if in_shape != (self.n_in,):
            raise GeometryError(f"dense({self.n_in}->{self.n_out}) cannot consume {in_shape}")
        return (self.n_out,)


def _im2col(x: np.ndarray, kernel: int, stride: int, l_out: int) -> np.ndarray:
    """[batch, length, ch] -> contiguous [batch*l_out, kernel*ch] window matrix.

    Requires a C-contiguous input so each sliding window is one flat slice.
    """
    if not x.flags.c_contiguous:
        x = np.ascontiguousarray(x)
    batch, _, ch = x.shape
    sb, sl, sc = x.strides
    view = np.lib.stride_tricks.as_strided(
        x, (batch, l_out, kernel * ch), (sb, stride * sl, sc), writeable=False
    )
    return np.ascontiguousarray(view).reshape(batch * l_out, kernel * ch)


def _col2im(
    gcols: np.ndarray, batch: int, length: int, ch: int, kernel: int, stride: int, l_out: int
) -> np.ndarray:
    """Adjoint of _im2col: scatter-add window gradients back onto the sequence."""
    gx = np.zeros((batch, length, ch))
    g = gcols.reshape(batch, l_out, kernel, ch)
    span = (l_out - 1) * stride + 1
    for t in range(kernel):
        gx[:, t : t + span : stride, :] += g[:, :, t, :]
    return gx


class Conv1d:
    """1-d cross-correlation over [batch, length, ch_in].

    padding 'valid': L_out = (L - kernel)//stride + 1; 'same' keeps L and
    requires stride 1. Weights have shape [kernel, ch_in, ch_out].
    """

    def __init__(
        self,
        ch_in: int,
        ch_out: int,
        kernel: int,
        stride: int = 1,
        padding: str = "valid",
        rng: np.random.Generator | None = None,
    ):
        if kernel < 1 or stride < 1 or ch_in < 1 or ch_out < 1:
            raise GeometryError("conv1d extents, kernel and stride must be >= 1")
        if padding not in ("valid", "same"):
            raise GeometryError(f"unknown padding mode {padding!r}")
        if padding == "same" and stride != 1:
            raise GeometryError("same padding requires stride 1")
        self.ch_in = ch_in
        self.ch_out = ch_out
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        rng = np.random.default_rng(0) if rng is None else rng
        w = he_uniform((kernel, ch_in, ch_out), ch_in * kernel, rng)
        self.params = LayerParams(w, np.zeros(ch_out))
        self._cols: np.ndarray | None = None
        self._in_meta: tuple[int, int, int] | None = None
        self._pad_buf: np.ndarray | None = None

    def _pad_amounts(self) -> tuple[int, int]:
        if self.padding == "valid":
            return 0, 0
        left = (self.kernel - 1) // 2
        return left, self.kernel - 1 - left

    def _l_out(self, length: int) -> int:
        left, right = self._pad_amounts()
        padded = length + left + right
        if padded < self.kernel:
            raise GeometryError(f"conv1d kernel {self.kernel} exceeds padded length {padded}")
        return (padded - self.kernel) // self.stride + 1

    def _padded(self, x: np.ndarray) -> np.ndarray:
        left, right = self._pad_amounts()
        if not (left or right):
            return x
        batch, length, ch = x.shape
        shape = (batch, length + left + right, ch)
        # pad columns stay zero across calls; only the interior is rewritten
        if self._pad_buf is None or self._pad_buf.shape != shape:
            self._pad_buf = np.zeros(shape)
        self._pad_buf[:, left : left + length, :] = x
        return self._pad_buf

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.ch_in:
            raise DimensionError(f"conv1d expects [batch, L, {self.ch_in}], got {x.shape}")
        batch, length, _ = x.shape
        l_out = self._l_out(length)
        cols = _im2col(self._padded(x), self.kernel, self.stride, l_out)
        self._cols = cols
        self._in_meta = (batch, length, l_out)
        wmat = self.params.weights.reshape(self.kernel * self.ch_in, self.ch_out)
        y = cols @ wmat
        y += self.params.biases
        return y.reshape(batch, l_out, self.ch_out)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cols is None or self._in_meta is None:
            raise StateError("conv1d backward called before forward")
        batch, length, l_out = self._in_meta
        g = grad_out.reshape(batch * l_out, self.ch_out)
        self.params.grad_weights += (self._cols.T @ g).reshape(self.params.weights.shape)
        self.params.grad_biases += g.sum(axis=0)
        wmat = self.params.weights.reshape(self.kernel * self.ch_in, self.ch_out)
        gcols = g @ wmat.T
        left, _ = self._pad_amounts()
        pad_len = length + sum(self._pad_amounts())
        gx = _col2im(gcols, batch, pad_len, self.ch_in, self.kernel, self.stride, l_out)
        return gx[:, left : left + length, :] if pad_len != length else gx

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 2 or in_shape[1] != self.ch_in:
            raise GeometryError(f"conv1d({self.ch_in}->{self.ch_out}) cannot consume {in_shape}")
        return (self._l_out(in_shape[0]), self.ch_out)


class ConvTranspose1d:
    """Adjoint of a valid-padding Conv1d: L_out = (L - 1)*stride + kernel.

    Weights have shape [kernel, ch_in, ch_out]. Forward runs as a stride-1
    convolution of the zero-upsampled, (kernel-1)-padded input with the taps
    reversed, which is algebraically the scatter
    out[j*stride + t] += x[j] @ W[t].
    """

    def __init__(
        self,
        ch_in: int,
        ch_out: int,
        kernel: int,
        stride: int = 1,
        rng: np.random.Generator | None = None,
    ):
        if kernel < 1 or stride < 1 or ch_in < 1 or ch_out < 1:
            raise GeometryError("convtranspose1d extents, kernel and stride must be >= 1")
        self.ch_in = ch_in
        self.ch_out = ch_out
        self.kernel = kernel
        self.stride = stride
        rng = np.random.default_rng(0) if rng is None else rng
        w = he_uniform((kernel, ch_in, ch_out), ch_in * kernel, rng)
        self.params = LayerParams(w, np.zeros(ch_out))
        self._cols: np.ndarray | None = None
        self._in_meta: tuple[int, int, int] | None = None
        self._pad_buf: np.ndarray | None = None

    def _upsampled_padded(self, x: np.ndarray) -> np.ndarray:
        batch, length, ch = x.shape
        up_len = (length - 1) * self.stride + 1
        pad = self.kernel - 1
        shape = (batch, up_len + 2 * pad, ch)
        if self._pad_buf is None or self._pad_buf.shape != shape:
            self._pad_buf = np.zeros(shape)
        elif self.stride > 1:
            self._pad_buf[...] = 0.0  # upsampling gaps must be re-zeroed
        self._pad_buf[:, pad : pad + up_len : self.stride, :] = x
        return self._pad_buf

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.ch_in:
            raise DimensionError(
                f"convtranspose1d expects [batch, L, {self.ch_in}], got {x.shape}"
            )
        batch, length, _ = x.shape
        l_out = (length - 1) * self.stride + self.kernel
        cols = _im2col(self._upsampled_padded(x), self.kernel, 1, l_out)
        self._cols = cols
        self._in_meta = (batch, length, l_out)
        wmat = self.params.weights[::-1].reshape(self.kernel * self.ch_in, self.ch_out)
        y = cols @ wmat
        y += self.params.biases
        return y.reshape(batch, l_out, self.ch_out)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cols is None or self._in_meta is None:
            raise StateError("convtranspose1d backward called before forward")
        batch, length, l_out = self._in_meta
        g = grad_out.reshape(batch * l_out, self.ch_out)
        gw_flipped = (self._cols.T @ g).reshape(self.kernel, self.ch_in, self.ch_out)
        self.params.grad_weights += gw_flipped[::-1]
        self.params.grad_biases += g.sum(axis=0)
        wmat = self.params.weights[::-1].reshape(self.kernel * self.ch_in, self.ch_out)
        gcols = g @ wmat.T
        up_len = (length - 1) * self.stride + 1
        pad = self.kernel - 1
        g_up = _col2im(gcols, batch, up_len + 2 * pad, self.ch_in, self.kernel, 1, l_out)
        return g_up[:, pad : pad + up_len : self.stride, :]

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 2 or in_shape[1] != self.ch_in:
            raise GeometryError(
                f"convtranspose1d({self.ch_in}->{self.ch_out}) cannot consume {in_shape}"
            )
        if in_shape[0] < 1:
            raise GeometryError("convtranspose1d requires positive input length")
        return ((in_shape[0] - 1) * self.stride + self.kernel, self.ch_out)


class Activation:
    """Elementwise relu, tanh, or linear (identity)."""

    params = None

    def __init__(self, name: str):
        if name not in ACTIVATIONS:
            raise GeometryError(f"unknown activation {name!r}, expected one of {ACTIVATIONS}")
        self.name = name
        self._cache: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if self.name == "relu":
            self._cache = x > 0.0
            return x * self._cache
        if self.name == "tanh":
            out = np.tanh(x)
            self._cache = out
            return out
        self._cache = np.empty(0)  # linear needs no cache, but marks forward done
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("activation backward called before forward")
        if self.name == "relu":
            return grad_out * self._cache
        if self.name == "tanh":
            return grad_out * (1.0 - self._cache**2)
        return grad_out

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape


class Flatten:
    """[batch, L, ch] -> [batch, L*ch]."""

    params = None

    def __init__(self):
        self._shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3:
            raise DimensionError(f"flatten expects a 3-d input, got shape {x.shape}")
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._shape is None:
            raise StateError("flatten backward called before forward")
        return grad_out.reshape(self._shape)

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 2:
            raise GeometryError(f"flatten cannot consume {in_shape}")
        return (in_shape[0] * in_shape[1],)


class Reshape:
    """[batch, L*ch] -> [batch, L, ch]."""

    params = None

    def __init__(self, length: int, channels: int):
        if channels < 1 or length < 1:
            raise GeometryError("reshape extents must be positive")
        self.length = length
        self.channels = channels
        self._forward_done = False

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.channels * self.length:
            raise DimensionError(
                f"reshape expects [batch, {self.channels * self.length}], got {x.shape}"
            )
        self._forward_done = True
        return x.reshape(x.shape[0], self.length, self.channels)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if not self._forward_done:
            raise StateError("reshape backward called before forward")
        return grad_out.reshape(grad_out.shape[0], -1)

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if in_shape != (self.channels * self.length,):
            raise GeometryError(f"reshape({self.length}x{self.channels}) cannot consume {in_shape}")
        return (self.length, self.channels)


class Network:
    """Ordered layer stack with exact backpropagation.

    Forward validates input finiteness; per-layer outputs are trusted (the
    optimizer re-checks gradients). Forward/backward pairs must not interleave
    across batches: single writer during training.
    """

    def __init__(self, layers: list):
        self.layers = list(layers)
        self._forward_done = False

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite network input")
        for layer in self.layers:
            x = layer.forward(x)
        self._forward_done = True
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if not self._forward_done:
            raise StateError("network backward called before forward")
        g = np.asarray(grad_out, dtype=np.float64)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def param_sets(self) -> list[LayerParams]:
        return [layer.params for layer in self.layers if layer.params is not None]

    def zero_grads(self) -> None:
        for p in self.param_sets():
            p.zero_grads()

    def n_params(self) -> int:
        return sum(p.n_params() for p in self.param_sets())

    def validate_geometry(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Propagate a (batchless) shape through the stack; raises GeometryError."""
        shape = tuple(in_shape)
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except GeometryError as exc:
                raise GeometryError(f"layer {i} ({type(layer).__name__}): {exc}") from None
        return shape


def snapshot_params(param_sets: list[LayerParams]) -> list[list[np.ndarray]]:
    """Deep-copy current parameter values (not moments) for later restore."""
    return [[v.copy() for v in p.values()] for p in param_sets]


def restore_params(param_sets: list[LayerParams], snapshot: list[list[np.ndarray]]) -> None:
    for p, saved in zip(param_sets, snapshot):
        for v, s in zip(p.values(), saved):
            v[...] = s
