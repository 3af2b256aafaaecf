"""Forward-pass contracts of the layer toolkit against naive oracles."""

import numpy as np
import pytest

from motormeta.errors import DimensionError, GeometryError
from motormeta.nn import Activation, Conv1d, ConvTranspose1d, Dense, Flatten, Network, Reshape


def naive_dense(x, w, b):
    out = np.zeros((x.shape[0], w.shape[1]))
    for bi in range(x.shape[0]):
        for o in range(w.shape[1]):
            acc = 0.0
            for i in range(x.shape[1]):
                acc += x[bi, i] * w[i, o]
            out[bi, o] = acc + b[o]
    return out


def naive_conv1d(x, w, b, stride):
    batch, length, ch_in = x.shape
    kernel, _, ch_out = w.shape
    l_out = (length - kernel) // stride + 1
    out = np.zeros((batch, l_out, ch_out))
    for bi in range(batch):
        for j in range(l_out):
            for co in range(ch_out):
                acc = 0.0
                for t in range(kernel):
                    for ci in range(ch_in):
                        acc += x[bi, j * stride + t, ci] * w[t, ci, co]
                out[bi, j, co] = acc + b[co]
    return out


class TestDense:
    def test_identity_weights(self, rng):
        layer = Dense(2, 2, rng)
        layer.params.weights[...] = np.eye(2)
        layer.params.biases[...] = 0.0
        assert np.array_equal(layer.forward(np.array([[3.0, 4.0]])), [[3.0, 4.0]])

    def test_hand_sum(self, rng):
        layer = Dense(2, 1, rng)
        layer.params.weights[...] = [[1.0], [1.0]]
        layer.params.biases[...] = [1.0]
        assert np.array_equal(layer.forward(np.array([[2.0, 5.0]])), [[8.0]])

    def test_matches_naive_matmul(self, rng):
        layer = Dense(7, 5, rng)
        x = rng.standard_normal((4, 7))
        expected = naive_dense(x, layer.params.weights, layer.params.biases)
        # BLAS reorders the sum, so agreement is to float64 roundoff
        assert np.abs(layer.forward(x) - expected).max() < 1e-13

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            Dense(3, 2, rng).forward(np.zeros((1, 4)))

    def test_forward_is_pure(self, rng):
        layer = Dense(5, 3, rng)
        x = rng.standard_normal((2, 5))
        assert np.array_equal(layer.forward(x), layer.forward(x))


class TestConv1d:
    def test_valid_length_arithmetic(self, rng):
        conv = Conv1d(1, 1, kernel=3, stride=1, padding="valid", rng=rng)
        y = conv.forward(rng.standard_normal((1, 32, 1)))
        assert y.shape == (1, 30, 1)

    def test_delta_kernel_same_padding(self, rng):
        conv = Conv1d(1, 1, kernel=3, stride=1, padding="same", rng=rng)
        conv.params.weights[...] = np.array([0.0, 1.0, 0.0]).reshape(3, 1, 1)
        conv.params.biases[...] = 0.0
        x = rng.standard_normal((2, 9, 1))
        assert np.allclose(conv.forward(x), x)

    @pytest.mark.parametrize("stride", [1, 2, 3])
    def test_matches_naive_sliding_window(self, rng, stride):
        conv = Conv1d(3, 4, kernel=3, stride=stride, padding="valid", rng=rng)
        x = rng.standard_normal((2, 13, 3))
        expected = naive_conv1d(x, conv.params.weights, conv.params.biases, stride)
        assert np.abs(conv.forward(x) - expected).max() < 1e-13

    def test_kernel_longer_than_input(self, rng):
        conv = Conv1d(1, 1, kernel=5, padding="valid", rng=rng)
        with pytest.raises(GeometryError):
            conv.forward(np.zeros((1, 3, 1)))

    def test_same_padding_needs_stride_one(self, rng):
        with pytest.raises(GeometryError):
            Conv1d(1, 1, kernel=3, stride=2, padding="same", rng=rng)

    def test_channel_mismatch(self, rng):
        with pytest.raises(DimensionError):
            Conv1d(2, 3, kernel=3, rng=rng).forward(np.zeros((1, 8, 5)))


class TestConvTranspose1d:
    def test_length_arithmetic(self, rng):
        layer = ConvTranspose1d(1, 1, kernel=3, stride=1, rng=rng)
        assert layer.forward(rng.standard_normal((1, 30, 1))).shape == (1, 32, 1)

    def test_unit_kernel_scales_input(self, rng):
        layer = ConvTranspose1d(1, 1, kernel=1, stride=1, rng=rng)
        layer.params.biases[...] = 0.0
        w = float(layer.params.weights[0, 0, 0])
        x = rng.standard_normal((2, 7, 1))
        assert np.allclose(layer.forward(x), x * w)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_adjoint_identity(self, rng, stride):
        """<conv(x), y> == <x, convT(y)> with shared weights."""
        kernel, ch_a, ch_b = 3, 3, 4
        conv = Conv1d(ch_a, ch_b, kernel, stride=stride, padding="valid", rng=rng)
        conv.params.biases[...] = 0.0
        tconv = ConvTranspose1d(ch_b, ch_a, kernel, stride=stride, rng=rng)
        tconv.params.biases[...] = 0.0
        tconv.params.weights[...] = conv.params.weights.transpose(0, 2, 1)

        length = 11
        l_out = (length - kernel) // stride + 1
        x = rng.standard_normal((2, length, ch_a))
        y = rng.standard_normal((2, l_out, ch_b))
        lhs = float(np.sum(conv.forward(x) * y))
        rhs = float(np.sum(x * tconv.forward(y)[:, :length, :]))
        # adjoint pairs exactly when conv consumes the full input
        assert (length - kernel) % stride == 0
        assert abs(lhs - rhs) < 1e-10

    def test_scatter_semantics(self, rng):
        """out[j*stride + t] accumulates x[j] @ W[t]."""
        layer = ConvTranspose1d(2, 3, kernel=3, stride=2, rng=rng)
        x = rng.standard_normal((1, 4, 2))
        w = layer.params.weights
        expected = np.zeros((1, (4 - 1) * 2 + 3, 3))
        for j in range(4):
            for t in range(3):
                expected[0, j * 2 + t] += x[0, j] @ w[t]
        expected += layer.params.biases
        assert np.allclose(layer.forward(x), expected, atol=1e-12)


class TestShapePlumbing:
    def test_flatten_reshape_round_trip(self, rng):
        x = rng.standard_normal((3, 5, 2))
        flat = Flatten()
        back = Reshape(5, 2)
        assert np.array_equal(back.forward(flat.forward(x)), x)

    def test_activation_names(self):
        with pytest.raises(GeometryError):
            Activation("gelu")

    def test_network_geometry_validation(self, rng):
        net = Network([Reshape(6, 1), Conv1d(1, 4, 3, padding="same", rng=rng), Flatten(), Dense(24, 2, rng)])
        assert net.validate_geometry((6,)) == (2,)
        bad = Network([Reshape(6, 1), Conv1d(2, 4, 3, rng=rng)])
        with pytest.raises(GeometryError):
            bad.validate_geometry((6,))

    def test_network_forward_rejects_nonfinite(self, rng):
        net = Network([Dense(3, 2, rng)])
        from motormeta.errors import NumericError

        with pytest.raises(NumericError):
            net.forward(np.array([[1.0, np.nan, 0.0]]))
