"""Activations, softmax/cross-entropy, the incoherent split, and analog
layers with empty chains reduced to plain affine ops."""

import math

import numpy as np
import pytest
from conftest import check_grads

from analognn.errors import DataFormatError, ParameterError, ShapeError
from analognn.layers import (AnalogConv2d, AnalogLinear, activation,
                             cross_entropy, incoherent_split, softmax)
from analognn.rng import RngStream
from analognn.tensor import Tensor, tsum
from analognn.transforms import NormSpec, PrecisionSpec, TransformChain

T = lambda v: Tensor(np.asarray(v, dtype=np.float64))
EMPTY_IN = TransformChain((), "input")
EMPTY_W = TransformChain((), "weight")
EMPTY_OUT = TransformChain((), "output")


def rand(shape, seed, lo=-1.0, hi=1.0):
    return Tensor(RngStream(seed).uniform(size=shape) * (hi - lo) + lo)


# activations ------------------------------------------------------------------

def test_activation_frozen_values():
    x = T([-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(activation("relu", x).data, [0.0, 0.0, 1.0])
    np.testing.assert_allclose(activation("leaky_relu", x).data,
                               [-0.01, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(activation("tanh", x).data,
                               [-0.7615941559557649, 0.0, 0.7615941559557649])
    np.testing.assert_allclose(activation("elu", x).data,
                               [math.expm1(-1.0), 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(activation("silu", x).data,
                               [-0.2689414213699951, 0.0, 0.7310585786300049])
    np.testing.assert_allclose(activation("gelu", x).data,
                               [-0.15865525393145707, 0.0, 0.8413447460685429])


def test_identity_returns_input():
    x = rand((3,), 60)
    assert activation("identity", x) is x


def test_activation_name_normalization():
    x = T([1.0])
    assert activation("LeakyReLU", x).data[0] == activation("leaky_relu", x).data[0]
    with pytest.raises(ParameterError):
        activation("swishish", x)


@pytest.mark.parametrize("kind", ["relu", "leaky_relu", "tanh", "elu", "silu", "gelu"])
def test_activation_gradients(kind):
    # keep away from the relu/elu kinks at 0 where FD is one-sided
    r = RngStream(61)
    x = Tensor(np.sign(r.normal(size=12)) * (0.2 + r.uniform(size=12) * 1.5))
    check_grads(lambda: tsum(activation(kind, x) * activation(kind, x)), [x],
                rtol=1e-4, atol=1e-6)


# softmax / cross entropy --------------------------------------------------------

def test_softmax_rows_sum_to_one():
    z = rand((5, 10), 62, lo=-30.0, hi=30.0)
    y = softmax(z).data
    np.testing.assert_allclose(y.sum(axis=1), np.ones(5), atol=1e-12)
    assert (y >= 0).all()


def test_softmax_shift_invariance():
    z = rand((3, 4), 63)
    shifted = Tensor(z.data + 100.0)
    np.testing.assert_allclose(softmax(z).data, softmax(shifted).data, atol=1e-12)


def test_softmax_extreme_logits_finite():
    y = softmax(T([[1000.0, 0.0, -1000.0]])).data
    assert np.isfinite(y).all() and y[0, 0] == pytest.approx(1.0)


def test_softmax_gradient():
    z = rand((2, 5), 64)
    w = RngStream(65).normal(size=(2, 5))
    check_grads(lambda: tsum(softmax(z) * Tensor(w)), [z], rtol=1e-4, atol=1e-7)


def test_softmax_requires_2d():
    with pytest.raises(ShapeError):
        softmax(T([1.0, 2.0]))


def test_cross_entropy_uniform_logits():
    loss = cross_entropy(Tensor(np.zeros((4, 10))), np.array([0, 3, 7, 9]))
    assert float(loss.data) == pytest.approx(math.log(10.0), abs=1e-12)


def test_cross_entropy_known_value():
    # p = softmax([0, ln 3]) = [1/4, 3/4]; -ln(3/4) on the true class
    loss = cross_entropy(T([[0.0, math.log(3.0)]]), np.array([1]))
    assert float(loss.data) == pytest.approx(math.log(4.0 / 3.0), abs=1e-12)


def test_cross_entropy_gradient():
    z = rand((3, 6), 66)
    labels = np.array([0, 2, 5])
    check_grads(lambda: cross_entropy(z, labels), [z], rtol=1e-4, atol=1e-8)


def test_cross_entropy_saturated_logits_finite():
    loss = cross_entropy(T([[1000.0, -1000.0]]), np.array([1]))
    assert np.isfinite(float(loss.data))


def test_cross_entropy_label_validation():
    z = Tensor(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        cross_entropy(z, np.array([0]))
    with pytest.raises(ShapeError):
        cross_entropy(z, np.array([[0], [1]]))
    with pytest.raises(DataFormatError):
        cross_entropy(z, np.array([0.0, 1.0]))
    with pytest.raises(DataFormatError):
        cross_entropy(z, np.array([0, 3]))
    with pytest.raises(ShapeError):
        cross_entropy(T([1.0, 2.0]), np.array([0]))


# incoherent split --------------------------------------------------------------

def test_split_nonnegative_and_reconstructs():
    y = rand((4, 7), 67, lo=-2.0, hi=2.0)
    plus, minus = incoherent_split(y)
    assert (plus.data >= 0).all() and (minus.data >= 0).all()
    np.testing.assert_allclose(plus.data - minus.data, y.data, atol=1e-12)


def test_split_zero_routes_to_positive_part():
    y = T([0.0, 1.5, -2.0])
    plus, minus = incoherent_split(y)
    np.testing.assert_array_equal(plus.data, [0.0, 1.5, 0.0])
    np.testing.assert_array_equal(minus.data, [0.0, 0.0, 2.0])
    tsum(plus).backward()
    np.testing.assert_array_equal(y.grad, [1.0, 1.0, 0.0])


def test_split_reconstruction_gradient_is_identity():
    y = rand((10,), 68, lo=-1.0, hi=1.0)
    plus, minus = incoherent_split(y)
    tsum(plus - minus).backward()
    np.testing.assert_allclose(y.grad, np.ones(10), atol=1e-15)


def test_split_gradient_fd():
    y = Tensor(RngStream(69).normal(size=8) + np.sign(RngStream(70).normal(size=8)))
    y.data[np.abs(y.data) < 0.1] = 0.5  # keep FD away from the kink

    def f():
        plus, minus = incoherent_split(y)
        return tsum(plus * plus + minus * minus * 2.0)

    check_grads(f, [y], rtol=1e-4, atol=1e-7)


# analog layers ------------------------------------------------------------------

def test_linear_empty_chain_is_plain_affine():
    layer = AnalogLinear(4, 3, input_chain=EMPTY_IN, weight_chain=EMPTY_W,
                         output_chain=EMPTY_OUT, rng=RngStream(71))
    x = rand((5, 4), 72)
    out = layer.forward(x, RngStream(73))
    want = x.data @ layer.weight.raw.data.T + layer.bias.raw.data
    np.testing.assert_allclose(out.data, want, atol=1e-14)
    assert out.shape == (5, 3)


def test_linear_init_bounds_and_determinism():
    a = AnalogLinear(4, 8, input_chain=EMPTY_IN, weight_chain=EMPTY_W,
                     output_chain=EMPTY_OUT, rng=RngStream(74))
    b = AnalogLinear(4, 8, input_chain=EMPTY_IN, weight_chain=EMPTY_W,
                     output_chain=EMPTY_OUT, rng=RngStream(74))
    np.testing.assert_array_equal(a.weight.raw.data, b.weight.raw.data)
    np.testing.assert_array_equal(a.bias.raw.data, b.bias.raw.data)
    # weight magnitudes stay on the analog scale even when fan-in is small
    assert np.max(np.abs(a.weight.raw.data)) <= 1.0
    assert np.max(np.abs(a.bias.raw.data)) <= 1.0 / math.sqrt(4)
    assert [p.name for p in a.params()] == ["linear.weight", "linear.bias"]


def test_linear_weight_chain_applies():
    chain = TransformChain.for_weight(NormSpec("clamp"), PrecisionSpec(1))
    layer = AnalogLinear(3, 2, input_chain=EMPTY_IN, weight_chain=chain,
                         output_chain=EMPTY_OUT, rng=RngStream(75))
    layer.forward(rand((1, 3), 76), RngStream(77))
    used = layer.weight.cached_transformed
    assert set(np.unique(used)).issubset({-1.0, 0.0, 1.0})


def test_linear_gradients_reach_raw():
    layer = AnalogLinear(4, 3, input_chain=EMPTY_IN, weight_chain=EMPTY_W,
                         output_chain=EMPTY_OUT, rng=RngStream(78))
    x = rand((2, 4), 79)
    loss = cross_entropy(layer.forward(x, RngStream(80)), np.array([0, 2]))

    def f():
        return cross_entropy(layer.forward(x, RngStream(80)), np.array([0, 2]))

    check_grads(f, [layer.weight.raw, layer.bias.raw, x], rtol=1e-4, atol=1e-8)
    assert np.isfinite(float(loss.data))


def test_conv_layer_shape_and_names():
    layer = AnalogConv2d(2, 4, 3, stride=1, padding=1, input_chain=EMPTY_IN,
                         weight_chain=EMPTY_W, output_chain=EMPTY_OUT,
                         rng=RngStream(81), name="conv0")
    out = layer.forward(rand((3, 2, 8, 8), 82), RngStream(83))
    assert out.shape == (3, 4, 8, 8)
    assert [p.name for p in layer.params()] == ["conv0.kernel", "conv0.bias"]
    assert np.max(np.abs(layer.kernel.raw.data)) <= 1.0
