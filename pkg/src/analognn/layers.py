"""Analog linear/conv layers, activations, loss, and the incoherent split.

An analog layer composes three chains around the affine op:

    output_chain( W_transformed @ input_chain(x) + b_transformed )

where W/b are PseudoParameters transformed by the weight chain. Pooling,
flattening, and activations are digital ops: full precision, noise free.
"""

from __future__ import annotations

import math

import numpy as np

from . import conv as _conv
from .errors import DataFormatError, ParameterError, ShapeError
from .pseudo import PseudoParameter, forward_value
from .rng import RngStream
from .tensor import Tensor, add_bias, matmul, transpose2d
from .tensor import tanh as _tanh
from .transforms import TransformChain, apply_chain
from scipy import special as _special

__all__ = [
    "activation", "ACTIVATION_KINDS", "softmax", "cross_entropy",
    "incoherent_split", "AnalogLinear", "AnalogConv2d",
    "Activation", "MaxPool", "Flatten",
]

ACTIVATION_KINDS = ("identity", "relu", "leaky_relu", "tanh", "elu", "silu", "gelu")


def _relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._node(x.data * mask, (x,), "relu", lambda g: (g * mask,))


def _leaky_relu(x: Tensor) -> Tensor:
    slope = 0.01
    v = x.data
    d = np.where(v > 0, 1.0, slope)
    return Tensor._node(v * d, (x,), "leaky_relu", lambda g: (g * d,))


def _elu(x: Tensor) -> Tensor:
    # alpha = 1; exp evaluated only on the negative part to avoid overflow
    v = x.data
    out = v.copy()
    neg = v <= 0
    out[neg] = np.expm1(v[neg])
    d = np.ones_like(v)
    d[neg] = out[neg] + 1.0
    return Tensor._node(out, (x,), "elu", lambda g: (g * d,))


def _sigmoid_stable(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def _silu(x: Tensor) -> Tensor:
    v = x.data
    s = _sigmoid_stable(v)
    d = s * (1.0 + v * (1.0 - s))
    return Tensor._node(v * s, (x,), "silu", lambda g: (g * d,))


def _gelu(x: Tensor) -> Tensor:
    # exact-erf form x * Phi(x), not the tanh approximation
    v = x.data
    phi_cdf = 0.5 * (1.0 + _special.erf(v / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * v * v) / math.sqrt(2.0 * math.pi)
    d = phi_cdf + v * pdf
    return Tensor._node(v * phi_cdf, (x,), "gelu", lambda g: (g * d,))


_ACTIVATIONS = {
    "identity": lambda x: x,
    "relu": _relu,
    "leaky_relu": _leaky_relu,
    "tanh": _tanh,
    "elu": _elu,
    "silu": _silu,
    "gelu": _gelu,
}


def canonical_activation(kind: str) -> str:
    k = kind.strip().lower().replace("-", "_").replace(" ", "_")
    if k == "leakyrelu":
        k = "leaky_relu"
    if k not in _ACTIVATIONS:
        raise ParameterError(f"unknown activation {kind!r}; expected one of {ACTIVATION_KINDS}")
    return k


def activation(kind: str, x: Tensor) -> Tensor:
    """Apply the named activation. LeakyReLU slope 0.01, ELU alpha 1,
    GeLU exact-erf. Each carries its true analytic backward."""
    return _ACTIVATIONS[canonical_activation(kind)](x)


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction."""
    if logits.ndim != 2:
        raise ShapeError(f"softmax: expects [N,K] logits, got {logits.shape}")
    z = logits.data
    s = z - z.max(axis=1, keepdims=True)
    e = np.exp(s)
    y = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        dot = np.sum(g * y, axis=1, keepdims=True)
        return (y * (g - dot),)

    return Tensor._node(y, (logits,), "softmax", rule)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability of the true labels.

    `labels` is an integer vector (numpy array or sequence), not a graph
    tensor. Computed with max subtraction so saturated logits stay finite.
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: expects [N,K] logits, got {logits.shape}")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ShapeError(f"cross_entropy: labels shape {labels.shape} does not match "
                         f"batch size {logits.shape[0]}")
    n, k = logits.shape
    if labels.dtype.kind not in "iu":
        raise DataFormatError("cross_entropy: labels must be integers")
    if labels.min() < 0 or labels.max() >= k:
        raise DataFormatError(f"cross_entropy: labels outside 0..{k - 1}")
    z = logits.data
    s = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(s), axis=1, keepdims=True))
    logp = s - lse
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def rule(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        return (grad * (float(g) / n),)

    return Tensor._node(np.asarray(loss), (logits,), "cross_entropy", rule)


def incoherent_split(y: Tensor) -> tuple[Tensor, Tensor]:
    """Split a signed tensor into nonnegative parts: (max(0, y), max(0, -y)).

    Reconstruction y == plus - minus holds exactly, and so does its
    gradient: at y == 0 the gradient routes to the positive part only.
    """
    v = y.data
    pos_mask = v >= 0
    neg_mask = v < 0
    plus = Tensor._node(np.where(pos_mask, v, 0.0), (y,), "positive_part",
                        lambda g: (g * pos_mask,))
    minus = Tensor._node(np.where(neg_mask, -v, 0.0), (y,), "negative_part",
                         lambda g: (-g * neg_mask,))
    return plus, minus


def _kaiming_uniform(rng: RngStream, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    w = rng.uniform(size=shape) * 2.0 * bound - bound
    return np.clip(w, -1.0, 1.0)


def _bias_uniform(rng: RngStream, n: int, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(size=n) * 2.0 * bound - bound


class AnalogLinear:
    """Dense layer with analog input/weight/output chains."""

    def __init__(self, in_features: int, out_features: int, *,
                 input_chain: TransformChain, weight_chain: TransformChain,
                 output_chain: TransformChain, rng: RngStream, name: str = "linear"):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.input_chain = input_chain
        self.output_chain = output_chain
        self.weight = PseudoParameter(
            f"{name}.weight",
            _kaiming_uniform(rng.child(0), (out_features, in_features), in_features),
            weight_chain)
        self.bias = PseudoParameter(
            f"{name}.bias", _bias_uniform(rng.child(1), out_features, in_features),
            weight_chain)

    def params(self) -> list[PseudoParameter]:
        return [self.weight, self.bias]

    def forward(self, x: Tensor, rng: RngStream) -> Tensor:
        xa = apply_chain(x, self.input_chain, rng.child(0))
        w = forward_value(self.weight, rng.child(1))
        b = forward_value(self.bias, rng.child(2))
        z = add_bias(matmul(xa, transpose2d(w)), b, axis=1)
        return apply_chain(z, self.output_chain, rng.child(3))


class AnalogConv2d:
    """3x3-style convolution with analog input/weight/output chains."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3, *,
                 stride: int = 1, padding: int = 1,
                 input_chain: TransformChain, weight_chain: TransformChain,
                 output_chain: TransformChain, rng: RngStream, name: str = "conv"):
        self.stride = int(stride)
        self.padding = int(padding)
        fan_in = in_channels * kernel_size * kernel_size
        self.kernel = PseudoParameter(
            f"{name}.kernel",
            _kaiming_uniform(rng.child(0),
                             (out_channels, in_channels, kernel_size, kernel_size), fan_in),
            weight_chain)
        self.bias = PseudoParameter(
            f"{name}.bias", _bias_uniform(rng.child(1), out_channels, fan_in),
            weight_chain)
        self.input_chain = input_chain
        self.output_chain = output_chain

    def params(self) -> list[PseudoParameter]:
        return [self.kernel, self.bias]

    def forward(self, x: Tensor, rng: RngStream) -> Tensor:
        xa = apply_chain(x, self.input_chain, rng.child(0))
        k = forward_value(self.kernel, rng.child(1))
        b = forward_value(self.bias, rng.child(2))
        z = _conv.conv2d(xa, k, bias=b, stride=self.stride, padding=self.padding)
        return apply_chain(z, self.output_chain, rng.child(3))


class Activation:
    """Digital activation as a pipeline stage."""

    def __init__(self, kind: str):
        self.kind = canonical_activation(kind)

    def params(self) -> list:
        return []

    def forward(self, x: Tensor, rng: RngStream) -> Tensor:
        return activation(self.kind, x)


class MaxPool:
    def __init__(self, size: int = 2):
        self.size = int(size)

    def params(self) -> list:
        return []

    def forward(self, x: Tensor, rng: RngStream) -> Tensor:
        return _conv.max_pool2d(x, self.size)


class Flatten:
    def params(self) -> list:
        return []

    def forward(self, x: Tensor, rng: RngStream) -> Tensor:
        return _conv.flatten(x)
