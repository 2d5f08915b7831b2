"""Model registry and assembly.

Model ids name the architectures reported for the desk-scale benchmarks:

    1_linear            in -> 10
    2_linear            in -> 128 -> 10
    3_linear            in -> 256 -> 128 -> 10
    3_conv_1_linear     conv(32,64,64) 3x3 s1 p1, 2x2 pool after each -> 10
    3_conv_2_linear     ... -> 128 -> 10
    3_conv_3_linear     ... -> 256 -> 128 -> 10
    6_conv_3_linear     conv(32,32,64,64,128,128), pool after each pair,
                        -> 640 -> 128 -> 10   (the ~1.7M-parameter long-run model)

Every analog layer shares the trial's one chain set; activations follow
each analog layer's output chain except the final logits layer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConfigError, ShapeError
from .layers import Activation, AnalogConv2d, AnalogLinear, Flatten, MaxPool, canonical_activation
from .rng import RngStream
from .tensor import Tensor
from .transforms import TransformChain

__all__ = ["ChainSet", "ModelSpec", "Model", "MODEL_IDS", "canonical_model_id",
           "build_model", "parameter_count"]


def _empty(role: str) -> TransformChain:
    return TransformChain((), role)


@dataclass(frozen=True)
class ChainSet:
    """The three chains an analog layer composes."""

    input: TransformChain = field(default_factory=lambda: _empty("input"))
    weight: TransformChain = field(default_factory=lambda: _empty("weight"))
    output: TransformChain = field(default_factory=lambda: _empty("output"))


# model_id -> (conv channel tuple, pool-after-layer-index tuple, hidden linear widths)
MODEL_IDS: dict[str, tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]] = {
    "1_linear": ((), (), ()),
    "2_linear": ((), (), (128,)),
    "3_linear": ((), (), (256, 128)),
    "3_conv_1_linear": ((32, 64, 64), (0, 1, 2), ()),
    "3_conv_2_linear": ((32, 64, 64), (0, 1, 2), (128,)),
    "3_conv_3_linear": ((32, 64, 64), (0, 1, 2), (256, 128)),
    "6_conv_3_linear": ((32, 32, 64, 64, 128, 128), (1, 3, 5), (640, 128)),
}


def canonical_model_id(text: str) -> str:
    """Normalize a model name: '3 Conv. + 3 Linear' -> '3_conv_3_linear'."""
    t = re.sub(r"[^a-z0-9]+", "_", text.strip().lower()).strip("_")
    if t in MODEL_IDS:
        return t
    m = re.fullmatch(r"(\d+)_linear", t)
    if m and f"{m.group(1)}_linear" in MODEL_IDS:
        return t
    m = re.fullmatch(r"(\d+)_conv_(\d+)_linear", t)
    if m:
        cand = f"{m.group(1)}_conv_{m.group(2)}_linear"
        if cand in MODEL_IDS:
            return cand
    raise ConfigError(f"unknown model {text!r}; expected one of {sorted(MODEL_IDS)}")


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to instantiate a model for a dataset."""

    model_id: str
    in_shape: tuple[int, int, int]  # (C, H, W)
    activation: str = "relu"
    chains: ChainSet = field(default_factory=ChainSet)
    classes: int = 10

    def __post_init__(self):
        object.__setattr__(self, "model_id", canonical_model_id(self.model_id))
        object.__setattr__(self, "activation", canonical_activation(self.activation))
        if len(self.in_shape) != 3 or any(int(d) <= 0 for d in self.in_shape):
            raise ConfigError(f"in_shape must be (C,H,W) positive, got {self.in_shape}")


class Model:
    """Sequential pipeline of layers; layer i draws from rng.child(i)."""

    def __init__(self, layers: list, spec: ModelSpec):
        self.layers = layers
        self.spec = spec

    def params(self) -> list:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def forward(self, x: Tensor, rng: RngStream) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, rng.child(i))
        return x


def build_model(spec: ModelSpec, rng: RngStream) -> Model:
    """Instantiate the pipeline for `spec`, initializing parameters from
    per-layer substreams of `rng`."""
    conv_channels, pool_after, hidden = MODEL_IDS[spec.model_id]
    c, h, w = (int(d) for d in spec.in_shape)
    cs = spec.chains
    layers: list = []

    def lrng() -> RngStream:
        # one init substream per layer position appended to the pipeline
        return rng.child(len(layers))

    in_c = c
    for li, out_c in enumerate(conv_channels):
        layers.append(AnalogConv2d(in_c, out_c, 3, stride=1, padding=1,
                                   input_chain=cs.input, weight_chain=cs.weight,
                                   output_chain=cs.output, rng=lrng(),
                                   name=f"conv{li}"))
        layers.append(Activation(spec.activation))
        if li in pool_after:
            layers.append(MaxPool(2))
            h, w = h // 2, w // 2
            if h == 0 or w == 0:
                raise ShapeError(f"model {spec.model_id}: input {spec.in_shape} "
                                 f"too small for pooling stage {li}")
        in_c = out_c

    # image batches arrive as [N,C,H,W] for every architecture
    layers.append(Flatten())
    features = in_c * h * w

    widths = list(hidden) + [spec.classes]
    for li, out_f in enumerate(widths):
        layers.append(AnalogLinear(features, out_f,
                                   input_chain=cs.input, weight_chain=cs.weight,
                                   output_chain=cs.output, rng=lrng(),
                                   name=f"linear{li}"))
        if li < len(widths) - 1:
            layers.append(Activation(spec.activation))
        features = out_f

    return Model(layers, spec)


def parameter_count(model: Model) -> int:
    return int(sum(p.size for p in model.params()))
