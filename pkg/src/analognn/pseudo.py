"""Full-precision shadow parameters behind analog transform chains.

A PseudoParameter owns a trainable raw tensor. Each forward pass sends the
raw values through its weight chain (normalization, reduce precision); the
chain's straight-through overrides route the loss gradient back onto the
raw tensor, which is what the optimizer updates. The raw values therefore
stay full-precision no matter how coarsely the chain quantizes.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .rng import RngStream
from .tensor import Tensor
from .transforms import TransformChain, apply_chain

__all__ = ["PseudoParameter", "forward_value", "step"]


class PseudoParameter:
    """Trainable shadow tensor plus its analog weight chain.

    With an empty chain, forward_value returns the raw node itself, so the
    parameter behaves exactly like a plain trainable tensor.
    """

    __slots__ = ("name", "raw", "chain", "cached_transformed")

    def __init__(self, name: str, values, chain: TransformChain | None = None):
        self.name = str(name)
        self.raw = values if isinstance(values, Tensor) else Tensor(values)
        self.chain = chain if chain is not None else TransformChain((), "weight")
        self.cached_transformed: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.raw.shape

    @property
    def size(self) -> int:
        return self.raw.size

    def forward(self, rng: RngStream) -> Tensor:
        node = apply_chain(self.raw, self.chain, rng)
        self.cached_transformed = node.data
        return node

    def __repr__(self) -> str:
        return f"PseudoParameter({self.name!r}, shape={self.shape}, chain={len(self.chain)} steps)"


def forward_value(pp: PseudoParameter, rng: RngStream) -> Tensor:
    """Transformed view of the raw tensor, registered on the tape."""
    return pp.forward(rng)


def step(optimizer_state, pp: PseudoParameter, grad) -> Tensor:
    """Apply one optimizer update to the raw shadow tensor.

    `optimizer_state` is any object with an `update_one(pp, grad)` method
    (see the optimizers module). Returns the updated raw tensor.
    """
    grad = np.asarray(grad.data if isinstance(grad, Tensor) else grad)
    if grad.shape != pp.raw.shape:
        raise ShapeError(f"step: grad shape {grad.shape} != raw shape {pp.raw.shape}")
    optimizer_state.update_one(pp, grad)
    return pp.raw
