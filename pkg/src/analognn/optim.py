"""Optimizers over PseudoParameter raw tensors."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeError
from .pseudo import PseudoParameter

__all__ = ["SGD", "Adam", "adam_step"]


class SGD:
    """Plain gradient descent; mainly a reference for tests."""

    def __init__(self, params: Sequence[PseudoParameter], lr: float = 0.1):
        self.params = list(params)
        self.lr = float(lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.raw.zero_grad()

    def update_one(self, p: PseudoParameter, g: np.ndarray) -> None:
        p.raw.data = p.raw.data - self.lr * g

    def step(self, grads=None) -> None:
        _run_step(self, grads)


class Adam:
    """Canonical Adam with bias correction.

    Defaults lr=0.001, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.
    Moments live per parameter; `update_one` must only be called through
    `step`, which advances the shared timestep once per batch.
    """

    def __init__(self, params: Sequence[PseudoParameter], lr: float = 0.001,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self._m = [np.zeros(p.raw.shape) for p in self.params]
        self._v = [np.zeros(p.raw.shape) for p in self.params]
        self._index = {id(p): i for i, p in enumerate(self.params)}

    def zero_grad(self) -> None:
        for p in self.params:
            p.raw.zero_grad()

    def update_one(self, p: PseudoParameter, g: np.ndarray) -> None:
        i = self._index[id(p)]
        if self.weight_decay:
            g = g + self.weight_decay * p.raw.data
        m = self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
        v = self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * (g * g)
        # direct single-parameter use before any step() gets step-1 correction
        t = self.t if self.t >= 1 else 1
        mhat = m / (1.0 - self.beta1 ** t)
        vhat = v / (1.0 - self.beta2 ** t)
        p.raw.data = p.raw.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def step(self, grads=None) -> None:
        """One update over all parameters; grads default to each raw.grad."""
        self.t += 1
        _run_step(self, grads)


def _run_step(opt, grads) -> None:
    if grads is None:
        grads = [p.raw.grad for p in opt.params]
    if len(grads) != len(opt.params):
        raise ShapeError(f"{len(grads)} gradients for {len(opt.params)} parameters")
    for p, g in zip(opt.params, grads):
        if g is None:
            continue
        g = np.asarray(g)
        if g.shape != p.raw.shape:
            raise ShapeError(f"grad shape {g.shape} != parameter shape {p.raw.shape}")
        opt.update_one(p, g)


def adam_step(state: Adam, params: Sequence[PseudoParameter], grads) -> Adam:
    """Functional wrapper: advance `state` one step over `params`."""
    if list(params) != state.params:
        raise ShapeError("adam_step: params do not match the optimizer state")
    state.step(grads)
    return state
