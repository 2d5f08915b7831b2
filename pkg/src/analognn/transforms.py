"""Analog signal transforms and the error-probability calculus.

Three transform families model the optoelectronic signal path:

* normalization: clamp to the analog range, or Lp-norm rescaling of the
  whole tensor / each leading slice, optionally followed by a global
  max-abs rescale (the *M variants);
* reduce precision: deterministic round-to-nearest onto the grid
  {k/p : k integer} with p = 2^bits - 1, or stochastic rounding to an
  adjacent grid level with probability proportional to proximity;
* additive Gaussian noise.

Reduce-precision and noise ops carry an identity backward override
(straight-through); clamp and the norms keep their true gradients.

The EP calculus relates noise strength to the probability that a stored
quantized value is pushed to a different level:
EP = 1 - erf(1 / (2*sqrt(2) * sigma * (2^bits - 1))).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _special

from .errors import DegenerateInputError, ParameterError
from .rng import RngStream
from .tensor import Tensor, identity_backward

__all__ = [
    "PrecisionSpec", "NoiseSpec", "NormSpec", "TransformChain",
    "Normalize", "ReducePrecision", "AdditiveNoise",
    "clamp", "lp_norm_w", "lp_norm_wm", "lp_norm", "lp_norm_m", "normalize",
    "reduce_precision", "stochastic_reduce_precision", "gaussian_noise",
    "representable_values", "ep_from_sigma", "sigma_from_ep", "ep_monte_carlo",
    "apply_chain",
]

_ROOT2 = math.sqrt(2.0)


# spec objects -------------------------------------------------------------

@dataclass(frozen=True)
class PrecisionSpec:
    """Quantization grid: p = 2^bits - 1 levels per unit, step width 1/p.

    `divide` is the rounding threshold on the fractional part; 0.5 gives
    round-to-nearest with ties toward zero.
    """

    bits: int
    divide: float = 0.5

    def __post_init__(self):
        if not isinstance(self.bits, (int, np.integer)) or self.bits < 1:
            raise ParameterError(f"bits must be a positive integer, got {self.bits!r}")
        if not 0.0 <= self.divide <= 1.0:
            raise ParameterError(f"divide must lie in [0,1], got {self.divide!r}")

    @property
    def levels(self) -> int:
        return 2 ** self.bits - 1

    @property
    def step(self) -> float:
        return 1.0 / self.levels

    @classmethod
    def from_levels(cls, levels: int, divide: float = 0.5) -> "PrecisionSpec":
        bits = (levels + 1).bit_length() - 1
        if 2 ** bits - 1 != levels:
            raise ParameterError(f"levels must be 2^bits - 1, got {levels}")
        return cls(bits, divide)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive zero-mean Gaussian noise. sigma == 0 is the noiseless limit.

    `ep` and `bits` record where sigma came from when it was derived from
    an error probability; they do not affect sampling.
    """

    sigma: float
    ep: float | None = None
    bits: int | None = None

    def __post_init__(self):
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise ParameterError(f"sigma must be a finite nonnegative real, got {self.sigma!r}")

    @classmethod
    def from_ep(cls, ep: float, bits: int) -> "NoiseSpec":
        if ep == 0:
            return cls(0.0, ep=0.0, bits=bits)
        return cls(sigma_from_ep(ep, bits), ep=float(ep), bits=int(bits))


_NORM_KINDS = ("none", "clamp", "lpnorm", "lpnormw", "lpnormm", "lpnormwm")


@dataclass(frozen=True)
class NormSpec:
    """Normalization selector: kind, Lp order, and clamp bounds."""

    kind: str
    p_norm: int = 2
    p_lo: float = -1.0
    q_hi: float = 1.0

    def __post_init__(self):
        if self.kind not in _NORM_KINDS:
            raise ParameterError(f"unknown normalization kind {self.kind!r}; "
                                 f"expected one of {_NORM_KINDS}")
        if not isinstance(self.p_norm, (int, np.integer)) or self.p_norm < 1:
            raise ParameterError(f"p_norm must be a positive integer, got {self.p_norm!r}")
        if self.p_lo > self.q_hi:
            raise ParameterError(f"clamp bounds out of order: {self.p_lo} > {self.q_hi}")

    @classmethod
    def parse(cls, text: str) -> "NormSpec":
        """Parse a config token: none, clamp, l1norm, l2normw, l2normwm, ..."""
        t = text.strip().lower()
        if t == "none":
            return cls("none")
        if t == "clamp":
            return cls("clamp")
        if len(t) > 2 and t[0] == "l" and t[1] in "12" and t[2:].startswith("norm"):
            suffix = t[2 + 4:]
            kind = {"": "lpnorm", "w": "lpnormw", "m": "lpnormm", "wm": "lpnormwm"}.get(suffix)
            if kind is not None:
                return cls(kind, p_norm=int(t[1]))
        raise ParameterError(f"unknown normalization name {text!r}")


# normalization ops --------------------------------------------------------

def clamp(x: Tensor, p_lo: float = -1.0, q_hi: float = 1.0) -> Tensor:
    """Saturate to [p_lo, q_hi]. True gradient: 1 inside (boundary counts as
    inside), 0 outside."""
    if p_lo > q_hi:
        raise ParameterError(f"clamp bounds out of order: {p_lo} > {q_hi}")
    v = x.data
    mask = (v >= p_lo) & (v <= q_hi)
    out = np.clip(v, p_lo, q_hi)
    return Tensor._node(out, (x,), "clamp", lambda g: (g * mask,))


def _whole_norm(v: np.ndarray, p: int) -> float:
    if p == 1:
        return float(np.sum(np.abs(v)))
    if p == 2:
        return float(np.sqrt(np.sum(v * v)))
    return float(np.sum(np.abs(v) ** p) ** (1.0 / p))


def lp_norm_w(x: Tensor, p_norm: int = 2) -> Tensor:
    """Divide the whole tensor by its p-norm; result has p-norm 1."""
    v = x.data
    n = _whole_norm(v, p_norm)
    if n == 0.0:
        raise DegenerateInputError("lp_norm_w: all-zero tensor")
    out = v / n

    def rule(g):
        # d(v/n)/dv_j via quotient rule; s = dn/dv
        if p_norm == 1:
            s = np.sign(v)
        elif p_norm == 2:
            s = v / n
        else:
            s = np.sign(v) * np.abs(v) ** (p_norm - 1) / n ** (p_norm - 1)
        return (g / n - (np.sum(g * v) / n ** 2) * s,)

    return Tensor._node(out, (x,), "lp_norm_w", rule)


def lp_norm(x: Tensor, p_norm: int = 2) -> Tensor:
    """Divide each leading-index slice by its own p-norm.

    For 2-D weights this is per-row, for 4-D conv kernels per output
    channel, for batched images per image. 1-D tensors fall back to
    whole-tensor normalization (per-element slices would collapse every
    entry to its sign).
    """
    if x.ndim <= 1:
        node = lp_norm_w(x, p_norm)
        return Tensor._node(node.data, (x,), "lp_norm", node._backward)
    v = x.data
    k = v.shape[0]
    flat = v.reshape(k, -1)
    if p_norm == 1:
        norms = np.sum(np.abs(flat), axis=1)
    elif p_norm == 2:
        norms = np.sqrt(np.sum(flat * flat, axis=1))
    else:
        norms = np.sum(np.abs(flat) ** p_norm, axis=1) ** (1.0 / p_norm)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateInputError(f"lp_norm: slice {bad} along the leading axis is all zeros")
    out = (flat / norms[:, None]).reshape(v.shape)

    def rule(g):
        gf = g.reshape(k, -1)
        if p_norm == 1:
            s = np.sign(flat)
        elif p_norm == 2:
            s = flat / norms[:, None]
        else:
            s = np.sign(flat) * np.abs(flat) ** (p_norm - 1) / (norms ** (p_norm - 1))[:, None]
        dot = np.sum(gf * flat, axis=1, keepdims=True)
        return ((gf / norms[:, None] - dot / (norms ** 2)[:, None] * s).reshape(v.shape),)

    return Tensor._node(out, (x,), "lp_norm", rule)


def _max_abs_scale(z: Tensor) -> Tensor:
    """Divide by the global max absolute value (first occurrence on ties)."""
    v = z.data
    flat_abs = np.abs(v).reshape(-1)
    k = int(np.argmax(flat_abs))
    m = float(flat_abs[k])
    if m == 0.0:
        raise DegenerateInputError("max-abs rescale: all-zero tensor")
    out = v / m
    sgn = float(np.sign(v.reshape(-1)[k]))

    def rule(g):
        gv = g / m
        correction = np.sum(g * v) / m ** 2 * sgn
        gv = gv.copy()
        gv.reshape(-1)[k] -= correction
        return (gv,)

    return Tensor._node(out, (z,), "max_abs_scale", rule)


def lp_norm_wm(x: Tensor, p_norm: int = 2) -> Tensor:
    """Whole-tensor p-norm rescale followed by global max-abs rescale."""
    return _max_abs_scale(lp_norm_w(x, p_norm))


def lp_norm_m(x: Tensor, p_norm: int = 2) -> Tensor:
    """Per-slice p-norm rescale followed by global max-abs rescale."""
    return _max_abs_scale(lp_norm(x, p_norm))


def normalize(x: Tensor, spec: NormSpec) -> Tensor:
    """Apply the normalization selected by `spec` (kind 'none' is identity)."""
    if spec.kind == "none":
        return x
    if spec.kind == "clamp":
        return clamp(x, spec.p_lo, spec.q_hi)
    if spec.kind == "lpnorm":
        return lp_norm(x, spec.p_norm)
    if spec.kind == "lpnormw":
        return lp_norm_w(x, spec.p_norm)
    if spec.kind == "lpnormm":
        return lp_norm_m(x, spec.p_norm)
    return lp_norm_wm(x, spec.p_norm)


# precision ops ------------------------------------------------------------

def _rp_array(v: np.ndarray, levels: int, divide: float) -> np.ndarray:
    g = np.abs(v) * levels
    fl = np.floor(g)
    q = (fl + (g - fl > divide)) / levels
    return np.sign(v) * q


def reduce_precision(x: Tensor, spec: PrecisionSpec,
                     straight_through: bool = True) -> Tensor:
    """Round to the nearest grid multiple of 1/p.

    With g = |x*p| and f = g - floor(g): result = sign(x)*(floor(g) +
    (f > divide))/p, so fractional parts exactly at the threshold round
    toward zero. The true gradient is zero almost everywhere; by default
    the node carries an identity backward override (straight-through).
    """
    out = _rp_array(x.data, spec.levels, spec.divide)
    node = Tensor._node(out, (x,), "reduce_precision",
                        lambda g: (np.zeros_like(g),))
    if straight_through:
        node.backward_override = identity_backward
    return node


def stochastic_reduce_precision(x: Tensor, spec: PrecisionSpec, rng: RngStream,
                                straight_through: bool = True) -> Tensor:
    """Round |x*p| up with probability equal to its fractional part, else down.

    Unbiased: E[SRP(x)] = x. Grid points are fixed points with probability 1.
    Identity backward override by default, as for reduce_precision.
    """
    v = x.data
    levels = spec.levels
    g = np.abs(v) * levels
    fl = np.floor(g)
    f = g - fl
    r = rng.uniform(size=v.shape)
    out = np.sign(v) * (fl + (r < f)) / levels
    node = Tensor._node(out, (x,), "stochastic_reduce_precision",
                        lambda gg: (np.zeros_like(gg),))
    if straight_through:
        node.backward_override = identity_backward
    return node


def representable_values(spec: PrecisionSpec, a: float, b: float) -> np.ndarray:
    """All grid points {k/p} inside [a, b], ascending.

    When a and b are themselves grid points the size equals
    (RP(b) - RP(a))*p + 1.
    """
    if not a < b:
        raise ParameterError(f"representable_values: need a < b, got [{a}, {b}]")
    p = spec.levels
    kmin = math.ceil(a * p)
    while kmin / p < a:
        kmin += 1
    while (kmin - 1) / p >= a:
        kmin -= 1
    kmax = math.floor(b * p)
    while kmax / p > b:
        kmax -= 1
    while (kmax + 1) / p <= b:
        kmax += 1
    return np.arange(kmin, kmax + 1, dtype=np.float64) / p


# noise ops ----------------------------------------------------------------

def gaussian_noise(x: Tensor, spec: NoiseSpec | float, rng: RngStream) -> Tensor:
    """Add i.i.d. N(0, sigma^2) noise. sigma == 0 passes data through exactly.

    The true gradient of x + n w.r.t. x is already the identity; the override
    is set anyway to make the straight-through contract explicit.
    """
    if not isinstance(spec, NoiseSpec):
        spec = NoiseSpec(float(spec))
    if spec.sigma == 0.0:
        out = x.data
    else:
        out = x.data + rng.normal(0.0, spec.sigma, size=x.shape)
    node = Tensor._node(out, (x,), "gaussian_noise", identity_backward)
    node.backward_override = identity_backward
    return node


# error-probability calculus ------------------------------------------------

def ep_from_sigma(sigma: float, bits: int) -> float:
    """Probability that Gaussian noise moves a stored level to a different one.

    Closed form 1 - erf(1/(2*sqrt(2)*sigma*(2^bits - 1))), equivalently
    2*CDF_noise(-step/2) with step 1/(2^bits - 1): the value escapes its
    rounding cell of half-width step/2. sigma <= 0 returns 0 (noiseless).
    """
    if not isinstance(bits, (int, np.integer)) or bits < 1:
        raise ParameterError(f"bits must be a positive integer, got {bits!r}")
    if sigma <= 0:
        return 0.0
    return float(1.0 - _special.erf(1.0 / (2.0 * _ROOT2 * sigma * (2 ** bits - 1))))


def sigma_from_ep(ep: float, bits: int) -> float:
    """Noise level that produces error probability `ep` at the given precision."""
    if not isinstance(bits, (int, np.integer)) or bits < 1:
        raise ParameterError(f"bits must be a positive integer, got {bits!r}")
    if not 0.0 < ep < 1.0:
        raise ParameterError(f"ep must lie in (0,1), got {ep!r}")
    return float(1.0 / (2.0 * _ROOT2 * (2 ** bits - 1) * _special.erfinv(1.0 - ep)))


def ep_monte_carlo(sigma: float, bits: int, n_samples: int, rng: RngStream) -> float:
    """Monte-Carlo EP estimate, independent of the closed form.

    Draws x uniform in [-1, 1], stores its quantized value, adds noise, and
    re-quantizes: the estimate is the fraction of stored values that changed.
    """
    spec = PrecisionSpec(bits)
    u = rng.uniform(size=n_samples) * 2.0 - 1.0
    q = _rp_array(u, spec.levels, spec.divide)
    if sigma > 0:
        noised = q + rng.normal(0.0, sigma, size=n_samples)
    else:
        noised = q
    return float(np.mean(_rp_array(noised, spec.levels, spec.divide) != q))


# chains --------------------------------------------------------------------

@dataclass(frozen=True)
class Normalize:
    spec: NormSpec

    def apply(self, x: Tensor, rng: RngStream) -> Tensor:
        return normalize(x, self.spec)


@dataclass(frozen=True)
class ReducePrecision:
    spec: PrecisionSpec
    stochastic: bool = False

    def apply(self, x: Tensor, rng: RngStream) -> Tensor:
        if self.stochastic:
            return stochastic_reduce_precision(x, self.spec, rng)
        return reduce_precision(x, self.spec)


@dataclass(frozen=True)
class AdditiveNoise:
    spec: NoiseSpec

    def apply(self, x: Tensor, rng: RngStream) -> Tensor:
        return gaussian_noise(x, self.spec, rng)


_ROLES = ("input", "weight", "output")


@dataclass(frozen=True)
class TransformChain:
    """Ordered transforms with a role tag.

    Canonical orders (the `for_*` constructors): input = normalization,
    reduce precision, noise; output = noise, normalization, reduce
    precision; weight = normalization, reduce precision (weight noise is
    merged into the downstream output chain).
    """

    steps: tuple = ()
    role: str = "input"

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ParameterError(f"unknown chain role {self.role!r}")
        for s in self.steps:
            if not isinstance(s, (Normalize, ReducePrecision, AdditiveNoise)):
                raise ParameterError(f"unknown transform step {s!r}")

    def __len__(self) -> int:
        return len(self.steps)

    @classmethod
    def for_input(cls, norm: NormSpec | None = None,
                  precision: PrecisionSpec | None = None, stochastic: bool = False,
                  noise: NoiseSpec | None = None) -> "TransformChain":
        steps = []
        if norm is not None and norm.kind != "none":
            steps.append(Normalize(norm))
        if precision is not None:
            steps.append(ReducePrecision(precision, stochastic))
        if noise is not None and noise.sigma > 0:
            steps.append(AdditiveNoise(noise))
        return cls(tuple(steps), "input")

    @classmethod
    def for_output(cls, noise: NoiseSpec | None = None,
                   norm: NormSpec | None = None,
                   precision: PrecisionSpec | None = None,
                   stochastic: bool = False) -> "TransformChain":
        steps = []
        if noise is not None and noise.sigma > 0:
            steps.append(AdditiveNoise(noise))
        if norm is not None and norm.kind != "none":
            steps.append(Normalize(norm))
        if precision is not None:
            steps.append(ReducePrecision(precision, stochastic))
        return cls(tuple(steps), "output")

    @classmethod
    def for_weight(cls, norm: NormSpec | None = None,
                   precision: PrecisionSpec | None = None, stochastic: bool = False,
                   noise: NoiseSpec | None = None) -> "TransformChain":
        steps = []
        if norm is not None and norm.kind != "none":
            steps.append(Normalize(norm))
        if precision is not None:
            steps.append(ReducePrecision(precision, stochastic))
        if noise is not None and noise.sigma > 0:
            # explicit weight-noise stage, for ablations only
            steps.append(AdditiveNoise(noise))
        return cls(tuple(steps), "weight")


def apply_chain(x: Tensor, chain: TransformChain, rng: RngStream) -> Tensor:
    """Apply chain steps in order; step i consumes the sub-stream rng.child(i).

    Pure given (x, chain, rng address): re-applying with an equally
    addressed stream reproduces the same stochastic draws. Callers that
    want fresh draws per forward pass must pass a fresh child stream.
    """
    for i, step in enumerate(chain.steps):
        x = step.apply(x, rng.child(i))
    return x
