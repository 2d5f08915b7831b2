"""Trial configuration: vocabulary validation, canonical hashing, grids.

Config files are plain key = value text. Values containing commas are
lists and turn the file into a sweep grid (Cartesian product over all
list-valued fields). `#` starts a comment. Example:

    dataset = mnist
    model = 3_linear
    activation = gelu
    norm_y = clamp
    norm_w = clamp
    bits_y = 6
    bits_w = 2, 4, 6
    rp_mode = srp
    ep_y = 0.25
    ep_w = 0.25
    seed = 1, 2, 3
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, fields as dc_fields, replace
from pathlib import Path

from .data import DATASET_NAMES
from .errors import ConfigError
from .layers import canonical_activation
from .model import ChainSet, ModelSpec, canonical_model_id
from .transforms import NoiseSpec, NormSpec, PrecisionSpec, TransformChain

__all__ = ["TrialConfig", "parse_config_text", "load_config_file", "expand_grid",
           "config_from_mapping", "input_shape_for"]

FULL = "full"

_IN_SHAPES = {
    "mnist": (1, 28, 28),
    "fashion_mnist": (1, 28, 28),
    "cifar10": (3, 32, 32),
    "cifar10_gray": (1, 32, 32),
}


def input_shape_for(dataset: str) -> tuple[int, int, int]:
    return _IN_SHAPES[dataset]


@dataclass(frozen=True)
class TrialConfig:
    """One trial's full recipe. All fields are validated on construction."""

    dataset: str = "mnist"
    model: str = "1_linear"
    activation: str = "relu"
    norm_y: str = "none"
    norm_w: str = "none"
    bits_y: int | str = FULL
    bits_w: int | str = FULL
    rp_mode: str = "rp"
    ep_y: float = 0.0
    ep_w: float = 0.0
    sigma_y: float | None = None
    sigma_w: float | None = None
    divide: float = 0.5
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    epochs: int = 10
    batch_size: int = 128
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.dataset not in DATASET_NAMES:
            raise ConfigError(f"dataset: {self.dataset!r} not in {DATASET_NAMES}")
        object.__setattr__(self, "model", canonical_model_id(self.model))
        object.__setattr__(self, "activation", canonical_activation(self.activation))
        for fld in ("norm_y", "norm_w"):
            try:
                NormSpec.parse(getattr(self, fld))
            except Exception as e:
                raise ConfigError(f"{fld}: {e}") from None
            object.__setattr__(self, fld, getattr(self, fld).strip().lower())
        for fld in ("bits_y", "bits_w"):
            b = getattr(self, fld)
            if b != FULL and not (isinstance(b, int) and 1 <= b <= 16):
                raise ConfigError(f"{fld}: expected 'full' or an integer 1..16, got {b!r}")
        if self.rp_mode not in ("rp", "srp"):
            raise ConfigError(f"rp_mode: expected rp or srp, got {self.rp_mode!r}")
        for fld in ("ep_y", "ep_w"):
            v = getattr(self, fld)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{fld}: expected a value in [0,1), got {v!r}")
        for fld in ("sigma_y", "sigma_w"):
            v = getattr(self, fld)
            if v is not None and v < 0:
                raise ConfigError(f"{fld}: sigma must be nonnegative, got {v!r}")
        if self.sigma_y is None and self.ep_y > 0 and self.bits_y == FULL:
            raise ConfigError("ep_y > 0 needs bits_y to derive sigma; "
                              "set bits_y or give sigma_y directly")
        if self.sigma_w is None and self.ep_w > 0 and self.bits_w == FULL:
            raise ConfigError("ep_w > 0 needs bits_w to derive sigma; "
                              "set bits_w or give sigma_w directly")
        if not 0.0 <= self.divide <= 1.0:
            raise ConfigError(f"divide: expected a value in [0,1], got {self.divide!r}")
        if self.lr <= 0:
            raise ConfigError(f"lr: expected positive, got {self.lr!r}")
        for fld in ("beta1", "beta2"):
            v = getattr(self, fld)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{fld}: expected a value in [0,1), got {v!r}")
        if self.eps <= 0 or self.weight_decay < 0:
            raise ConfigError("eps must be positive and weight_decay nonnegative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction: expected in (0,1), got {self.train_fraction!r}")

    # canonical form ------------------------------------------------------
    def canonical_text(self) -> str:
        lines = []
        for f in sorted(fld.name for fld in dc_fields(self)):
            v = getattr(self, f)
            if isinstance(v, float):
                v = repr(v)
            lines.append(f"{f} = {v}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]

    # derived objects -------------------------------------------------------
    def _noise(self, sigma, ep, bits) -> NoiseSpec | None:
        if sigma is not None:
            return NoiseSpec(sigma) if sigma > 0 else None
        if ep > 0:
            return NoiseSpec.from_ep(ep, bits)
        return None

    def chains(self) -> ChainSet:
        ny, nw = NormSpec.parse(self.norm_y), NormSpec.parse(self.norm_w)
        stochastic = self.rp_mode == "srp"
        prec_y = None if self.bits_y == FULL else PrecisionSpec(self.bits_y, self.divide)
        prec_w = None if self.bits_w == FULL else PrecisionSpec(self.bits_w, self.divide)
        noise_y = self._noise(self.sigma_y, self.ep_y, self.bits_y)
        # weight-side noise rides on the output chain, scaled by weight precision
        noise_w = self._noise(self.sigma_w, self.ep_w, self.bits_w)
        return ChainSet(
            input=TransformChain.for_input(ny, prec_y, stochastic, noise_y),
            weight=TransformChain.for_weight(nw, prec_w, stochastic),
            output=TransformChain.for_output(noise_w, ny, prec_y, stochastic),
        )

    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.model, input_shape_for(self.dataset),
                         activation=self.activation, chains=self.chains())


_INT_FIELDS = {"epochs", "batch_size", "seed"}
_FLOAT_FIELDS = {"ep_y", "ep_w", "sigma_y", "sigma_w", "divide", "lr", "beta1",
                 "beta2", "eps", "weight_decay", "train_fraction"}
_OPTIONAL_FIELDS = {"sigma_y", "sigma_w"}  # canonical text prints None for these
_BITS_FIELDS = {"bits_y", "bits_w"}
_KNOWN_FIELDS = {f.name for f in dc_fields(TrialConfig)}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in _OPTIONAL_FIELDS and raw.lower() == "none":
        return None
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
        if key in _BITS_FIELDS:
            return raw.lower() if raw.lower() == FULL else int(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return raw


def config_from_mapping(mapping: dict) -> TrialConfig:
    """Build a TrialConfig from string values, rejecting unknown keys."""
    kwargs = {}
    for key, raw in mapping.items():
        k = key.strip().lower()
        if k not in _KNOWN_FIELDS:
            raise ConfigError(f"unknown config field {key!r}")
        kwargs[k] = _coerce(k, raw) if isinstance(raw, str) else raw
    return TrialConfig(**kwargs)


def parse_config_text(text: str) -> dict[str, str | list[str]]:
    """key = value lines; comma-separated values become lists (grid axes)."""
    out: dict[str, str | list[str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, _, value = body.partition("=")
        key, value = key.strip().lower(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if "," in value:
            items = [v.strip() for v in value.split(",")]
            if any(not v for v in items):
                raise ConfigError(f"line {lineno}: empty list element")
            out[key] = items
        else:
            out[key] = value
    return out


def load_config_file(path) -> dict[str, str | list[str]]:
    return parse_config_text(Path(path).read_text())


def expand_grid(mapping: dict[str, str | list[str]], base_seed: int = 0) -> list[TrialConfig]:
    """Cartesian product over list-valued fields, in sorted-key order.

    Trials without an explicit seed get base_seed + trial_index, so every
    grid point trains with an independent stream family.
    """
    scalars = {k: v for k, v in mapping.items() if not isinstance(v, list)}
    grids = {k: v for k, v in mapping.items() if isinstance(v, list)}
    axes = sorted(grids)
    configs = []
    for i, combo in enumerate(itertools.product(*(grids[k] for k in axes))):
        m = dict(scalars)
        m.update(dict(zip(axes, combo)))
        cfg = config_from_mapping(m)
        if "seed" not in mapping:
            cfg = replace(cfg, seed=base_seed + i)
        configs.append(cfg)
    return configs
