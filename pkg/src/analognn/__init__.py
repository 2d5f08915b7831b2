"""Training neural networks through simulated analog transform chains.

The building blocks: a small reverse-mode tensor engine, analog
transforms (normalization, reduced precision, additive noise) with
straight-through gradients, PseudoParameter shadow weights, canonical
models over MNIST-class datasets, and a sweep CLI that writes results
CSVs.
"""

from .config import TrialConfig, config_from_mapping, expand_grid, load_config_file
from .data import (DATASET_NAMES, Dataset, DatasetView, SplitPlan, batches,
                   grayscale, load_cifar10, load_dataset, load_idx, split,
                   write_idx)
from .errors import (ConfigError, DataFormatError, DegenerateInputError,
                     GraphError, NumericError, ParameterError, ShapeError)
from .conv import conv2d, flatten, max_pool2d
from .layers import (ACTIVATION_KINDS, AnalogConv2d, AnalogLinear, activation,
                     cross_entropy, incoherent_split, softmax)
from .model import (MODEL_IDS, ChainSet, Model, ModelSpec, build_model,
                    canonical_model_id, parameter_count)
from .optim import SGD, Adam, adam_step
from .pseudo import PseudoParameter, forward_value, step
from .report import report
from .rng import RngStream
from .sweep import SweepSummary, run_sweep
from .tensor import Tensor, backward, identity_backward
from .transforms import (NoiseSpec, NormSpec, PrecisionSpec, TransformChain,
                         apply_chain, clamp, ep_from_sigma, ep_monte_carlo,
                         gaussian_noise, lp_norm, lp_norm_m, lp_norm_w,
                         lp_norm_wm, normalize, reduce_precision,
                         representable_values, sigma_from_ep,
                         stochastic_reduce_precision)
from .trial import (TrialResult, append_result, evaluate, load_checkpoint,
                    read_results, restore_checkpoint, run_trial,
                    save_checkpoint)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # engine
    "Tensor", "backward", "identity_backward", "RngStream",
    "conv2d", "max_pool2d", "flatten",
    # errors
    "ShapeError", "GraphError", "NumericError", "ParameterError",
    "DegenerateInputError", "DataFormatError", "ConfigError",
    # analog transforms
    "PrecisionSpec", "NoiseSpec", "NormSpec", "TransformChain", "apply_chain",
    "clamp", "normalize", "lp_norm", "lp_norm_m", "lp_norm_w", "lp_norm_wm",
    "reduce_precision", "stochastic_reduce_precision", "representable_values",
    "gaussian_noise", "ep_from_sigma", "sigma_from_ep", "ep_monte_carlo",
    # parameters and optimization
    "PseudoParameter", "forward_value", "step", "SGD", "Adam", "adam_step",
    # layers and models
    "ACTIVATION_KINDS", "activation", "softmax", "cross_entropy",
    "incoherent_split", "AnalogLinear", "AnalogConv2d",
    "ChainSet", "ModelSpec", "Model", "MODEL_IDS", "canonical_model_id",
    "build_model", "parameter_count",
    # data
    "DATASET_NAMES", "Dataset", "DatasetView", "SplitPlan", "load_idx",
    "write_idx", "load_cifar10", "grayscale", "split", "batches", "load_dataset",
    # trials and sweeps
    "TrialConfig", "config_from_mapping", "load_config_file", "expand_grid",
    "TrialResult", "run_trial", "evaluate", "append_result", "read_results",
    "save_checkpoint", "load_checkpoint", "restore_checkpoint",
    "SweepSummary", "run_sweep", "report",
]
