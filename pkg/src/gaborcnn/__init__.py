"""Gabor-modulated convolutional networks.

Fixed Gabor filter banks expand small sets of learned convolution filters
into orientation-enriched filter groups, giving compact networks that are
more robust to rotation than plain CNNs of the same stored size.
"""

from .errors import (
    BadMagicError,
    ConfigError,
    CountMismatchError,
    DataError,
    GaborCNNError,
    ShapeError,
    TruncatedFileError,
)
from .gabor import GaborBank, GaborParams, build_bank, ones_bank, render_bank
from .gof import GofLayer
from .network import (
    Network,
    TrainSchedule,
    build_network,
    count_params,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train_epoch,
)
from .optim import OptimizerConfig
from .tensors import Filter4, Tensor4, correlate2d

__all__ = [
    "BadMagicError",
    "ConfigError",
    "CountMismatchError",
    "DataError",
    "Filter4",
    "GaborBank",
    "GaborCNNError",
    "GaborParams",
    "GofLayer",
    "Network",
    "OptimizerConfig",
    "ShapeError",
    "Tensor4",
    "TrainSchedule",
    "TruncatedFileError",
    "build_bank",
    "build_network",
    "correlate2d",
    "count_params",
    "evaluate",
    "load_checkpoint",
    "ones_bank",
    "render_bank",
    "save_checkpoint",
    "train_epoch",
]

__version__ = "0.1.0"
