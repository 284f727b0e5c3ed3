"""Odor pleasantness regression from electronic-nose sensor matrices.

A two-layer strided CNN maps a (sensors x time) matrix to a centered
pleasantness score. Hot convolution kernels come from a compiled extension
when it is built; ``popcnn.kernels.BACKEND`` says which one is active.
"""

from .errors import ConfigError, DegenerateInputError
from .evaluation import evaluate, pearson
from .pop_model import PopConfig, PopNetwork, build, predict, predict_odor
from .signal_model import Dataset, OdorSample
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "Dataset",
    "OdorSample",
    "PopConfig",
    "PopNetwork",
    "TrainConfig",
    "build",
    "evaluate",
    "pearson",
    "predict",
    "predict_odor",
    "train",
]
