"""Traffic time-series imputation: primary-auxiliary network, baselines, harness."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    ModelConfig,
    PastModel,
    TrainConfig,
    TrainHistory,
    compute_losses,
    fuse,
    impute_span,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "PastModel",
    "TrainConfig",
    "TrainHistory",
    "compute_losses",
    "fuse",
    "impute_span",
    "train",
    "load_checkpoint",
    "save_checkpoint",
    "__version__",
]
