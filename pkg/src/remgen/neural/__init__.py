"""Self-contained deep-learning engine for the link-budget correction."""

from .checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from .network import ArchitectureConfig, Model, TrainConfig
from .training import Adam, evaluate_loss, mse_loss, train

__all__ = [
    "Adam",
    "ArchitectureConfig",
    "Model",
    "ModelCheckpoint",
    "TrainConfig",
    "evaluate_loss",
    "load_checkpoint",
    "mse_loss",
    "save_checkpoint",
    "train",
]
