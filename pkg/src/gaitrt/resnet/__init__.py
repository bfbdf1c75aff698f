"""From-scratch 1D residual CNN for joint-moment regression."""

from .layers import BatchNorm1D, Conv1D, Dense, GlobalAvgPool, Relu
from .model import ArchConfig, MomentNet, ResidualBlock
from .optim import AdamState, adam_step
from .train import (
    MomentModel,
    TrainConfig,
    load_resnet,
    save_resnet,
    train_moments,
    windowize,
)

__all__ = [
    "AdamState",
    "ArchConfig",
    "BatchNorm1D",
    "Conv1D",
    "Dense",
    "GlobalAvgPool",
    "MomentModel",
    "MomentNet",
    "Relu",
    "ResidualBlock",
    "TrainConfig",
    "adam_step",
    "load_resnet",
    "save_resnet",
    "train_moments",
    "windowize",
]
