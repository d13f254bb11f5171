"""Pose-guided feature learning with knowledge distillation, desk scale.

Three-branch training (main / foreground-enhanced / semantics-aligned),
pose-free single-branch inference, synthetic occluded-person data, CMC/mAP
evaluation, and a verification harness for the loss and gradient identities.
"""

__version__ = "0.1.0"

from . import checkpoint, config, evaluation, gradcheck, heatmaps, losses, trainer
from .config import ExperimentConfig
from .models import EmbeddingBundle, PoseDistillNet, build_model

__all__ = [
    "EmbeddingBundle",
    "ExperimentConfig",
    "PoseDistillNet",
    "build_model",
    "checkpoint",
    "config",
    "evaluation",
    "gradcheck",
    "heatmaps",
    "losses",
    "trainer",
]
