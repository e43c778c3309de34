"""Degraded-reference image quality assessment (DR-IQA) toolkit.

Scores restored images using only the degraded input of an image-restoration
pipeline as reference. Reference knowledge is distilled from pristine images
at training time; at inference the model sees the (degraded, restored) pair
only.
"""

__version__ = "0.1.0"

from driqa.model import CKDN, ModelConfig, build_model
from driqa.losses import (
    Batch,
    LossWeights,
    PairBatch,
    absolute_loss,
    ckd_loss,
    distillation_term,
    elo_probability,
    fr_absolute_loss,
    relative_loss,
)
from driqa.metrics import pairwise_accuracy, plcc, srcc

__all__ = [
    "CKDN",
    "ModelConfig",
    "build_model",
    "Batch",
    "PairBatch",
    "LossWeights",
    "absolute_loss",
    "fr_absolute_loss",
    "distillation_term",
    "ckd_loss",
    "relative_loss",
    "elo_probability",
    "srcc",
    "plcc",
    "pairwise_accuracy",
]
