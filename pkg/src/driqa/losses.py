"""Training losses.

All squared-error terms are means over the batch and, for feature-space
terms, over feature elements, so loss magnitudes and the distillation
weight are resolution-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from driqa.model import CKDN


@dataclass(frozen=True)
class LossWeights:
    """lam: distillation weight (preset 10); elo_m: Elo scale (preset 400)."""

    lam: float = 10.0
    elo_m: float = 400.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"distillation weight must be nonnegative, got {self.lam}")
        if self.elo_m <= 0:
            raise ValueError(f"Elo scale must be positive, got {self.elo_m}")


def elo_probability(score_i, score_j, m: float = 400.0):
    """Win probability of i over j: 1 / (1 + 10**((s_j - s_i) / m)).

    Works elementwise on floats, numpy arrays and torch tensors. Strictly
    increasing in ``score_i``, complement-symmetric, invariant under a joint
    shift of both scores.
    """
    if m <= 0:
        raise ValueError(f"Elo scale must be positive, got {m}")
    return 1.0 / (1.0 + 10.0 ** ((score_j - score_i) / m))


def _stack(images, name: str) -> Tensor:
    if isinstance(images, Tensor):
        t = images
        if t.dim() == 3:
            t = t.unsqueeze(0)
    else:
        images = list(images)
        if not images:
            raise ValueError(f"{name}: empty batch")
        t = torch.stack(images)
    if t.dim() != 4 or t.shape[1] != 3:
        raise ValueError(f"{name}: expected images of shape (3, H, W), got {tuple(t.shape)}")
    return t


def _scores(values, n: int, name: str) -> Tensor:
    t = torch.as_tensor(values, dtype=torch.float64).reshape(-1)
    if t.numel() != n:
        raise ValueError(f"{name}: expected {n} scores, got {t.numel()}")
    if not torch.isfinite(t).all():
        raise ValueError(f"{name}: scores must be finite")
    return t


class Batch:
    """Aligned (pristine, degraded, restored, mos) lists, stacked to tensors."""

    def __init__(self, pristine, degraded, restored, mos):
        self.pristine = _stack(pristine, "pristine")
        self.degraded = _stack(degraded, "degraded")
        self.restored = _stack(restored, "restored")
        n = self.restored.shape[0]
        if self.pristine.shape[0] != n or self.degraded.shape[0] != n:
            raise ValueError("pristine/degraded/restored lengths differ")
        if n < 1:
            raise ValueError("empty batch")
        self.mos = _scores(mos, n, "mos")

    def __len__(self) -> int:
        return self.restored.shape[0]


class PairBatch:
    """Pairs of restorations of the same content, with their scores."""

    def __init__(self, restored_i, restored_j, mos_i, mos_j):
        self.restored_i = _stack(restored_i, "restored_i")
        self.restored_j = _stack(restored_j, "restored_j")
        n = self.restored_i.shape[0]
        if self.restored_j.shape[0] != n:
            raise ValueError("pair lists have different lengths")
        if n < 1:
            raise ValueError("empty pair batch")
        self.mos_i = _scores(mos_i, n, "mos_i")
        self.mos_j = _scores(mos_j, n, "mos_j")

    def __len__(self) -> int:
        return self.restored_i.shape[0]


def mean_squared(x: Tensor) -> Tensor:
    """Mean of elementwise squares (the reduction used by all feature terms)."""
    return (x * x).mean()


def absolute_loss(model: CKDN, batch: Batch) -> Tensor:
    """MSE between mos targets and degraded-reference scores."""
    pred = model.score(batch.degraded, batch.restored)
    return mean_squared(batch.mos.to(pred.dtype) - pred)


def fr_absolute_loss(model: CKDN, batch: Batch) -> Tensor:
    """MSE between mos targets and full-reference (teacher-path) scores.

    Gradients flow into the teacher embedding and the shared QSE/CSP, never
    into the student reference embedding.
    """
    pred = model.teacher_score(batch.pristine, batch.restored)
    return mean_squared(batch.mos.to(pred.dtype) - pred)


def distillation_term(model: CKDN, batch: Batch, stop_teacher_gradient: bool = False) -> Tensor:
    """Mean squared distance between teacher and student reference features.

    By default the objective is optimized jointly (gradients reach both
    embeddings); ``stop_teacher_gradient`` detaches the teacher features.
    """
    teacher = model.teacher_reference_features(batch.pristine)
    if stop_teacher_gradient:
        teacher = teacher.detach()
    student = model.reference_features(batch.degraded)
    return mean_squared(teacher - student)


def ckd_loss(
    model: CKDN,
    batch: Batch,
    weights: LossWeights = LossWeights(),
    stop_teacher_gradient: bool = False,
) -> Tensor:
    """Conditional knowledge distillation objective.

    absolute_loss + fr_absolute_loss + lam * distillation_term, with the
    quality embedding and score predictor shared between the two paths by
    construction (see :class:`driqa.model.CKDN`).
    """
    return (
        absolute_loss(model, batch)
        + fr_absolute_loss(model, batch)
        + weights.lam * distillation_term(model, batch, stop_teacher_gradient)
    )


def relative_loss(
    model: CKDN,
    pairs: PairBatch,
    m: float = 400.0,
    sigmoid_head: bool = False,
) -> Tensor:
    """Relative score regression over restoration pairs.

    Regresses the Elo win probability of sample i over sample j against the
    CSP output on the quality-feature difference QSE(R_i) - QSE(R_j). Only
    the quality embedding and score predictor appear in the graph. The raw
    CSP output is regressed by default; ``sigmoid_head`` squashes it first.
    """
    target = elo_probability(pairs.mos_i, pairs.mos_j, m)
    diff = model.quality_features(pairs.restored_i) - model.quality_features(pairs.restored_j)
    pred = model.csp(diff)
    if sigmoid_head:
        pred = torch.sigmoid(pred)
    return mean_squared(target.to(pred.dtype) - pred)
