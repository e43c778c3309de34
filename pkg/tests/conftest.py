"""Shared fixtures and oracle helpers."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from driqa.dataset import DatasetManifest, MosScale, SyntheticDataset, build_dataset
from driqa.degradations import DegradationSpec
from driqa.model import ModelConfig
from driqa.restorers import RestorerSpec


def tiny_manifest(corpus_dir, **overrides) -> DatasetManifest:
    """Six contents, three degradations, four restorers: enough structure for
    split/pairing logic while building in a couple of seconds."""
    base = dict(
        corpus_dir=corpus_dir,
        patch_size=64,
        n_contents=6,
        content_split=(4, 2),
        degradations=[
            DegradationSpec("downsample", 2),
            DegradationSpec("gaussian_noise", 25),
            DegradationSpec("jpeg", 30),
        ],
        restorers=[
            RestorerSpec("identity", "identity"),
            RestorerSpec("gaussian_denoise", "gaussian_denoise"),
            RestorerSpec("median_denoise", "median_denoise"),
            RestorerSpec("sharpen_up", "sharpen_up"),
        ],
        restorer_split={
            "train": ["identity", "gaussian_denoise"],
            "val": ["median_denoise", "sharpen_up"],
        },
        global_seed=11,
        mos_scale=MosScale(),
        corpus_generate={"n_images": 6, "size": 80, "seed": 3},
    )
    base.update(overrides)
    return DatasetManifest(**base)


def tiny_model_config(**overrides) -> ModelConfig:
    base = dict(
        input_resolution=64,
        channel_width=8,
        n_embed_blocks=2,
        n_csp_blocks=2,
        fc_hidden_sizes=(16,),
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory) -> SyntheticDataset:
    root = tmp_path_factory.mktemp("tiny")
    build_dataset(tiny_manifest(root / "corpus"), root / "ds")
    return SyntheticDataset(root / "ds")


# -- finite-difference oracle ---------------------------------------------------


def central_difference(closure, tensor: torch.Tensor, index: tuple, eps: float = 1e-5) -> float:
    """d closure / d tensor[index] by central differences, in place."""
    with torch.no_grad():
        original = tensor[index].item()
        tensor[index] = original + eps
        plus = closure()
        tensor[index] = original - eps
        minus = closure()
        tensor[index] = original
    return (plus - minus) / (2.0 * eps)


def max_relative_gradient_error(
    closure,
    tensors: list[torch.Tensor],
    rng: np.random.Generator,
    samples_per_tensor: int = 4,
    eps: float = 1e-5,
    floor: float = 1e-4,
) -> float:
    """Worst relative mismatch between autograd and finite differences.

    ``closure`` recomputes the scalar loss from current tensor values. The
    relative error of one coordinate is |analytic - fd| / max(|analytic|,
    |fd|, floor); the floor keeps near-zero gradients comparable in absolute
    terms instead of amplifying finite-difference roundoff.
    """
    for t in tensors:
        t.grad = None
    loss = closure()
    if not isinstance(loss, torch.Tensor):
        raise TypeError("closure must return the loss tensor when called for backward")
    loss.backward()
    worst = 0.0
    for tensor in tensors:
        grad = tensor.grad
        assert grad is not None, "closure did not reach this tensor"
        flat_indices = rng.choice(
            tensor.numel(), size=min(samples_per_tensor, tensor.numel()), replace=False
        )
        for flat in flat_indices:
            index = np.unravel_index(int(flat), tensor.shape)
            analytic = grad[index].item()
            fd = central_difference(lambda: closure().item(), tensor, index, eps)
            err = abs(analytic - fd) / max(abs(analytic), abs(fd), floor)
            worst = max(worst, err)
    return worst
