"""Stand-in restoration algorithms.

Classical deterministic filters playing the role of the restoration models
whose outputs the quality scorer is trained to rank. They produce distinct
quality tiers: denoisers help noisy references, smoothing hurts clean ones,
and the noise injector is reliably bad. All operate at the input resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageFilter

from driqa.errors import DataError, UsageError
from driqa.images import bicubic_resize

KINDS = (
    "identity",
    "bicubic_up",
    "box_blur_up",
    "median_denoise",
    "gaussian_denoise",
    "sharpen_up",
    "noise_injecting",
)


@dataclass(frozen=True)
class RestorerSpec:
    kind: str
    id: str
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown restorer kind {self.kind!r} (choose from {KINDS})")
        if not self.id:
            raise UsageError("restorer id must be a nonempty string")

    def param(self, name: str, default: float) -> float:
        for key, value in self.params:
            if key == name:
                return value
        return default


def default_restorers() -> list[RestorerSpec]:
    """One restorer per kind, ids matching kinds."""
    return [RestorerSpec(kind, kind) for kind in KINDS]


def restore(degraded: np.ndarray, spec: RestorerSpec, seed: int = 0) -> np.ndarray:
    """Apply a restorer to a uint8 RGB image; deterministic given seed."""
    if degraded.ndim != 3 or degraded.shape[2] != 3 or degraded.dtype != np.uint8:
        raise DataError(f"expected uint8 (H, W, 3) image, got {degraded.shape} {degraded.dtype}")
    h, w = degraded.shape[:2]
    kind = spec.kind

    if kind == "identity":
        return degraded.copy()
    if kind == "bicubic_up":
        factor = int(spec.param("factor", 2))
        if h % factor != 0 or w % factor != 0:
            raise DataError(f"resolution {w}x{h} not divisible by factor {factor}")
        return bicubic_resize(bicubic_resize(degraded, w // factor, h // factor), w, h)
    if kind == "box_blur_up":
        radius = spec.param("radius", 1.0)
        im = Image.fromarray(degraded).filter(ImageFilter.BoxBlur(radius))
        return np.asarray(im)
    if kind == "median_denoise":
        size = int(spec.param("size", 3))
        im = Image.fromarray(degraded).filter(ImageFilter.MedianFilter(size))
        return np.asarray(im)
    if kind == "gaussian_denoise":
        radius = spec.param("radius", 1.0)
        im = Image.fromarray(degraded).filter(ImageFilter.GaussianBlur(radius))
        return np.asarray(im)
    if kind == "sharpen_up":
        percent = int(spec.param("percent", 150))
        radius = spec.param("radius", 2.0)
        im = Image.fromarray(degraded).filter(
            ImageFilter.UnsharpMask(radius=radius, percent=percent, threshold=0)
        )
        return np.asarray(im)
    if kind == "noise_injecting":
        level = spec.param("level", 12.0)
        rng = np.random.default_rng(seed)
        noisy = degraded.astype(np.float64) + rng.normal(0.0, level, degraded.shape)
        return np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
    raise UsageError(f"unknown restorer kind {kind!r}")
