"""Degradation models applied to pristine images.

Three families: bicubic downsampling (with resize back to the original
resolution, so every image in a sample shares one resolution), additive
Gaussian noise on the 0-255 scale, and baseline JPEG compression. Paper
presets use the closed menus factor {2,4,8} / level {25,50} / quality
{30,10}; arbitrary strengths are allowed outside the presets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from driqa.errors import DataError, UsageError
from driqa.images import bicubic_resize, encode_jpeg

KINDS = ("downsample", "gaussian_noise", "jpeg")


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    strength: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown degradation kind {self.kind!r} (choose from {KINDS})")
        if self.kind == "downsample":
            f = self.strength
            if f != int(f) or f < 1:
                raise UsageError(f"downsample factor must be a positive integer, got {f}")
        elif self.kind == "gaussian_noise":
            if self.strength < 0:
                raise UsageError(f"noise level must be nonnegative, got {self.strength}")
        elif self.kind == "jpeg":
            q = self.strength
            if q != int(q) or not 1 <= q <= 95:
                raise UsageError(f"jpeg quality must be an integer in [1, 95], got {q}")

    @property
    def label(self) -> str:
        if self.kind == "downsample":
            return f"down{int(self.strength)}x"
        if self.kind == "gaussian_noise":
            return f"noise{int(self.strength) if self.strength == int(self.strength) else self.strength}"
        return f"jpeg{int(self.strength)}"

    def with_seed(self, seed: int) -> "DegradationSpec":
        return DegradationSpec(self.kind, self.strength, seed)


def paper_degradations() -> list[DegradationSpec]:
    """The seven-entry preset menu: x2/x4/x8, noise 25/50, jpeg Q30/Q10."""
    return [
        DegradationSpec("downsample", 2),
        DegradationSpec("downsample", 4),
        DegradationSpec("downsample", 8),
        DegradationSpec("gaussian_noise", 25),
        DegradationSpec("gaussian_noise", 50),
        DegradationSpec("jpeg", 30),
        DegradationSpec("jpeg", 10),
    ]


def degrade(pristine: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Apply a degradation to a uint8 RGB image; deterministic given spec.seed."""
    h, w = pristine.shape[:2]
    if spec.kind == "downsample":
        factor = int(spec.strength)
        if factor == 1:
            return pristine.copy()
        if h % factor != 0 or w % factor != 0:
            raise DataError(f"resolution {w}x{h} not divisible by downsample factor {factor}")
        low = bicubic_resize(pristine, w // factor, h // factor)
        return bicubic_resize(low, w, h)
    if spec.kind == "gaussian_noise":
        if spec.strength == 0:
            return pristine.copy()
        rng = np.random.default_rng(spec.seed)
        noisy = pristine.astype(np.float64) + rng.normal(0.0, spec.strength, pristine.shape)
        return np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
    if spec.kind == "jpeg":
        return encode_jpeg(pristine, int(spec.strength))
    raise UsageError(f"unknown degradation kind {spec.kind!r}")
