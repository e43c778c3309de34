"""Image I/O and pixel-level helpers.

Convention: on disk and through the synthesis pipeline images are uint8
RGB arrays of shape (H, W, 3); the model consumes float tensors of shape
(3, H, W) with values in [0, 1].
"""

from __future__ import annotations

import io
import math
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from driqa.errors import DataError

PSNR_CEILING_DB = 99.0
PSNR_FLOOR_DB = 1.0


def _check_u8(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"expected (H, W, 3) uint8 array, got {getattr(img, 'shape', type(img))}")
    if img.dtype != np.uint8:
        raise DataError(f"expected uint8 image, got dtype {img.dtype}")
    return img


def load_image(path: str | Path) -> np.ndarray:
    """Load an image file as uint8 RGB (H, W, 3)."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def save_png(path: str | Path, img: np.ndarray) -> None:
    """Write a uint8 RGB array losslessly."""
    _check_u8(img)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def to_tensor(img: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """uint8 (H, W, 3) -> float (3, H, W) in [0, 1]."""
    _check_u8(img)
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).to(dtype) / 255.0


def from_tensor(t: torch.Tensor) -> np.ndarray:
    """float (3, H, W) in [0, 1] -> uint8 (H, W, 3), rounding half away from zero."""
    arr = t.detach().cpu().numpy()
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DataError(f"expected (3, H, W) tensor, got shape {tuple(arr.shape)}")
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    _check_u8(img)
    h, w = img.shape[:2]
    if h < size or w < size:
        raise DataError(f"image {w}x{h} smaller than crop size {size}")
    top = (h - size) // 2
    left = (w - size) // 2
    return img[top : top + size, left : left + size]


def bicubic_resize(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bicubic resize of a uint8 RGB image."""
    _check_u8(img)
    if width < 1 or height < 1:
        raise DataError(f"invalid resize target {width}x{height}")
    return np.asarray(Image.fromarray(img).resize((width, height), Image.BICUBIC))


def encode_jpeg(img: np.ndarray, quality: int) -> np.ndarray:
    """Round-trip a uint8 RGB image through baseline JPEG at the given quality."""
    _check_u8(img)
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="JPEG", quality=quality)
    buf.seek(0)
    with Image.open(buf) as im:
        return np.asarray(im.convert("RGB"))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB between two uint8 images (peak 255).

    Identical images give math.inf; callers that need a bounded value clamp
    with PSNR_CEILING_DB / PSNR_FLOOR_DB.
    """
    _check_u8(a)
    _check_u8(b)
    if a.shape != b.shape:
        raise DataError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)
