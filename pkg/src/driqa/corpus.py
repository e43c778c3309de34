"""Procedural pristine-image generation.

A deterministic stand-in for a photographic corpus: each image mixes smooth
gradients, oriented gratings, filled shapes and band-limited texture so that
every degradation family (resampling, noise, block coding) measurably hurts
it and different restorers land on different quality tiers.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFilter

from driqa.errors import DataError
from driqa.images import save_png


def _gradient(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    out = np.zeros((size, size, 3))
    for c in range(3):
        a, b = rng.uniform(-1, 1, 2)
        out[:, :, c] = a * xx + b * yy
    return out


def _gratings(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.zeros((size, size, 3))
    for _ in range(rng.integers(2, 5)):
        freq = rng.uniform(2.0, 14.0) / size
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        tint = rng.uniform(0.2, 1.0, 3)
        out += rng.uniform(0.1, 0.4) * wave[:, :, None] * tint[None, None, :]
    return out


def _shapes(rng: np.random.Generator, size: int) -> np.ndarray:
    im = Image.new("RGB", (size, size), (0, 0, 0))
    draw = ImageDraw.Draw(im)
    for _ in range(rng.integers(4, 9)):
        x0, y0 = rng.integers(0, size, 2)
        dx, dy = rng.integers(size // 8, size // 2, 2)
        box = [int(x0), int(y0), int(x0 + dx), int(y0 + dy)]
        color = tuple(int(v) for v in rng.integers(30, 225, 3))
        if rng.random() < 0.5:
            draw.ellipse(box, fill=color)
        else:
            draw.rectangle(box, fill=color)
    for _ in range(rng.integers(2, 6)):
        pts = [tuple(int(v) for v in rng.integers(0, size, 2)) for _ in range(2)]
        color = tuple(int(v) for v in rng.integers(0, 255, 3))
        draw.line(pts, fill=color, width=int(rng.integers(1, 4)))
    return np.asarray(im).astype(np.float64) / 255.0 - 0.5


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    noise = rng.normal(0, 1, (size, size, 3))
    u8 = np.clip(noise * 40 + 128, 0, 255).astype(np.uint8)
    blurred = Image.fromarray(u8).filter(ImageFilter.GaussianBlur(rng.uniform(0.6, 1.6)))
    return (np.asarray(blurred).astype(np.float64) - 128.0) / 128.0


def make_pristine_image(size: int, seed: int) -> np.ndarray:
    """One deterministic synthetic pristine image, uint8 (size, size, 3)."""
    rng = np.random.default_rng(seed)
    img = (
        0.45 * _gradient(rng, size)
        + 0.5 * _gratings(rng, size)
        + 0.9 * _shapes(rng, size)
        + 0.35 * _texture(rng, size)
    )
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-9:
        hi = lo + 1.0
    img = (img - lo) / (hi - lo)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def write_corpus(directory: str | Path, n_images: int, size: int, seed: int) -> list[Path]:
    """Materialize ``n_images`` deterministic pristine PNGs under ``directory``.

    File names are stable (content0000.png, ...) and contents depend only on
    (seed, index, size). Existing files are overwritten with identical bytes.
    """
    if n_images < 1 or size < 8:
        raise DataError(f"invalid corpus request: n_images={n_images}, size={size}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_images):
        img = make_pristine_image(size, seed * 1_000_003 + i)
        path = directory / f"content{i:04d}.png"
        save_png(path, img)
        paths.append(path)
    return paths
