"""Seeded synthetic image corpus for training and tests.

Real photo corpora are out of reach here, so we synthesize images with
enough spatial structure (smooth gradients, blobs, edges, oriented
texture) that a learned transform has something to exploit. Everything
is float32 in [0, 1], HWC, and fully determined by the seed.
"""

from __future__ import annotations

import numpy as np


def _smooth_noise(rng: np.random.Generator, h: int, w: int, cells: int) -> np.ndarray:
    """Low-resolution noise upsampled with bilinear weights."""
    coarse = rng.random((cells + 1, cells + 1))
    ys = np.linspace(0, cells, h)
    xs = np.linspace(0, cells, w)
    y0 = np.minimum(ys.astype(int), cells - 1)
    x0 = np.minimum(xs.astype(int), cells - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = coarse[np.ix_(y0, x0)]
    b = coarse[np.ix_(y0, x0 + 1)]
    c = coarse[np.ix_(y0 + 1, x0)]
    d = coarse[np.ix_(y0 + 1, x0 + 1)]
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx


def synthetic_image(rng: np.random.Generator, height: int = 128,
                    width: int = 128) -> np.ndarray:
    """One structured (H, W, 3) image in [0, 1]."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= height
    xx /= width
    img = np.zeros((height, width, 3))

    # Background: per-channel linear gradient plus smooth blobs.
    for ch in range(3):
        gy, gx = rng.normal(scale=0.5, size=2)
        img[:, :, ch] = 0.5 + gy * (yy - 0.5) + gx * (xx - 0.5)
        img[:, :, ch] += 0.6 * (_smooth_noise(rng, height, width, 4) - 0.5)

    # Oriented sinusoidal texture in a random band.
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(4, 12)
    phase = rng.uniform(0, 2 * np.pi)
    wave = 0.15 * np.sin(2 * np.pi * freq * (yy * np.sin(theta) + xx * np.cos(theta))
                         + phase)
    band = _smooth_noise(rng, height, width, 3) > 0.5
    img += (wave * band)[:, :, None] * rng.random(3)

    # A few hard-edged rectangles.
    for _ in range(rng.integers(2, 5)):
        y0, x0 = rng.integers(0, height // 2), rng.integers(0, width // 2)
        dy, dx = rng.integers(8, height // 2), rng.integers(8, width // 2)
        color = rng.random(3)
        alpha = rng.uniform(0.3, 0.9)
        region = img[y0 : y0 + dy, x0 : x0 + dx]
        region *= 1 - alpha
        region += alpha * color

    img += rng.normal(scale=0.01, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synthetic_corpus(count: int, height: int = 128, width: int = 128,
                     seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [synthetic_image(rng, height, width) for _ in range(count)]
