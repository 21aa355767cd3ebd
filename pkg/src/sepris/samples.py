"""Deterministic synthetic frames for tests, demos and the security report."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from sepris.codec.frames import FrameBuffer


def test_image(width: int = 512, height: int = 512, seed: int = 7) -> FrameBuffer:
    """A photograph-like grayscale scene: lit gradient, overlapping shapes, soft texture.

    Neighbouring pixels are strongly correlated, as in natural images, and
    every value stays inside [12, 243] so no long runs of 0 or 255 appear.
    """
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    u, v = x / width, y / height
    img = 70 + 90 * u + 40 * v
    for _ in range(14):
        cx, cy = rng.uniform(0, 1, 2)
        rx, ry = rng.uniform(0.05, 0.25, 2)
        level = rng.uniform(-70, 70)
        mask = ((u - cx) / rx) ** 2 + ((v - cy) / ry) ** 2
        img += level * expit((1 - mask) * 12)
    for _ in range(6):
        fx, fy = rng.uniform(2, 14, 2)
        ph = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(3, 9) * np.sin(2 * np.pi * (fx * u + fy * v) + ph)
    img += rng.normal(0, 2.0, img.shape)
    lo, hi = img.min(), img.max()
    img = 12 + (img - lo) * (231 / (hi - lo))
    return FrameBuffer(np.round(img).astype(np.uint8))


test_image.__test__ = False  # not a pytest test


def video_frames(count: int, width: int = 64, height: int = 48, channels: int = 1, seed: int = 11) -> list[FrameBuffer]:
    """A short clip: a textured background with a bright square drifting across."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width]
    base = 60 + 80 * (x / width) + 40 * np.sin(y / 5.0) + rng.integers(0, 12, (height, width))
    frames = []
    for k in range(count):
        img = base.copy()
        sx = (3 * k) % max(1, width - 8)
        sy = (2 * k) % max(1, height - 8)
        img[sy:sy + 8, sx:sx + 8] = 230
        img = np.clip(img, 16, 240).astype(np.uint8)
        frames.append(FrameBuffer(np.repeat(img[None], channels, axis=0)))
    return frames
