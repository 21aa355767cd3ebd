"""8x8 block DCT and JPEG-style quantization."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from sepris.codec.frames import BLOCK, check_quality

# IJG luminance table (JPEG Annex K)
BASE_QUANT = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)

INT16_LIMIT = 32767
# Ratios closer than this to a .5 boundary count as exact ties, so rounding
# does not depend on the last ulp of whichever DCT routine produced them.
_TIE_SLACK = 1e-9


@lru_cache(maxsize=None)
def _dct_matrix(n: int) -> np.ndarray:
    t = np.empty((n, n))
    t[0, :] = 1.0 / math.sqrt(n)
    for i in range(1, n):
        for j in range(n):
            t[i, j] = math.sqrt(2.0 / n) * math.cos((2 * j + 1) * i * math.pi / (2 * n))
    t.setflags(write=False)
    return t


def dct_matrix() -> np.ndarray:
    """Orthonormal 8x8 DCT-II matrix ``T``; row 0 is ``1/sqrt(8)`` so ``T^-1 = T.T``."""
    return _dct_matrix(BLOCK)


def forward_dct(block: np.ndarray) -> np.ndarray:
    """``T @ M @ T.T`` for one block or a stack of blocks (last two axes 8x8)."""
    t = dct_matrix()
    return t @ np.asarray(block, dtype=np.float64) @ t.T


def inverse_dct(coeffs: np.ndarray) -> np.ndarray:
    t = dct_matrix()
    return t.T @ np.asarray(coeffs, dtype=np.float64) @ t


def quant_matrix(quality: int) -> np.ndarray:
    """Scale the base table for quality ``Q``; entries are clamped to at least 1."""
    q = check_quality(quality)
    # integer scale factor, as in the IJG reference encoder
    s = 5000 // q if q < 50 else 200 - 2 * q
    qm = (s * BASE_QUANT + 50) // 100
    return np.maximum(qm, 1)


def round_half_away(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5 + _TIE_SLACK)


def quantize(coeffs: np.ndarray, qm: np.ndarray) -> np.ndarray:
    q = round_half_away(np.asarray(coeffs, dtype=np.float64) / qm)
    return np.clip(q, -INT16_LIMIT, INT16_LIMIT).astype(np.int16)


def dequantize(q: np.ndarray, qm: np.ndarray) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) * qm


def to_blocks(plane: np.ndarray) -> np.ndarray:
    """``(..., H, W)`` -> ``(..., H/8, W/8, 8, 8)``."""
    *lead, h, w = plane.shape
    b = plane.reshape(*lead, h // BLOCK, BLOCK, w // BLOCK, BLOCK)
    return np.swapaxes(b, -3, -2)


def from_blocks(blocks: np.ndarray) -> np.ndarray:
    *lead, bh, bw, _, _ = blocks.shape
    return np.swapaxes(blocks, -3, -2).reshape(*lead, bh * BLOCK, bw * BLOCK)
