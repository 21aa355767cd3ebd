"""Independent no-crypto reference codec used as a test oracle.

Shares nothing with ``sepris.codec`` except the frame containers: the DCT is
scipy's orthonormal DCT-II and the quantization table is typed in again here.
"""

import numpy as np
from scipy.fft import dctn, idctn

IJG_LUMA = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
]).reshape(8, 8)


def ref_quant_matrix(q):
    scale = 5000 // q if q < 50 else 200 - 2 * q
    out = np.zeros((8, 8), dtype=np.int64)
    for i in range(8):
        for j in range(8):
            out[i, j] = max(1, (scale * int(IJG_LUMA[i, j]) + 50) // 100)
    return out


def _round(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5 + 1e-9)


def _pad(px):
    c, h, w = px.shape
    ph, pw = -(-h // 32) * 32, -(-w // 32) * 32
    return np.pad(px, ((0, 0), (0, ph - h), (0, pw - w)), mode="edge")


def ref_coefficients(pixels, q):
    """Quantized coefficients of the padded frame, shape (c, ph, pw)."""
    qm = ref_quant_matrix(q)
    p = _pad(np.asarray(pixels)).astype(np.float64)
    c, h, w = p.shape
    out = np.zeros(p.shape, dtype=np.int64)
    for ch in range(c):
        for by in range(0, h, 8):
            for bx in range(0, w, 8):
                d = dctn(p[ch, by:by + 8, bx:bx + 8], norm="ortho")
                out[ch, by:by + 8, bx:bx + 8] = np.clip(_round(d / qm), -32767, 32767)
    return out


def ref_reconstruct(pixels, q):
    """DCT -> quantize -> dequantize -> inverse DCT -> round, clamp, crop."""
    px = np.asarray(pixels)
    qm = ref_quant_matrix(q)
    coeffs = ref_coefficients(px, q)
    c, h, w = coeffs.shape
    out = np.zeros(coeffs.shape)
    for ch in range(c):
        for by in range(0, h, 8):
            for bx in range(0, w, 8):
                out[ch, by:by + 8, bx:bx + 8] = idctn(coeffs[ch, by:by + 8, bx:bx + 8] * qm, norm="ortho")
    out = np.clip(_round(out), 0, 255).astype(np.uint8)
    return out[:, : px.shape[1], : px.shape[2]]
