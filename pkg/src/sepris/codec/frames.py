"""Data types flowing through the frame cipher."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from sepris.errors import GeometryError, InvalidQuality, WeakKey

TILE = 32
BLOCK = 8


@dataclass
class FrameBuffer:
    """Raw 8-bit frame, stored channel-planar as ``(channels, height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[None, :, :]
        if px.ndim != 3 or px.shape[0] not in (1, 3):
            raise GeometryError(f"expected (channels, height, width) with 1 or 3 channels, got {px.shape}")
        if px.shape[1] < 1 or px.shape[2] < 1:
            raise GeometryError("frame dimensions must be positive")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise ValueError("pixel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        self.pixels = np.ascontiguousarray(px)

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, FrameBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))


@dataclass
class CoefficientPlane:
    """Quantized DCT coefficients, padded to whole 32x32 tiles.

    ``coefficients`` has shape ``(channels, padded_height, padded_width)``
    and dtype int16.
    """

    coefficients: np.ndarray
    original_width: int
    original_height: int

    def __post_init__(self):
        c = np.asarray(self.coefficients)
        if c.ndim != 3:
            raise GeometryError(f"coefficient plane must be 3-d, got shape {c.shape}")
        self.coefficients = np.ascontiguousarray(c, dtype=np.int16)

    @property
    def channels(self) -> int:
        return self.coefficients.shape[0]

    @property
    def padded_height(self) -> int:
        return self.coefficients.shape[1]

    @property
    def padded_width(self) -> int:
        return self.coefficients.shape[2]

    def copy(self) -> "CoefficientPlane":
        return CoefficientPlane(self.coefficients.copy(), self.original_width, self.original_height)

    def __eq__(self, other):
        if not isinstance(other, CoefficientPlane):
            return NotImplemented
        return (
            self.original_width == other.original_width
            and self.original_height == other.original_height
            and self.coefficients.shape == other.coefficients.shape
            and bool(np.array_equal(self.coefficients, other.coefficients))
        )


def check_quality(quality: int) -> int:
    if isinstance(quality, bool) or int(quality) != quality or not 1 <= quality <= 100:
        raise InvalidQuality(f"quality must be an integer in [1, 100], got {quality!r}")
    return int(quality)


@dataclass(frozen=True)
class DabKeyset:
    """Secrets for one serving session: AES key, shuffle seed, quality, nonce origin."""

    aes_key: bytes
    shuffle_seed: bytes
    quality: int = 50
    frame_nonce_base: int = 0

    def __post_init__(self):
        for name in ("aes_key", "shuffle_seed"):
            v = getattr(self, name)
            if len(v) != 16:
                raise WeakKey(f"{name} must be 16 bytes, got {len(v)}")
            if not any(v):
                raise WeakKey(f"{name} is all zero")
        check_quality(self.quality)
        if not 0 <= self.frame_nonce_base < 2**64:
            raise ValueError("frame_nonce_base must fit in 64 bits")

    @classmethod
    def generate(cls, quality: int = 50, rng=None) -> "DabKeyset":
        """Fresh keyset; ``rng`` is a :class:`sepris._drbg.Drbg` for reproducible runs."""
        draw = (lambda n, lab: rng.bytes(n, lab)) if rng is not None else (lambda n, lab: os.urandom(n))
        while True:
            aes, seed, base = draw(16, "aes"), draw(16, "shuffle"), draw(8, "nonce-base")
            if any(aes) and any(seed):
                return cls(aes, seed, quality, int.from_bytes(base, "big"))

    def with_flipped_key_bit(self, bit: int = 0) -> "DabKeyset":
        """Copy with one bit of ``aes_key`` inverted (bit 0 = lowest bit of the last byte)."""
        key = bytearray(self.aes_key)
        key[15 - bit // 8] ^= 1 << (bit % 8)
        return DabKeyset(bytes(key), self.shuffle_seed, self.quality, self.frame_nonce_base)

    def to_json(self) -> str:
        return json.dumps(
            {
                "aes_key": self.aes_key.hex(),
                "shuffle_seed": self.shuffle_seed.hex(),
                "quality": self.quality,
                "frame_nonce_base": self.frame_nonce_base,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DabKeyset":
        d = json.loads(text)
        return cls(
            bytes.fromhex(d["aes_key"]),
            bytes.fromhex(d["shuffle_seed"]),
            int(d.get("quality", 50)),
            int(d.get("frame_nonce_base", 0)),
        )


@dataclass
class CipherFrame:
    """Shuffled, partially encrypted coefficient plane plus header metadata.

    ``nonce`` is the per-frame counter origin of the AES layer; it travels in
    the clear like any CTR nonce.
    """

    plane: CoefficientPlane
    quality: int
    frame_index: int
    permutation_digest: bytes
    nonce: bytes

    def __eq__(self, other):
        if not isinstance(other, CipherFrame):
            return NotImplemented
        return (
            self.plane == other.plane
            and self.quality == other.quality
            and self.frame_index == other.frame_index
            and self.permutation_digest == other.permutation_digest
            and self.nonce == other.nonce
        )
