"""The frame cipher: block DCT, quantization, selective AES, keyed tile shuffle.

Encryption order is fixed::

    pad -> 8x8 DCT -> quantize -> AES on the 4x4 low-frequency corner -> shuffle 32x32 tiles

and :func:`decipher_frame` runs the exact inverse.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from typing import Literal

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from sepris.codec.frames import (
    BLOCK,
    TILE,
    CipherFrame,
    CoefficientPlane,
    DabKeyset,
    FrameBuffer,
)
from sepris.codec.transform import (
    dequantize,
    forward_dct,
    from_blocks,
    inverse_dct,
    quant_matrix,
    quantize,
    round_half_away,
    to_blocks,
)
from sepris.errors import GeometryError, WeakKey, WrongShuffleKey

LOW = 4  # side of the encrypted low-frequency corner

Direction = Literal["encrypt", "decrypt"]


def _padded(n: int) -> int:
    return -(-n // TILE) * TILE


def pad_frame(pixels: np.ndarray) -> np.ndarray:
    """Edge-replicate the right/bottom borders up to whole 32x32 tiles."""
    c, h, w = pixels.shape
    return np.pad(pixels, ((0, 0), (0, _padded(h) - h), (0, _padded(w) - w)), mode="edge")


def _aes_ecb(key: bytes, data: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(data) + enc.finalize()


def _check_key(key: bytes) -> None:
    if len(key) != 16:
        raise WeakKey(f"AES-128 key must be 16 bytes, got {len(key)}")
    if not any(key):
        raise WeakKey("all-zero AES key")


def _coefficient_keystream(key: bytes, nonce: bytes, channels: int, brows: int, bcols: int) -> np.ndarray:
    """32 keystream bytes per 8x8 block, shape ``(channels, brows, bcols, 16)`` as uint16."""
    c, r, k, half = np.meshgrid(
        np.arange(channels), np.arange(brows), np.arange(bcols), np.arange(2), indexing="ij"
    )
    n = c.size
    ctr = np.zeros((n, 16), dtype=np.uint8)
    # bytes 8..15 carry (channel u8, block row u16, block col u16, half u8) big-endian
    ctr[:, 8] = c.ravel()
    ctr[:, 9] = r.ravel() >> 8
    ctr[:, 10] = r.ravel() & 0xFF
    ctr[:, 11] = k.ravel() >> 8
    ctr[:, 12] = k.ravel() & 0xFF
    ctr[:, 13] = half.ravel()
    ctr ^= np.frombuffer(nonce, dtype=np.uint8)
    stream = np.frombuffer(_aes_ecb(key, ctr.tobytes()), dtype="<u2")
    return stream.reshape(channels, brows, bcols, 16)


def aes_coeff_layer(
    plane: CoefficientPlane, key: bytes, nonce: bytes, direction: Direction = "encrypt"
) -> CoefficientPlane:
    """XOR the 16 coefficients with row<4 and col<4 of every 8x8 block with an AES-CTR keystream.

    Each block's corner serializes row-major as 16 little-endian int16 values
    (32 bytes, two AES blocks).  Encryption and decryption are the same XOR;
    ``direction`` only documents intent.
    """
    if direction not in ("encrypt", "decrypt"):
        raise ValueError(f"direction must be 'encrypt' or 'decrypt', not {direction!r}")
    _check_key(key)
    if len(nonce) != 16:
        raise ValueError("nonce must be 16 bytes")
    ch, h, w = plane.coefficients.shape
    if h % BLOCK or w % BLOCK:
        raise GeometryError(f"plane {w}x{h} is not a whole number of 8x8 blocks")
    out = plane.coefficients.copy()
    blocks = to_blocks(out.view("<u2"))  # a view into ``out``
    ks = _coefficient_keystream(key, nonce, ch, h // BLOCK, w // BLOCK)
    corner = blocks[..., :LOW, :LOW].reshape(*blocks.shape[:3], LOW * LOW)
    blocks[..., :LOW, :LOW] = (corner ^ ks).reshape(*blocks.shape[:3], LOW, LOW)
    return CoefficientPlane(out, plane.original_width, plane.original_height)


class _AesCounterStream:
    """AES-128-CTR keystream read as unsigned 32-bit words."""

    def __init__(self, key: bytes, nonce: bytes):
        self._enc = Cipher(algorithms.AES(key), modes.CTR(nonce)).encryptor()
        self._buf = b""

    def word(self) -> int:
        if len(self._buf) < 4:
            self._buf += self._enc.update(bytes(256))
        w, self._buf = self._buf[:4], self._buf[4:]
        return int.from_bytes(w, "little")

    def below(self, bound: int) -> int:
        # rejection sampling keeps every index equally likely
        limit = (1 << 32) - ((1 << 32) % bound)
        while True:
            w = self.word()
            if w < limit:
                return w % bound


def tile_permutation(seed: bytes, frame_index: int, n: int) -> list[int]:
    """Fisher-Yates permutation of ``n`` tiles keyed by ``(seed, frame_index)``.

    ``perm[k]`` is the source tile placed at output position ``k``.
    """
    _check_key(seed)
    stream = _AesCounterStream(seed, struct.pack(">QQ", frame_index, 0))
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = stream.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def permutation_digest(seed: bytes, perm: list[int]) -> bytes:
    """Keyed SHA-256 over the permutation, so the header does not reveal it for small grids."""
    msg = b"sepris-tile-perm" + struct.pack(f"<I{len(perm)}I", len(perm), *perm)
    return hmac.new(seed, msg, hashlib.sha256).digest()


def _tiles(coeffs: np.ndarray) -> np.ndarray:
    c, h, w = coeffs.shape
    t = coeffs.reshape(c, h // TILE, TILE, w // TILE, TILE).transpose(1, 3, 0, 2, 4)
    return t.reshape((h // TILE) * (w // TILE), c, TILE, TILE)


def _untiles(tiles: np.ndarray, h: int, w: int) -> np.ndarray:
    n, c, _, _ = tiles.shape
    t = tiles.reshape(h // TILE, w // TILE, c, TILE, TILE).transpose(2, 0, 3, 1, 4)
    return t.reshape(c, h, w)


def shuffle_blocks(plane: CoefficientPlane, seed: bytes, frame_index: int, *, quality: int = 50,
                   nonce: bytes = bytes(16)) -> CipherFrame:
    """Permute the grid of 32x32 coefficient tiles."""
    _, h, w = plane.coefficients.shape
    if h % TILE or w % TILE or h == 0 or w == 0:
        raise GeometryError(f"plane {w}x{h} is not a whole number of {TILE}x{TILE} tiles")
    tiles = _tiles(plane.coefficients)
    perm = tile_permutation(seed, frame_index, len(tiles))
    shuffled = _untiles(tiles[perm], h, w)
    return CipherFrame(
        plane=CoefficientPlane(shuffled, plane.original_width, plane.original_height),
        quality=quality,
        frame_index=frame_index,
        permutation_digest=permutation_digest(seed, perm),
        nonce=nonce,
    )


def unshuffle_blocks(cf: CipherFrame, seed: bytes) -> CoefficientPlane:
    _, h, w = cf.plane.coefficients.shape
    if h % TILE or w % TILE or h == 0 or w == 0:
        raise GeometryError(f"plane {w}x{h} is not a whole number of {TILE}x{TILE} tiles")
    tiles = _tiles(cf.plane.coefficients)
    perm = tile_permutation(seed, cf.frame_index, len(tiles))
    if not hmac.compare_digest(permutation_digest(seed, perm), cf.permutation_digest):
        raise WrongShuffleKey("shuffle seed does not reproduce the recorded permutation")
    restored = np.empty_like(tiles)
    restored[perm] = tiles
    return CoefficientPlane(_untiles(restored, h, w), cf.plane.original_width, cf.plane.original_height)


# -- codec without the crypto layers -------------------------------------


def encode_plane(frame: FrameBuffer, quality: int) -> CoefficientPlane:
    """Pad, transform and quantize a frame."""
    qm = quant_matrix(quality)
    padded = pad_frame(frame.pixels).astype(np.float64)
    coeffs = quantize(forward_dct(to_blocks(padded)), qm)
    return CoefficientPlane(from_blocks(coeffs), frame.width, frame.height)


def decode_plane(plane: CoefficientPlane, quality: int) -> FrameBuffer:
    """Dequantize, inverse-transform, crop and clamp back to 8-bit pixels."""
    if plane.original_width < 1 or plane.original_height < 1:
        raise GeometryError("cannot crop to an empty frame")
    if plane.original_width > plane.padded_width or plane.original_height > plane.padded_height:
        raise GeometryError("original dimensions exceed the padded plane")
    qm = quant_matrix(quality)
    spatial = from_blocks(inverse_dct(dequantize(to_blocks(plane.coefficients), qm)))
    px = np.clip(round_half_away(spatial), 0, 255).astype(np.uint8)
    return FrameBuffer(px[:, : plane.original_height, : plane.original_width])


# -- full pipeline ---------------------------------------------------------


def frame_nonce(frame: FrameBuffer, keys: DabKeyset, frame_index: int) -> bytes:
    """Per-frame AES counter origin.

    A keyed hash over the nonce base, the frame index and the raw pixels: any
    change to the source frame moves every keystream block, even when
    quantization would have absorbed the change.
    """
    mac_key = hashlib.sha256(b"sepris-frame-nonce" + keys.aes_key).digest()
    head = struct.pack("<QQHHB", keys.frame_nonce_base, frame_index, frame.width, frame.height, frame.channels)
    return hmac.new(mac_key, head + frame.tobytes(), hashlib.sha256).digest()[:16]


def encipher_frame(frame: FrameBuffer, keys: DabKeyset, frame_index: int = 0) -> CipherFrame:
    plane = encode_plane(frame, keys.quality)
    nonce = frame_nonce(frame, keys, frame_index)
    locked = aes_coeff_layer(plane, keys.aes_key, nonce, "encrypt")
    return shuffle_blocks(locked, keys.shuffle_seed, frame_index, quality=keys.quality, nonce=nonce)


def decipher_plane(cf: CipherFrame, keys: DabKeyset) -> CoefficientPlane:
    """Undo shuffle and AES, returning the quantized coefficient plane."""
    plane = unshuffle_blocks(cf, keys.shuffle_seed)
    return aes_coeff_layer(plane, keys.aes_key, cf.nonce, "decrypt")


def decipher_frame(cf: CipherFrame, keys: DabKeyset) -> FrameBuffer:
    if cf.plane.original_width < 1 or cf.plane.original_height < 1:
        raise GeometryError("cannot crop to an empty frame")
    return decode_plane(decipher_plane(cf, keys), cf.quality)


# -- display ---------------------------------------------------------------


def cipher_visualization(cf: CipherFrame) -> FrameBuffer:
    """Low byte of every stored coefficient, as an 8-bit image of the padded plane."""
    low = (cf.plane.coefficients.astype(np.int64) & 0xFF).astype(np.uint8)
    return FrameBuffer(low)


def cipher_spatial(cf: CipherFrame) -> np.ndarray:
    """What a decoder without the keys reconstructs: unclamped integer pixels.

    Dequantizes and inverse-transforms the cipher plane as stored (shuffled,
    with scrambled low-frequency corners).  Shape ``(channels, padded_h, padded_w)``.
    """
    qm = quant_matrix(cf.quality)
    spatial = from_blocks(inverse_dct(dequantize(to_blocks(cf.plane.coefficients), qm)))
    return round_half_away(spatial).astype(np.int64)


def cipher_image(cf: CipherFrame) -> FrameBuffer:
    """The keyless decode wrapped to 8 bits; the displayable cipher image."""
    return FrameBuffer((cipher_spatial(cf) & 0xFF).astype(np.uint8))
