"""``SPRC`` cipher-frame records.

Layout, all integers little-endian::

    "SPRC" | u16 version | u16 original w | u16 original h | u16 padded w |
    u16 padded h | u8 channels | u8 quality | u64 frame index |
    32-byte permutation digest | 16-byte AES nonce | int16 coefficients

Coefficients are channel-planar, row-major.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from sepris.codec.frames import CipherFrame, CoefficientPlane
from sepris.errors import FormatError

MAGIC = b"SPRC"
VERSION = 1
_HEADER = struct.Struct("<4sHHHHHBBQ32s16s")


def encode(cf: CipherFrame) -> bytes:
    p = cf.plane
    head = _HEADER.pack(
        MAGIC, VERSION, p.original_width, p.original_height, p.padded_width, p.padded_height,
        p.channels, cf.quality, cf.frame_index, cf.permutation_digest, cf.nonce,
    )
    return head + p.coefficients.astype("<i2").tobytes()


def decode(data: bytes) -> CipherFrame:
    if len(data) < _HEADER.size:
        raise FormatError("truncated SPRC header")
    magic, version, ow, oh, pw, ph, ch, quality, idx, digest, nonce = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported SPRC version {version}")
    body = data[_HEADER.size:]
    if len(body) != 2 * ch * pw * ph:
        raise FormatError(f"expected {2 * ch * pw * ph} coefficient bytes, got {len(body)}")
    coeffs = np.frombuffer(body, dtype="<i2").reshape(ch, ph, pw).astype(np.int16)
    return CipherFrame(CoefficientPlane(coeffs, ow, oh), quality, idx, digest, nonce)


def write_stream(out: BinaryIO, frames: Iterable[CipherFrame]) -> int:
    """Write u32-length-prefixed SPRC records; returns the record count."""
    n = 0
    for cf in frames:
        rec = encode(cf)
        out.write(struct.pack("<I", len(rec)))
        out.write(rec)
        n += 1
    return n


def pack_stream(frames: Iterable[CipherFrame]) -> bytes:
    return b"".join(struct.pack("<I", len(r)) + r for r in map(encode, frames))


def iter_stream(data: bytes) -> Iterator[CipherFrame]:
    off = 0
    while off < len(data):
        if off + 4 > len(data):
            raise FormatError("truncated record length")
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        if off + n > len(data):
            raise FormatError("truncated SPRC record")
        yield decode(data[off:off + n])
        off += n
