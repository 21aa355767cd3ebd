"""Binary PGM (P5) and PPM (P6) images, 8 bits per sample."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from sepris.codec import FrameBuffer
from sepris.errors import FormatError

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode(data: bytes) -> FrameBuffer:
    fields, pos = [], 0
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if not m:
            raise FormatError("truncated PNM header")
        fields.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = fields
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported PNM type {magic!r}; only P5 and P6 are read")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise FormatError("non-numeric PNM header field") from None
    if not 0 < maxval < 256:
        raise FormatError("only 8-bit PNM images are supported")
    if w < 1 or h < 1:
        raise FormatError("empty image")
    pos += 1  # the single whitespace byte after maxval
    c = 1 if magic == b"P5" else 3
    body = data[pos:pos + w * h * c]
    if len(body) != w * h * c:
        raise FormatError(f"expected {w * h * c} pixel bytes, got {len(body)}")
    px = np.frombuffer(body, dtype=np.uint8).reshape(h, w, c).transpose(2, 0, 1)
    return FrameBuffer(px.copy())


def encode(frame: FrameBuffer) -> bytes:
    c, h, w = frame.pixels.shape
    if c not in (1, 3):
        raise FormatError(f"PNM holds 1 or 3 channels, not {c}")
    magic = b"P5" if c == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode() + frame.pixels.transpose(1, 2, 0).tobytes()


def read(path: Path) -> FrameBuffer:
    return decode(Path(path).read_bytes())


def write(path: Path, frame: FrameBuffer) -> None:
    Path(path).write_bytes(encode(frame))
