"""Deterministic byte derivation used wherever the simulation needs "randomness".

Everything reproducible in sepris draws from a :class:`Drbg` seeded with the
run seed, so a transcript is a pure function of ``(config, seed)``.
"""

from __future__ import annotations

import hashlib
import struct


def derive(seed: bytes, label: str, n: int = 32) -> bytes:
    """Return ``n`` bytes bound to ``(seed, label)``."""
    lab = label.encode()
    h = hashlib.shake_256(struct.pack(">I", len(seed)) + seed + struct.pack(">I", len(lab)) + lab)
    return h.digest(n)


class Drbg:
    """Labelled, counter-based byte stream over SHAKE-256."""

    def __init__(self, seed: bytes | str | int):
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "big", signed=False)
        elif isinstance(seed, str):
            seed = seed.encode()
        self._seed = bytes(seed)
        self._counter = 0

    def bytes(self, n: int, label: str = "") -> bytes:
        self._counter += 1
        return derive(self._seed, f"{label}#{self._counter}", n)

    def randbelow(self, bound: int, label: str = "") -> int:
        # 128 extra bits keep the modulo bias negligible
        width = (bound.bit_length() + 7) // 8 + 16
        return int.from_bytes(self.bytes(width, label), "big") % bound

    def child(self, label: str) -> "Drbg":
        return Drbg(derive(self._seed, "child:" + label))
