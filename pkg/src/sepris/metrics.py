"""Statistical security measurements for cipher images.

Randomness tests follow NIST SP 800-22 (frequency, runs) and the classical
Knuth formulations (gap, poker).  Image measurements are the usual ones for
image ciphers: encryption quality, NPCR/UACI, PSNR, Shannon entropy and
adjacent-pixel correlation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Literal

import numpy as np
from scipy.special import erfc
from scipy.stats import chi2

from sepris.codec.cipher import cipher_image, cipher_spatial, encipher_frame
from sepris.codec.frames import DabKeyset, FrameBuffer
from sepris.errors import (
    DimensionMismatch,
    EmptyInput,
    NotApplicable,
    TooFewBits,
    ZeroVariance,
)

ALPHA = 0.05


def _arr(img) -> np.ndarray:
    return np.asarray(img.pixels if isinstance(img, FrameBuffer) else img)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise EmptyInput("empty images")
    return a, b


# -- bit streams ------------------------------------------------------------


@dataclass(frozen=True)
class BitStream:
    """Ordered 0/1 values; built from bytes most-significant bit first."""

    bits: np.ndarray

    @classmethod
    def from_bytes(cls, data) -> "BitStream":
        buf = np.frombuffer(bytes(data), dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else np.asarray(data, dtype=np.uint8).ravel()
        return cls(np.unpackbits(buf))

    @classmethod
    def from_image(cls, img) -> "BitStream":
        """Channel-planar, row-major bytes of an 8-bit image."""
        return cls.from_bytes(np.ascontiguousarray(_arr(img), dtype=np.uint8).ravel())

    @classmethod
    def from_bits(cls, bits) -> "BitStream":
        b = np.asarray(bits, dtype=np.uint8).ravel()
        if b.size and b.max() > 1:
            raise ValueError("bits must be 0 or 1")
        return cls(b)

    def __len__(self) -> int:
        return int(self.bits.size)

    def to_bytes(self) -> np.ndarray:
        n = len(self) // 8 * 8
        return np.packbits(self.bits[:n])


def _bits(stream) -> np.ndarray:
    return stream.bits if isinstance(stream, BitStream) else np.asarray(stream, dtype=np.uint8).ravel()


def monobit_frequency_test(bits) -> float:
    b = _bits(bits)
    n = b.size
    if n < 100:
        raise TooFewBits(f"frequency test needs at least 100 bits, got {n}")
    s = 2 * int(np.count_nonzero(b)) - n
    return float(erfc(abs(s) / math.sqrt(2 * n)))


def runs_test(bits) -> float:
    """Total-runs test; raises :class:`NotApplicable` when the ones proportion is too far from 1/2."""
    b = _bits(bits)
    n = b.size
    if n < 100:
        raise TooFewBits(f"runs test needs at least 100 bits, got {n}")
    pi = np.count_nonzero(b) / n
    if abs(pi - 0.5) >= 2 / math.sqrt(n):
        raise NotApplicable(f"ones proportion {pi:.4f} fails the frequency prerequisite")
    v = 1 + int(np.count_nonzero(b[1:] != b[:-1]))
    num = abs(v - 2 * n * pi * (1 - pi))
    return float(erfc(num / (2 * math.sqrt(2 * n) * pi * (1 - pi))))


GAP_LOW, GAP_HIGH, GAP_BINS = 0, 128, 10


def gap_test(bits, low: int = GAP_LOW, high: int = GAP_HIGH, max_gap: int = GAP_BINS) -> tuple[float, bool]:
    """Gap test over bytes: lengths of runs between values falling in ``[low, high)``.

    Gap lengths 0..max_gap-1 get their own bin, longer gaps share an overflow
    bin; the histogram is compared to the geometric law by chi-square.
    """
    data = BitStream(_bits(bits)).to_bytes()
    if data.size < 4096:
        raise TooFewBits(f"gap test needs at least 4096 bytes, got {data.size}")
    p = (high - low) / 256
    hits = np.flatnonzero((data >= low) & (data < high))
    if hits.size < 2:
        return 0.0, False
    gaps = np.diff(hits) - 1
    observed = np.bincount(np.minimum(gaps, max_gap), minlength=max_gap + 1).astype(np.float64)
    probs = np.array([p * (1 - p) ** r for r in range(max_gap)] + [(1 - p) ** max_gap])
    expected = probs * gaps.size
    stat = float(((observed - expected) ** 2 / expected).sum())
    pval = float(chi2.sf(stat, max_gap))
    return pval, pval > ALPHA


def poker_test(bits) -> tuple[float, bool]:
    """Chi-square over the frequencies of the 16 possible 4-bit patterns."""
    b = _bits(bits)
    if b.size < 20000:
        raise TooFewBits(f"poker test needs at least 20000 bits, got {b.size}")
    k = b.size // 4
    nib = b[: 4 * k].reshape(k, 4) @ np.array([8, 4, 2, 1])
    f = np.bincount(nib, minlength=16).astype(np.float64)
    x = 16.0 / k * float((f**2).sum()) - k
    x = max(x, 0.0)
    pval = float(chi2.sf(x, 15))
    return pval, pval > ALPHA


# -- image measurements ------------------------------------------------------


def encryption_quality(plain, cipher) -> float:
    """Fraction of positions whose value changed."""
    a, b = _pair(plain, cipher)
    return float(np.count_nonzero(a.astype(np.int64) != b.astype(np.int64)) / a.size)


def npcr(c1, c2) -> float:
    a, b = _pair(c1, c2)
    return 100.0 * np.count_nonzero(a != b) / a.size


def uaci(c1, c2) -> float:
    a, b = _pair(c1, c2)
    return 100.0 * float(np.abs(a.astype(np.float64) - b.astype(np.float64)).mean()) / 255.0


def psnr(ref, test) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    a, b = _pair(ref, test)
    mse = float(((a.astype(np.float64) - b.astype(np.float64)) ** 2).mean())
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def entropy(img) -> float:
    a = _arr(img)
    if a.size == 0:
        raise EmptyInput("entropy of an empty image")
    counts = np.bincount(np.asarray(a, dtype=np.uint8).ravel(), minlength=256)
    p = counts[counts > 0] / a.size
    return float(-(p * np.log2(p)).sum()) + 0.0


Direction = Literal["horizontal", "vertical", "diagonal"]
_OFFSETS = {"horizontal": (0, 1), "vertical": (1, 0), "diagonal": (1, 1)}


def correlation(img, direction: Direction = "horizontal", sample_count: int | None = 4096, seed: int = 0) -> float:
    """Pearson coefficient between pixels and their neighbour in ``direction``.

    ``sample_count`` seeded-random pairs are drawn; ``None`` uses every pair.
    """
    a = _arr(img)
    if a.ndim == 2:
        a = a[None]
    dy, dx = _OFFSETS[direction]
    c, h, w = a.shape
    if h < 2 or w < 2:
        raise DimensionMismatch("correlation needs an image of at least 2x2")
    first = a[:, : h - dy, : w - dx]
    second = a[:, dy:, dx:]
    if sample_count is None:
        x, y = first.ravel(), second.ravel()
    else:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, first.size, sample_count)
        x, y = first.ravel()[idx], second.ravel()[idx]
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    if x.std() == 0 or y.std() == 0:
        raise ZeroVariance("a sampled pixel population is constant")
    return float(np.corrcoef(x, y)[0, 1])


# -- the full battery ----------------------------------------------------


@dataclass
class SecurityReport:
    encryption_quality: float
    frequency_p: float
    runs_p: float
    gap_p: float
    gap_pass: bool
    poker_p: float
    poker_pass: bool
    npcr_pct: float
    uaci_pct: float
    key_npcr_pct: float
    key_uaci_pct: float
    psnr_db: float
    entropy_bits: float
    corr_h: float
    corr_v: float
    corr_d: float

    def checks(self) -> dict[str, bool]:
        """Pass/fail per row against the acceptance thresholds."""
        return {
            "encryption_quality": self.encryption_quality >= 0.999,
            "frequency": self.frequency_p > ALPHA,
            "runs": self.runs_p > ALPHA,
            "gap": self.gap_pass,
            "poker": self.poker_pass,
            "pixel_npcr": self.npcr_pct > 99.0,
            "pixel_uaci": 32.3 <= self.uaci_pct <= 34.3,
            "key_npcr": self.key_npcr_pct > 99.0,
            "key_uaci": 32.5 <= self.key_uaci_pct <= 34.5,
            "psnr": self.psnr_db < 20.0,
            "entropy": self.entropy_bits >= 7.9,
            "corr_h": abs(self.corr_h) < 0.02,
            "corr_v": abs(self.corr_v) < 0.02,
            "corr_d": abs(self.corr_d) < 0.02,
        }

    @property
    def passed(self) -> bool:
        return all(self.checks().values())

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.psnr_db):
            d["psnr_db"] = "inf"
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "SecurityReport":
        d = dict(d)
        if d.get("psnr_db") == "inf":
            d["psnr_db"] = math.inf
        return cls(**{f.name: d[f.name] for f in fields(cls)})

    def table(self) -> str:
        ok = self.checks()
        mark = lambda k: "pass" if ok[k] else "FAIL"  # noqa: E731
        rows = [
            ("Encryption Quality", f"{100 * self.encryption_quality:.3f}%", "Ratio of changed pixels", mark("encryption_quality")),
            ("Frequency Test", f"{self.frequency_p:.3f}", "P_val > 0.05", mark("frequency")),
            ("Run Test", f"{self.runs_p:.3f}", "P_val > 0.05", mark("runs")),
            ("Gap Test", "Passed" if self.gap_pass else "Failed", f"p = {self.gap_p:.3f} > 0.05", mark("gap")),
            ("Poker Test", "Passed" if self.poker_pass else "Failed", f"p = {self.poker_p:.3f} > 0.05", mark("poker")),
            ("Pixel Sensitivity", "", "To be secure:", ""),
            ("  NPCR", f"{self.npcr_pct:.3f}%", "Must be > 99%", mark("pixel_npcr")),
            ("  UACI", f"{self.uaci_pct:.3f}%", "Must be ~33%", mark("pixel_uaci")),
            ("Key Sensitivity", "", "To be secure:", ""),
            ("  NPCR", f"{self.key_npcr_pct:.3f}%", "Must be > 99%", mark("key_npcr")),
            ("  UACI", f"{self.key_uaci_pct:.3f}%", "Must be ~33%", mark("key_uaci")),
            ("PSNR Test", f"{self.psnr_db:.2f}dB", "Good if less than 20 dB", mark("psnr")),
            ("Entropy Test", f"{self.entropy_bits:.3f}", "Good if closer to 8", mark("entropy")),
            ("Correlation", "", "Good if closer to 0", ""),
            ("  Horizontal", f"{self.corr_h:.4f}", "|r| < 0.02", mark("corr_h")),
            ("  Vertical", f"{self.corr_v:.4f}", "|r| < 0.02", mark("corr_v")),
            ("  Diagonal", f"{self.corr_d:.4f}", "|r| < 0.02", mark("corr_d")),
        ]
        w = [max(len(r[i]) for r in rows + [("Parameter/Test", "Result", "Remark", "")]) for i in range(4)]
        line = "+" + "+".join("-" * (n + 2) for n in w) + "+"
        out = [line, "| " + " | ".join(h.ljust(n) for h, n in zip(("Parameter/Test", "Result", "Remark", ""), w)) + " |", line.replace("-", "=")]
        out += ["| " + " | ".join(c.ljust(n) for c, n in zip(r, w)) + " |" for r in rows]
        out.append(line)
        return "\n".join(out)


# A cipher view maps (frame, keys) to (unwrapped spatial values, 8-bit image),
# both cropped to the frame's dimensions.
CipherView = Callable[[FrameBuffer, DabKeyset], tuple[np.ndarray, np.ndarray]]


def dab_cipher_view(frame: FrameBuffer, keys: DabKeyset, frame_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    cf = encipher_frame(frame, keys, frame_index)
    h, w = frame.height, frame.width
    spatial = cipher_spatial(cf)[:, :h, :w]
    image = cipher_image(cf).pixels[:, :h, :w]
    return spatial, image


def identity_cipher_view(frame: FrameBuffer, keys: DabKeyset) -> tuple[np.ndarray, np.ndarray]:
    """Stub codec that leaves the frame untouched; every check should fail."""
    return frame.pixels.astype(np.int64), frame.pixels.copy()


def flip_center_pixel(frame: FrameBuffer) -> FrameBuffer:
    px = frame.pixels.copy()
    px[0, frame.height // 2, frame.width // 2] ^= 1
    return FrameBuffer(px)


def security_report(
    plain: FrameBuffer,
    keys: DabKeyset,
    *,
    view: CipherView = dab_cipher_view,
    correlation_samples: int | None = None,
    seed: int = 0,
) -> SecurityReport:
    """Encipher ``plain`` and run the whole battery.

    Encryption quality compares the plain pixels with the unwrapped keyless
    decode; every other statistic uses the wrapped 8-bit cipher image.
    Pixel sensitivity flips the lowest bit of the centre pixel, key
    sensitivity the lowest bit of the AES key.  Correlations use every
    adjacent pair unless ``correlation_samples`` is given.
    """
    spatial, image = view(plain, keys)
    _, image_p = view(flip_center_pixel(plain), keys)
    _, image_k = view(plain, keys.with_flipped_key_bit(0))

    bits = BitStream.from_image(image)
    try:
        runs_p = runs_test(bits)
    except NotApplicable:
        runs_p = 0.0
    gap_p, gap_ok = gap_test(bits)
    poker_p, poker_ok = poker_test(bits)

    def corr(direction):
        try:
            return correlation(image, direction, correlation_samples, seed)
        except ZeroVariance:
            return 1.0

    return SecurityReport(
        encryption_quality=encryption_quality(plain.pixels, spatial),
        frequency_p=monobit_frequency_test(bits),
        runs_p=runs_p,
        gap_p=gap_p,
        gap_pass=gap_ok,
        poker_p=poker_p,
        poker_pass=poker_ok,
        npcr_pct=npcr(image, image_p),
        uaci_pct=uaci(image, image_p),
        key_npcr_pct=npcr(image, image_k),
        key_uaci_pct=uaci(image, image_k),
        psnr_db=psnr(plain.pixels, image),
        entropy_bits=entropy(image),
        corr_h=corr("horizontal"),
        corr_v=corr("vertical"),
        corr_d=corr("diagonal"),
    )
