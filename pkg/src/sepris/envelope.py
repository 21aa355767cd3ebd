"""Sign-then-encrypt envelopes ("double lock-box") for every protocol message.

The inner lock is an Ed25519 signature by the sender; the outer lock is an
ephemeral X25519 key agreement feeding HKDF-SHA256 and ChaCha20-Poly1305.
The sender's label travels inside the ciphertext, so the wire only shows a
fingerprint of the recipient.

One 32-byte secret per identity yields both the signing and the
key-agreement key, so a public key is the pair of the two public points.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from sepris.errors import (
    AuthTagMismatch,
    EntropyError,
    FormatError,
    SignatureInvalid,
    WrongRecipient,
)

_RAW = dict(encoding=serialization.Encoding.Raw, format=serialization.PublicFormat.Raw)
_ZERO_NONCE = bytes(12)
_SIG_DOMAIN = b"sepris-envelope-sig\x00"
_KDF_INFO = b"sepris-envelope-v1"
HINT_LEN = 16
TAG_LEN = 16


def _hkdf(secret: bytes, info: bytes, salt: bytes | None = None) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=salt, info=info).derive(secret)


@dataclass(frozen=True)
class PublicKey:
    label: str
    sign: bytes  # Ed25519 public point
    kex: bytes  # X25519 public point

    def raw(self) -> bytes:
        return self.sign + self.kex

    @cached_property
    def fingerprint(self) -> bytes:
        return hashlib.sha256(b"sepris-fp" + self.raw()).digest()[:HINT_LEN]

    def verify(self, signature: bytes, payload: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(self.sign).verify(signature, _SIG_DOMAIN + payload)
            return True
        except InvalidSignature:
            return False


@dataclass(frozen=True)
class KeyPair:
    label: str
    secret: bytes

    def __post_init__(self):
        if len(self.secret) != 32:
            raise EntropyError("key secret must be 32 bytes")

    @cached_property
    def _sign_key(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(_hkdf(self.secret, b"sepris-sign"))

    @cached_property
    def _kex_key(self) -> X25519PrivateKey:
        return X25519PrivateKey.from_private_bytes(_hkdf(self.secret, b"sepris-kex"))

    @cached_property
    def public(self) -> PublicKey:
        return PublicKey(
            self.label,
            self._sign_key.public_key().public_bytes(**_RAW),
            self._kex_key.public_key().public_bytes(**_RAW),
        )

    def sign(self, payload: bytes) -> bytes:
        return self._sign_key.sign(_SIG_DOMAIN + payload)


def generate_keypair(label: str, seed: bytes | None = None) -> KeyPair:
    """Derive a key pair from ``seed`` (fresh OS entropy when ``None``)."""
    if not label:
        raise ValueError("label must be nonempty")
    if seed is None:
        seed = os.urandom(32)
    if not seed:
        raise EntropyError("empty seed")
    lab = label.encode()
    return KeyPair(label, hashlib.sha256(b"sepris-keypair" + struct.pack(">I", len(lab)) + lab + seed).digest())


@dataclass(frozen=True)
class Envelope:
    recipient_hint: bytes
    encapsulation: bytes
    ciphertext: bytes
    auth_tag: bytes

    def to_bytes(self) -> bytes:
        return b"".join(
            struct.pack("<I", len(f)) + f
            for f in (self.recipient_hint, self.encapsulation, self.ciphertext, self.auth_tag)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        parts, off = [], 0
        for _ in range(4):
            if off + 4 > len(data):
                raise FormatError("truncated envelope")
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            if off + n > len(data):
                raise FormatError("truncated envelope field")
            parts.append(bytes(data[off:off + n]))
            off += n
        if off != len(data):
            raise FormatError("trailing bytes after envelope")
        return cls(*parts)


def _inner(label: str, signature: bytes, payload: bytes) -> bytes:
    lab = label.encode()
    return struct.pack("<H", len(lab)) + lab + signature + payload


def _encrypt(inner: bytes, receiver_pub: PublicKey, ephemeral: bytes) -> Envelope:
    eph = X25519PrivateKey.from_private_bytes(ephemeral)
    encap = eph.public_key().public_bytes(**_RAW)
    shared = eph.exchange(X25519PublicKey.from_public_bytes(receiver_pub.kex))
    key = _hkdf(shared, _KDF_INFO, salt=encap + receiver_pub.kex)
    hint = receiver_pub.fingerprint
    sealed = ChaCha20Poly1305(key).encrypt(_ZERO_NONCE, inner, hint + encap)
    return Envelope(hint, encap, sealed[:-TAG_LEN], sealed[-TAG_LEN:])


def seal(sender: KeyPair, receiver_pub: PublicKey, payload: bytes, *, ephemeral: bytes | None = None) -> Envelope:
    """Sign ``payload`` as ``sender`` and encrypt it to ``receiver_pub``.

    ``ephemeral`` (32 bytes) pins the key-agreement secret for reproducible
    runs; leave it ``None`` in production.
    """
    if not payload:
        raise ValueError("payload must be nonempty")
    eph = ephemeral if ephemeral is not None else os.urandom(32)
    return _encrypt(_inner(sender.label, sender.sign(payload), payload), receiver_pub, eph)


def _decrypt(receiver: KeyPair, env: Envelope) -> tuple[str, bytes, bytes]:
    if env.recipient_hint != receiver.public.fingerprint:
        raise WrongRecipient("envelope is addressed to another key")
    if len(env.encapsulation) != 32 or len(env.auth_tag) != TAG_LEN:
        raise AuthTagMismatch("malformed encapsulation or tag")
    try:
        shared = receiver._kex_key.exchange(X25519PublicKey.from_public_bytes(env.encapsulation))
    except ValueError:  # low-order point
        raise AuthTagMismatch("invalid encapsulation") from None
    key = _hkdf(shared, _KDF_INFO, salt=env.encapsulation + receiver.public.kex)
    try:
        inner = ChaCha20Poly1305(key).decrypt(
            _ZERO_NONCE, env.ciphertext + env.auth_tag, env.recipient_hint + env.encapsulation
        )
    except InvalidTag:
        raise AuthTagMismatch("envelope failed authentication") from None
    (n,) = struct.unpack_from("<H", inner)
    label = inner[2:2 + n].decode()
    signature = inner[2 + n:2 + n + 64]
    return label, signature, inner[2 + n + 64:]


def open_unverified(receiver: KeyPair, env: Envelope) -> tuple[str, bytes, bytes]:
    """Decrypt without checking the signature: ``(claimed label, signature, payload)``.

    For handlers that must read a claim before they know which key to check
    it against; callers verify with :meth:`PublicKey.verify`.
    """
    return _decrypt(receiver, env)


def open(receiver: KeyPair, expected_sender_pub: PublicKey, env: Envelope) -> bytes:  # noqa: A001
    """Decrypt ``env`` and check it was signed by ``expected_sender_pub``."""
    label, signature, payload = _decrypt(receiver, env)
    if label != expected_sender_pub.label or not expected_sender_pub.verify(signature, payload):
        raise SignatureInvalid(f"payload not signed by {expected_sender_pub.label!r}")
    return payload


def open_from(receiver: KeyPair, known: Mapping[str, PublicKey], env: Envelope) -> tuple[str, bytes]:
    """Open an envelope from any sender in ``known``; returns ``(sender label, payload)``."""
    label, signature, payload = _decrypt(receiver, env)
    pub = known.get(label)
    if pub is None or not pub.verify(signature, payload):
        raise SignatureInvalid(f"sender {label!r} is unknown or signature is invalid")
    return label, payload


# -- SPRK key files ------------------------------------------------------------

KEY_MAGIC = b"SPRK"
KEY_VERSION = 1
_PRIVATE, _PUBLIC = 0, 1


def _key_header(kind: int, label: str) -> bytes:
    lab = label.encode()
    return KEY_MAGIC + struct.pack("<HBH", KEY_VERSION, kind, len(lab)) + lab


def encode_private(kp: KeyPair) -> bytes:
    return _key_header(_PRIVATE, kp.label) + kp.secret


def encode_public(pub: PublicKey) -> bytes:
    return _key_header(_PUBLIC, pub.label) + pub.raw()


def decode_key(data: bytes) -> KeyPair | PublicKey:
    if len(data) < 9 or data[:4] != KEY_MAGIC:
        raise FormatError("not an SPRK key file")
    version, kind, n = struct.unpack_from("<HBH", data, 4)
    if version != KEY_VERSION:
        raise FormatError(f"unsupported key file version {version}")
    label = data[9:9 + n].decode()
    body = data[9 + n:]
    if kind == _PRIVATE and len(body) == 32:
        return KeyPair(label, body)
    if kind == _PUBLIC and len(body) == 64:
        return PublicKey(label, body[:32], body[32:])
    raise FormatError("corrupt key file body")


def write_keypair(kp: KeyPair, directory: Path) -> tuple[Path, Path]:
    """Write ``<label>.key`` (private, mode 0600) and ``<label>.pub``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    priv, pub = directory / f"{kp.label}.key", directory / f"{kp.label}.pub"
    priv.write_bytes(encode_private(kp))
    priv.chmod(0o600)
    pub.write_bytes(encode_public(kp.public))
    return priv, pub


def read_key(path: Path) -> KeyPair | PublicKey:
    return decode_key(Path(path).read_bytes())
