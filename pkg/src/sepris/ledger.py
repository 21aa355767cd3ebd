"""Permissioned proof-of-work ledger with encrypted block bodies.

Block bodies are AES-256-GCM ciphertext; the header's body root is a Merkle
root over that ciphertext, so any node can check integrity without holding
the body keys.  Difficulty is a count of leading zero bits in the SHA-256
header hash.
"""

from __future__ import annotations

import base64
import hashlib
import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from sepris.envelope import KeyPair, PublicKey
from sepris.errors import (
    AuthTagMismatch,
    FormatError,
    InvalidTransaction,
    LedgerError,
    UnknownBodyKey,
)

HASH_NAME = "sha256"
BLOCK_VERSION = 1
CHAIN_FORMAT_VERSION = 1
MAX_DIFFICULTY = 32
NONCE_SPACE = 1 << 32
CHUNK = 64
ZERO_HASH = bytes(32)

_HEADER = struct.Struct("<H32sQI32s32s")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def target_for(difficulty_bits: int) -> bytes:
    """The largest header hash that has ``difficulty_bits`` leading zero bits."""
    if not 0 <= difficulty_bits <= MAX_DIFFICULTY:
        raise ValueError(f"difficulty must be in [0, {MAX_DIFFICULTY}]")
    return (((1 << 256) - 1) >> difficulty_bits).to_bytes(32, "big")


def merkle_root(chunks: Iterable[bytes]) -> bytes:
    """Binary Merkle root; leaves are ``H(0x00||chunk)``, nodes ``H(0x01||left||right)``.

    An odd node at any level is paired with itself, including a lone leaf, so
    the root is always an internal node.  The empty list hashes to the leaf
    hash of the empty string.
    """
    level = [sha256(b"\x00" + c) for c in chunks]
    if not level:
        return sha256(b"\x00")
    while True:
        if len(level) % 2:
            level.append(level[-1])
        level = [sha256(b"\x01" + level[i] + level[i + 1]) for i in range(0, len(level), 2)]
        if len(level) == 1:
            return level[0]


@dataclass(frozen=True)
class BlockHeader:
    version: int
    prev_hash: bytes
    timestamp: int
    nonce: int
    body_root_hash: bytes
    target_hash: bytes

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.version, self.prev_hash, self.timestamp, self.nonce, self.body_root_hash, self.target_hash)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BlockHeader":
        return cls(*_HEADER.unpack(data))

    def hash(self) -> bytes:
        return sha256(self.to_bytes())


class TxKind(str, Enum):
    REQUEST = "RequestRecord"
    AUDIT = "AuditRecord"
    REGISTRATION = "UserRegistration"


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    payload: bytes
    submitter_uid: str
    signature: bytes = b""

    def signing_bytes(self) -> bytes:
        sub = self.submitter_uid.encode()
        kind = TxKind(self.kind).value.encode()
        return b"sepris-tx\x00" + struct.pack("<H", len(kind)) + kind + struct.pack("<H", len(sub)) + sub + self.payload

    def signed(self, key: KeyPair) -> "Transaction":
        return Transaction(TxKind(self.kind), self.payload, self.submitter_uid, key.sign(self.signing_bytes()))

    def verify(self, registry: Mapping[str, PublicKey]) -> bool:
        pub = registry.get(self.submitter_uid)
        return pub is not None and pub.verify(self.signature, self.signing_bytes())

    def to_dict(self) -> dict:
        return {
            "kind": TxKind(self.kind).value,
            "payload": base64.b64encode(self.payload).decode(),
            "submitter_uid": self.submitter_uid,
            "signature": base64.b64encode(self.signature).decode(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transaction":
        return cls(TxKind(d["kind"]), base64.b64decode(d["payload"]), d["submitter_uid"], base64.b64decode(d["signature"]))


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    body_ciphertext: bytes
    body_key_id: str

    def hash(self) -> bytes:
        return self.header.hash()

    def leaves(self) -> list[bytes]:
        # the key id is committed too, so relabelling a body is detected
        ct = self.body_ciphertext
        return [b"key:" + self.body_key_id.encode()] + [ct[i:i + CHUNK] for i in range(0, len(ct), CHUNK)]

    def to_bytes(self) -> bytes:
        kid = self.body_key_id.encode()
        return self.header.to_bytes() + struct.pack("<H", len(kid)) + kid + self.body_ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        n = _HEADER.size
        (klen,) = struct.unpack_from("<H", data, n)
        kid = data[n + 2:n + 2 + klen]
        try:
            key_id = kid.decode()
        except UnicodeDecodeError:
            key_id = kid.decode("latin-1")
        return cls(BlockHeader.from_bytes(data[:n]), data[n + 2 + klen:], key_id)


@dataclass
class Chain:
    blocks: list[Block] = field(default_factory=list)
    difficulty_bits: int = 0
    hash_name: str = HASH_NAME

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    def __len__(self) -> int:
        return len(self.blocks)

    def append(self, block: Block) -> None:
        v = validate_block(self.tip, block, self.difficulty_bits)
        if not v:
            raise LedgerError(f"refusing to append invalid block: {v.reason}")
        self.blocks.append(block)

    # -- chain file ------------------------------------------------------

    def dumps(self) -> str:
        head = {"format": "sepris-chain", "version": CHAIN_FORMAT_VERSION, "hash": self.hash_name,
                "difficulty_bits": self.difficulty_bits}
        lines = [json.dumps(head, sort_keys=True)]
        for b in self.blocks:
            h = b.header
            lines.append(json.dumps({
                "version": h.version.to_bytes(2, "big").hex(),
                "prev_hash": h.prev_hash.hex(),
                "timestamp": h.timestamp.to_bytes(8, "big").hex(),
                "nonce": h.nonce.to_bytes(4, "big").hex(),
                "body_root_hash": h.body_root_hash.hex(),
                "target_hash": h.target_hash.hex(),
                "body_key_id": b.body_key_id,
                "body": base64.b64encode(b.body_ciphertext).decode(),
            }, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Chain":
        try:
            lines = [ln for ln in text.splitlines() if ln.strip()]
            head = json.loads(lines[0])
            if head.get("format") != "sepris-chain" or head.get("version") != CHAIN_FORMAT_VERSION:
                raise FormatError("not a sepris chain file")
            if head.get("hash") != HASH_NAME:
                raise FormatError(f"unsupported hash {head.get('hash')!r}")
            blocks = []
            for ln in lines[1:]:
                d = json.loads(ln)
                hdr = BlockHeader(
                    int(d["version"], 16), bytes.fromhex(d["prev_hash"]), int(d["timestamp"], 16),
                    int(d["nonce"], 16), bytes.fromhex(d["body_root_hash"]), bytes.fromhex(d["target_hash"]),
                )
                blocks.append(Block(hdr, base64.b64decode(d["body"]), d["body_key_id"]))
            return cls(blocks, int(head["difficulty_bits"]), head["hash"])
        except (KeyError, ValueError, IndexError, TypeError, struct.error) as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(f"corrupt chain file: {e}") from e

    def save(self, path: Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: Path) -> "Chain":
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True)
class Validity:
    ok: bool
    reason: str | None = None
    index: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def key_id_for(body_key: bytes) -> str:
    return "k" + sha256(b"sepris-body-key-id" + body_key)[:8].hex()


def _body_nonce(prev_hash: bytes, height: int) -> bytes:
    return sha256(b"sepris-body-nonce" + prev_hash + struct.pack("<Q", height))[:12]


def _seal_body(txs: list[Transaction], body_key: bytes, key_id: str, prev_hash: bytes, height: int) -> bytes:
    if not txs:
        return b""
    body = json.dumps([t.to_dict() for t in txs], sort_keys=True, separators=(",", ":")).encode()
    return AESGCM(body_key).encrypt(_body_nonce(prev_hash, height), body, key_id.encode())


def _pow(prefix: bytes, suffix: bytes, target: int) -> int | None:
    """Lowest nonce whose header hash is within ``target``, or ``None`` if the space is exhausted."""
    base = hashlib.sha256(prefix)
    pack = struct.Struct("<I").pack
    for nonce in range(NONCE_SPACE):
        h = base.copy()
        h.update(pack(nonce) + suffix)
        if int.from_bytes(h.digest(), "big") <= target:
            return nonce
    return None


def _mine(prev_hash: bytes, timestamp: int, ciphertext: bytes, key_id: str, difficulty_bits: int) -> Block:
    target = target_for(difficulty_bits)
    probe = Block(BlockHeader(BLOCK_VERSION, prev_hash, 0, 0, ZERO_HASH, target), ciphertext, key_id)
    root = merkle_root(probe.leaves())
    tgt = int.from_bytes(target, "big")
    while True:
        prefix = struct.pack("<H32sQ", BLOCK_VERSION, prev_hash, timestamp)
        nonce = _pow(prefix, root + target, tgt)
        if nonce is not None:
            return Block(BlockHeader(BLOCK_VERSION, prev_hash, timestamp, nonce, root, target), ciphertext, key_id)
        timestamp += 1


def genesis(difficulty_bits: int = 0, clock: int = 0) -> Chain:
    """One-block chain: zero previous hash, empty body, mined at ``difficulty_bits``."""
    block = _mine(ZERO_HASH, clock, b"", "", difficulty_bits)
    return Chain([block], difficulty_bits)


def mine_block(
    chain: Chain,
    txs: list[Transaction],
    body_key: bytes,
    clock: int,
    *,
    registry: Mapping[str, PublicKey] | None = None,
    key_id: str | None = None,
) -> Block:
    """Encrypt ``txs`` under ``body_key`` and search the nonce space from 0.

    When ``registry`` is given every transaction signature is checked
    against it first.  The block is returned, not appended.
    """
    if registry is not None:
        for t in txs:
            if not t.verify(registry):
                raise InvalidTransaction(f"{TxKind(t.kind).value} from {t.submitter_uid!r} has a bad signature")
    if len(body_key) != 32:
        raise ValueError("body key must be 32 bytes")
    key_id = key_id or key_id_for(body_key)
    prev = chain.tip
    ct = _seal_body(list(txs), body_key, key_id, prev.hash(), len(chain.blocks))
    return _mine(prev.hash(), max(clock, prev.header.timestamp), ct, key_id, chain.difficulty_bits)


def _meets(header: BlockHeader, difficulty_bits: int) -> bool:
    return int.from_bytes(header.hash(), "big") <= int.from_bytes(target_for(difficulty_bits), "big")


def _check_shape(block: Block, difficulty_bits: int) -> str | None:
    h = block.header
    if h.version != BLOCK_VERSION:
        return "VersionInvalid"
    if h.target_hash != target_for(difficulty_bits):
        return "TargetMismatch"
    if not _meets(h, difficulty_bits):
        return "PowInvalid"
    if merkle_root(block.leaves()) != h.body_root_hash:
        return "MerkleMismatch"
    return None


def validate_block(prev: Block, candidate: Block, difficulty_bits: int) -> Validity:
    """Check link, proof of work, body root and timestamp order; reports the first failure."""
    if candidate.header.prev_hash != prev.hash():
        return Validity(False, "PrevLinkMismatch")
    reason = _check_shape(candidate, difficulty_bits)
    if reason:
        return Validity(False, reason)
    if candidate.header.timestamp < prev.header.timestamp:
        return Validity(False, "TimestampRegression")
    return Validity(True)


def validate_chain(chain: Chain) -> Validity:
    if not chain.blocks:
        return Validity(False, "EmptyChain", 0)
    g = chain.blocks[0]
    if g.header.prev_hash != ZERO_HASH:
        return Validity(False, "GenesisPrevNotZero", 0)
    if g.body_ciphertext:
        return Validity(False, "GenesisBodyNotEmpty", 0)
    reason = _check_shape(g, chain.difficulty_bits)
    if reason:
        return Validity(False, reason, 0)
    for i in range(1, len(chain.blocks)):
        v = validate_block(chain.blocks[i - 1], chain.blocks[i], chain.difficulty_bits)
        if not v:
            return Validity(False, v.reason, i)
    return Validity(True)


def decrypt_body(block: Block, keystore: Mapping[str, bytes], prev_hash: bytes | None = None,
                 height: int | None = None) -> list[Transaction]:
    """Authenticated decryption of a block body.

    The GCM nonce is bound to the block's position, which the header already
    records as ``prev_hash``; ``height`` must be supplied by the caller (it is
    the block's index in its chain).
    """
    if not block.body_ciphertext:
        return []
    if block.body_key_id not in keystore:
        raise UnknownBodyKey(block.body_key_id)
    if height is None:
        raise ValueError("height is required to decrypt a body")
    nonce = _body_nonce(prev_hash if prev_hash is not None else block.header.prev_hash, height)
    try:
        body = AESGCM(keystore[block.body_key_id]).decrypt(nonce, block.body_ciphertext, block.body_key_id.encode())
    except InvalidTag:
        raise AuthTagMismatch("block body failed authentication") from None
    return [Transaction.from_dict(d) for d in json.loads(body)]


def chain_transactions(chain: Chain, keystore: Mapping[str, bytes]) -> list[tuple[int, Transaction]]:
    """All decryptable transactions as ``(height, tx)`` pairs, in chain order."""
    out = []
    for i, b in enumerate(chain.blocks):
        for t in decrypt_body(b, keystore, height=i):
            out.append((i, t))
    return out
