"""Off-chain storage site: video segments, forwarded grants, enciphered serving.

Video is kept in plaintext at rest inside the site and enciphered on egress
with a fresh DAB keyset per grant.  Segments are addressed by opaque
references through a mapping table; only those references ever reach the
audit log.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import hmac
import json
import struct
import threading
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from sepris._drbg import Drbg
from sepris.auth import Authenticator, watermark
from sepris.codec import DabKeyset, FrameBuffer, encipher_frame
from sepris.codec import sprc
from sepris.contract import CodeRegistry, UpdatedRequest
from sepris.envelope import Envelope, KeyPair, PublicKey, open_from, seal
from sepris.errors import (
    CodeAlreadyConsumed,
    DuplicateSegment,
    FormatError,
    NoMatchingGrant,
    SegmentNotFound,
    SessionRejected,
)

GRANT_TTL = 3600  # simulated seconds
EPOCH = dt.date(1970, 1, 1)


# -- video records and the SPRS container ---------------------------------------------


@dataclass
class VideoRecord:
    camera_id: str
    date: dt.date
    start_time: dt.time
    fps: int
    frames: list[FrameBuffer]

    def __post_init__(self):
        if not self.camera_id:
            raise ValueError("camera_id must be nonempty")
        if not 0 < self.fps < 256:
            raise ValueError("fps must be in [1, 255]")
        if not self.frames:
            raise ValueError("a video record needs at least one frame")
        shape = self.frames[0].pixels.shape
        if any(f.pixels.shape != shape for f in self.frames):
            raise ValueError("all frames must share dimensions")

    @property
    def start_seconds(self) -> int:
        return self.start_time.hour * 3600 + self.start_time.minute * 60 + self.start_time.second

    @property
    def span(self) -> tuple[Fraction, Fraction]:
        """``[start, end)`` in seconds since midnight."""
        s = Fraction(self.start_seconds)
        return s, s + Fraction(len(self.frames), self.fps)


SPRS_MAGIC = b"SPRS"
SPRS_VERSION = 1
_SPRS_TAIL = struct.Struct("<IIHHBBI")


def encode_video(rec: VideoRecord) -> bytes:
    cam = rec.camera_id.encode()
    c, h, w = rec.frames[0].pixels.shape
    head = SPRS_MAGIC + struct.pack("<HH", SPRS_VERSION, len(cam)) + cam
    head += _SPRS_TAIL.pack((rec.date - EPOCH).days, rec.start_seconds, w, h, c, rec.fps, len(rec.frames))
    return head + b"".join(f.tobytes() for f in rec.frames)


def decode_video(data: bytes) -> VideoRecord:
    if data[:4] != SPRS_MAGIC:
        raise FormatError("not an SPRS video container")
    try:
        version, n = struct.unpack_from("<HH", data, 4)
        if version != SPRS_VERSION:
            raise FormatError(f"unsupported SPRS version {version}")
        cam = data[8:8 + n].decode()
        days, start, w, h, c, fps, count = _SPRS_TAIL.unpack_from(data, 8 + n)
    except (struct.error, UnicodeDecodeError) as e:
        raise FormatError(f"corrupt SPRS header: {e}") from e
    off = 8 + n + _SPRS_TAIL.size
    size = c * h * w
    if len(data) - off != size * count:
        raise FormatError(f"expected {size * count} pixel bytes, got {len(data) - off}")
    px = np.frombuffer(data, dtype=np.uint8, offset=off).reshape(count, c, h, w)
    start_t = dt.time(start // 3600, start // 60 % 60, start % 60)
    return VideoRecord(cam, EPOCH + dt.timedelta(days=days), start_t, fps, [FrameBuffer(p.copy()) for p in px])


# -- mapping table and store -------------------------------------------------------


@dataclass(frozen=True)
class MappingEntry:
    camera_id: str
    date: dt.date
    first_second: Fraction
    frame_count: int
    fps: int
    location: str  # segment file name inside the store

    @property
    def span(self) -> tuple[Fraction, Fraction]:
        return self.first_second, self.first_second + Fraction(self.frame_count, self.fps)

    def to_dict(self) -> dict:
        return {"camera_id": self.camera_id, "date": self.date.isoformat(), "first_second": str(self.first_second),
                "frame_count": self.frame_count, "fps": self.fps, "location": self.location}

    @classmethod
    def from_dict(cls, d: dict) -> "MappingEntry":
        return cls(d["camera_id"], dt.date.fromisoformat(d["date"]), Fraction(d["first_second"]),
                   int(d["frame_count"]), int(d["fps"]), d["location"])


class MappingTable:
    def __init__(self) -> None:
        self.entries: dict[str, MappingEntry] = {}

    def overlapping(self, camera_id: str, date: dt.date, span: tuple[Fraction, Fraction]) -> str | None:
        lo, hi = span
        for ref, e in self.entries.items():
            a, b = e.span
            if e.camera_id == camera_id and e.date == date and lo < b and a < hi:
                return ref
        return None

    def lookup(self, camera_id: str, date: dt.date) -> list[tuple[str, MappingEntry]]:
        hits = [(r, e) for r, e in self.entries.items() if e.camera_id == camera_id and e.date == date]
        return sorted(hits, key=lambda re_: re_[1].first_second)

    def to_json(self) -> str:
        return json.dumps({r: e.to_dict() for r, e in self.entries.items()}, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "MappingTable":
        t = cls()
        t.entries = {r: MappingEntry.from_dict(d) for r, d in json.loads(text).items()}
        return t


class VideoStore:
    """Segments in memory, optionally written through to ``directory``."""

    MAPPING_FILE = "mapping.json"

    def __init__(self, secret: bytes, directory: Path | None = None):
        self._secret = secret
        self.directory = Path(directory) if directory is not None else None
        self.mapping = MappingTable()
        self._records: dict[str, VideoRecord] = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            mp = self.directory / self.MAPPING_FILE
            if mp.exists():
                self.mapping = MappingTable.from_json(mp.read_text())

    def _new_ref(self) -> str:
        n = len(self.mapping.entries)
        return "ref-" + hmac.new(self._secret, b"segment-ref" + struct.pack("<Q", n), hashlib.sha256).hexdigest()[:24]

    def ingest(self, rec: VideoRecord) -> str:
        clash = self.mapping.overlapping(rec.camera_id, rec.date, rec.span)
        if clash is not None:
            raise DuplicateSegment(f"{rec.camera_id} {rec.date} overlaps an existing segment")
        ref = self._new_ref()
        entry = MappingEntry(rec.camera_id, rec.date, rec.span[0], len(rec.frames), rec.fps,
                             f"segment-{len(self.mapping.entries):06d}.sprs")
        self.mapping.entries[ref] = entry
        self._records[ref] = rec
        if self.directory is not None:
            (self.directory / entry.location).write_bytes(encode_video(rec))
            (self.directory / self.MAPPING_FILE).write_text(self.mapping.to_json())
        return ref

    def record(self, ref: str) -> VideoRecord:
        if ref not in self._records:
            if self.directory is None or ref not in self.mapping.entries:
                raise SegmentNotFound(ref)
            self._records[ref] = decode_video((self.directory / self.mapping.entries[ref].location).read_bytes())
        return self._records[ref]

    def query(self, camera_id: str, date: dt.date, start: Fraction, end: Fraction) -> list[tuple[str, list[FrameBuffer]]]:
        """Frames whose timestamp falls in ``[start, end)`` seconds, grouped by segment reference."""
        out = []
        for ref, e in self.mapping.lookup(camera_id, date):
            a, _ = e.span
            first = max(0, _ceil((start - a) * e.fps))
            last = min(e.frame_count, _ceil((end - a) * e.fps))
            if first < last:
                out.append((ref, self.record(ref).frames[first:last]))
        return out


def _ceil(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


# -- grants ---------------------------------------------------------------------------


class GrantState(str, Enum):
    PENDING = "Pending"
    CONSUMED = "Consumed"
    EXPIRED = "Expired"


@dataclass
class Grant:
    updated_request: UpdatedRequest
    received_at: int
    session_keys: DabKeyset
    state: GrantState = GrantState.PENDING

    def _move(self, to: GrantState) -> None:
        if self.state is not GrantState.PENDING:
            raise ValueError(f"grant is {self.state.value}; only Pending grants change state")
        self.state = to


class AuditAction(str, Enum):
    VIEWED = "Viewed"
    GRANTED = "Granted"
    DENIED = "Denied"


@dataclass(frozen=True)
class AuditRecord:
    requestor_uid: str
    device_info: str
    accessed_reference: str
    viewer_watermark: str
    action: AuditAction
    timestamp: int

    def to_dict(self) -> dict:
        return {"requestor_uid": self.requestor_uid, "device_info": self.device_info,
                "accessed_reference": self.accessed_reference, "viewer_watermark": self.viewer_watermark,
                "action": AuditAction(self.action).value, "timestamp": self.timestamp}

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_json(cls, data: bytes | str) -> "AuditRecord":
        d = json.loads(data)
        return cls(d["requestor_uid"], d["device_info"], d["accessed_reference"], d["viewer_watermark"],
                   AuditAction(d["action"]), int(d["timestamp"]))


@dataclass
class Served:
    stream: bytes
    keys_envelope: Envelope
    audit: AuditRecord
    frame_count: int


# -- the site -------------------------------------------------------------------------


@dataclass
class StorageSite:
    name: str
    address: str
    keypair: KeyPair
    sac_keys: Mapping[str, PublicKey]
    auth: Authenticator
    store: VideoStore
    rng: Drbg
    codes: CodeRegistry = field(default_factory=CodeRegistry)
    grants: dict[str, Grant] = field(default_factory=dict)
    ttl: int = GRANT_TTL
    quality: int = 50
    device_info: str = "sepris-storage"

    def __post_init__(self):
        self._lock = threading.Lock()

    @property
    def public(self) -> PublicKey:
        return self.keypair.public

    def seal_to(self, pub: PublicKey, payload: bytes) -> Envelope:
        return seal(self.keypair, pub, payload, ephemeral=self.rng.bytes(32, "ephemeral"))

    def ingest_video(self, rec: VideoRecord) -> str:
        return self.store.ingest(rec)

    def receive_forwarded_request(self, env: Envelope, now: int) -> Grant:
        """Open a forwarded UpdatedRequest from a SAC node and hold it as a Pending grant."""
        _, payload = open_from(self.keypair, self.sac_keys, env)
        req = UpdatedRequest.from_dict(json.loads(payload))
        with self._lock:
            if req.access_code in self.grants:
                return self.grants[req.access_code]
            keys = DabKeyset.generate(self.quality, rng=self.rng.child(f"grant:{req.access_code}"))
            grant = Grant(req, now, keys)
            self.grants[req.access_code] = grant
            self.codes.register(req.access_code)
            return grant

    def authenticate(self, uid_claim: str, credential_digest: bytes, now: int) -> bytes:
        return self.auth.authenticate(uid_claim, credential_digest, now)

    def _frames_for(self, req: UpdatedRequest) -> tuple[list[str], list[FrameBuffer]]:
        start = Fraction(req.range.start.hour * 3600 + req.range.start.minute * 60)
        end = Fraction(req.range.end.hour * 3600 + req.range.end.minute * 60)
        refs, frames = [], []
        for cam in req.camera_ids:
            for ref, fs in self.store.query(cam, req.date, start, end):
                refs.append(ref)
                frames.extend(fs)
        if not frames:
            raise SegmentNotFound(f"no stored frames for the requested cameras on {req.date}")
        return refs, frames

    def serve_request(self, token: bytes, presented: UpdatedRequest, now: int) -> Served:
        """Match ``presented`` against its grant, then stream DAB-enciphered frames.

        The code is consumed only after the frames are found, so a request for
        footage the site does not hold leaves the grant usable.
        """
        uid = self.auth.check(token)
        if uid != presented.uid:
            raise SessionRejected("session belongs to a different user")
        with self._lock:
            grant = self.grants.get(presented.access_code)
            if grant is None or grant.state is GrantState.EXPIRED:
                raise NoMatchingGrant("no live grant for this access code")
            if grant.state is GrantState.CONSUMED:
                raise CodeAlreadyConsumed(presented.access_code)
            if presented != grant.updated_request:
                raise NoMatchingGrant("presented request differs from the forwarded one")
            refs, frames = self._frames_for(presented)
            if not self.codes.match(presented, grant.updated_request):
                raise NoMatchingGrant("access code is not live")
            grant._move(GrantState.CONSUMED)
        keys = grant.session_keys
        stream = sprc.pack_stream(encipher_frame(f, keys, i) for i, f in enumerate(frames))
        user = self.auth.users[uid]
        keys_env = self.seal_to(user.public, keys.to_json().encode())
        audit = AuditRecord(uid, self.device_info, ",".join(refs), watermark(user.credential_digest),
                            AuditAction.GRANTED, now)
        return Served(stream, keys_env, audit, len(frames))

    def expire_grants(self, now: int) -> int:
        n = 0
        with self._lock:
            for g in self.grants.values():
                if g.state is GrantState.PENDING and now - g.received_at > self.ttl:
                    g._move(GrantState.EXPIRED)
                    n += 1
        return n


def ingest_video(site: StorageSite, rec: VideoRecord) -> str:
    return site.ingest_video(rec)


def receive_forwarded_request(site: StorageSite, env: Envelope, now: int = 0) -> Grant:
    return site.receive_forwarded_request(env, now)


def serve_request(site: StorageSite, token: bytes, presented: UpdatedRequest, now: int = 0) -> Served:
    return site.serve_request(token, presented, now)


def expire_grants(site: StorageSite, now: int) -> int:
    return site.expire_grants(now)
