"""Smart-contract logic: identities, ACL evaluation, single-use access codes.

Everything here is a pure function of its inputs except the two registries,
which hold issued UIDs and issued/consumed access codes.  The code registry
can persist itself so that consumption survives a restart.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import re
import threading
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Iterable

from sepris._drbg import derive
from sepris.errors import CodeAlreadyConsumed, FormatError, RegistryCollision

ROLES = ("court", "police", "law_enforcer", "soc_operator")
REQUEST_TYPES = ("whole_context", "activities")
UID_DIGITS = 39
CODE_DIGITS = 18
MAX_ATTEMPTS = 8


def _as_seed(entropy: bytes | str | int) -> bytes:
    if isinstance(entropy, int):
        return entropy.to_bytes(16, "big")
    if isinstance(entropy, str):
        return entropy.encode()
    return bytes(entropy)


def _digits(seed: bytes, label: str, n: int) -> str:
    # 256 bits reduced mod 10^n; the bias is below 2^-120 for n <= 39
    return str(int.from_bytes(derive(seed, label, 32), "big") % 10**n).zfill(n)


# -- identities ---------------------------------------------------------------


def issue_uid(role: str, entropy: bytes | str | int, attempt: int = 0) -> str:
    """``role`` followed by 39 decimal digits derived from ``entropy``."""
    if not role:
        raise ValueError("role must be nonempty")
    return role + _digits(_as_seed(entropy), f"uid:{role}:{attempt}", UID_DIGITS)


def role_of(uid: str) -> str:
    return uid[:-UID_DIGITS]


class UidRegistry:
    def __init__(self) -> None:
        self._issued: set[str] = set()
        self._lock = threading.Lock()

    def issue(self, role: str, entropy: bytes | str | int) -> str:
        with self._lock:
            for attempt in range(MAX_ATTEMPTS):
                uid = issue_uid(role, entropy, attempt)
                if uid not in self._issued:
                    self._issued.add(uid)
                    return uid
        raise RegistryCollision(f"no fresh UID for role {role!r} after {MAX_ATTEMPTS} attempts")

    def __contains__(self, uid: str) -> bool:
        return uid in self._issued

    def __len__(self) -> int:
        return len(self._issued)


# -- requests -----------------------------------------------------------------


def _parse_hhmm(s: str) -> dt.time:
    if not re.fullmatch(r"\d{2}:\d{2}", s):
        raise FormatError(f"time {s!r} is not HH:MM")
    return dt.time.fromisoformat(s)


@dataclass(frozen=True)
class TimeRange:
    """Half-open ``[start, end)`` time-of-day interval."""

    start: dt.time
    end: dt.time

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("range start must precede end")

    @property
    def minutes(self) -> int:
        return (self.end.hour * 60 + self.end.minute) - (self.start.hour * 60 + self.start.minute)

    def to_dict(self) -> dict:
        return {"start": self.start.strftime("%H:%M"), "end": self.end.strftime("%H:%M")}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeRange":
        return cls(_parse_hhmm(d["start"]), _parse_hhmm(d["end"]))


@dataclass(frozen=True)
class AccessRequest:
    uid: str
    camera_ids: tuple[str, ...]
    date: dt.date
    range: TimeRange
    type: str
    storage_name: str
    storage_address: str

    def __post_init__(self):
        object.__setattr__(self, "camera_ids", tuple(self.camera_ids))
        if not self.camera_ids:
            raise ValueError("camera_ids must be nonempty")
        if self.type not in REQUEST_TYPES:
            raise ValueError(f"type must be one of {REQUEST_TYPES}")

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "camera_ids": list(self.camera_ids),
            "date": self.date.isoformat(),
            "range": self.range.to_dict(),
            "type": self.type,
            "storage_name": self.storage_name,
            "storage_address": self.storage_address,
        }

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def _base_kwargs(cls, d: dict) -> dict:
        return dict(
            uid=str(d["uid"]),
            camera_ids=tuple(str(c) for c in d["camera_ids"]),
            date=dt.date.fromisoformat(d["date"]),
            range=TimeRange.from_dict(d["range"]),
            type=d["type"],
            storage_name=str(d["storage_name"]),
            storage_address=str(d["storage_address"]),
        )

    @classmethod
    def from_dict(cls, d: dict) -> "AccessRequest":
        try:
            return cls(**cls._base_kwargs(d))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad request: {e}") from e

    @classmethod
    def from_json(cls, data: bytes | str) -> "AccessRequest":
        try:
            return cls.from_dict(json.loads(data))
        except json.JSONDecodeError as e:
            raise FormatError(f"bad request JSON: {e}") from e

    def with_code(self, access_code: str) -> "UpdatedRequest":
        return UpdatedRequest(**{f.name: getattr(self, f.name) for f in fields(AccessRequest)},
                              access_code=access_code)


def code_prefix(uid: str, storage_name: str) -> str:
    return f"{role_of(uid)}To{storage_name}"


@dataclass(frozen=True)
class UpdatedRequest(AccessRequest):
    access_code: str = ""

    def __post_init__(self):
        super().__post_init__()
        prefix = code_prefix(self.uid, self.storage_name)
        if not re.fullmatch(re.escape(prefix) + r"[0-9]{%d}" % CODE_DIGITS, self.access_code):
            raise ValueError(f"access code does not match {prefix}<{CODE_DIGITS} digits>")

    def base(self) -> AccessRequest:
        return AccessRequest(**{f.name: getattr(self, f.name) for f in fields(AccessRequest)})

    def to_dict(self) -> dict:
        return {**super().to_dict(), "access_code": self.access_code}

    @classmethod
    def from_dict(cls, d: dict) -> "UpdatedRequest":
        try:
            return cls(**cls._base_kwargs(d), access_code=str(d["access_code"]))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad updated request: {e}") from e


# -- ACL ----------------------------------------------------------------------


class Reason(str, Enum):
    APPROVED = "Approved"
    UNKNOWN_USER = "UnknownUser"
    CAMERA_DENIED = "CameraDenied"
    DATE_DENIED = "DateDenied"
    RANGE_EXCEEDED = "RangeExceeded"
    TYPE_DENIED = "TypeDenied"
    SITE_DENIED = "SiteDenied"


@dataclass(frozen=True)
class Decision:
    approved: bool
    reason: Reason

    def __post_init__(self):
        if self.approved != (self.reason is Reason.APPROVED):
            raise ValueError("approved must hold exactly when reason is Approved")

    @classmethod
    def deny(cls, reason: Reason) -> "Decision":
        return cls(False, reason)


APPROVED = Decision(True, Reason.APPROVED)


@dataclass(frozen=True)
class AclEntry:
    uid: str
    role: str
    allowed_cameras: frozenset[str]
    allowed_date_window: tuple[dt.date, dt.date]
    max_range_minutes: int
    allowed_types: frozenset[str] = frozenset(REQUEST_TYPES)
    allowed_storage_sites: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        for name in ("allowed_cameras", "allowed_types", "allowed_storage_sites"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        object.__setattr__(self, "allowed_date_window", tuple(self.allowed_date_window))
        if not self.allowed_cameras:
            raise ValueError("allowed_cameras must be nonempty")
        if self.max_range_minutes <= 0:
            raise ValueError("max_range_minutes must be positive")
        lo, hi = self.allowed_date_window
        if lo > hi:
            raise ValueError("date window is reversed")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["allowed_date_window"] = [x.isoformat() for x in self.allowed_date_window]
        for name in ("allowed_cameras", "allowed_types", "allowed_storage_sites"):
            d[name] = sorted(d[name])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AclEntry":
        lo, hi = d["allowed_date_window"]
        return cls(
            uid=d["uid"],
            role=d["role"],
            allowed_cameras=frozenset(d["allowed_cameras"]),
            allowed_date_window=(dt.date.fromisoformat(lo), dt.date.fromisoformat(hi)),
            max_range_minutes=int(d["max_range_minutes"]),
            allowed_types=frozenset(d["allowed_types"]),
            allowed_storage_sites=frozenset(d["allowed_storage_sites"]),
        )


def validate_request(req: AccessRequest, acl: Iterable[AclEntry]) -> Decision:
    """Evaluate ``req`` against the ACL; the first failed check names the reason.

    Order: user exists, cameras, date, range length, type, storage site.
    """
    entry = next((e for e in acl if e.uid == req.uid), None)
    if entry is None:
        return Decision.deny(Reason.UNKNOWN_USER)
    if not set(req.camera_ids) <= entry.allowed_cameras:
        return Decision.deny(Reason.CAMERA_DENIED)
    lo, hi = entry.allowed_date_window
    if not lo <= req.date <= hi:
        return Decision.deny(Reason.DATE_DENIED)
    if req.range.minutes > entry.max_range_minutes:
        return Decision.deny(Reason.RANGE_EXCEEDED)
    if req.type not in entry.allowed_types:
        return Decision.deny(Reason.TYPE_DENIED)
    if req.storage_name not in entry.allowed_storage_sites:
        return Decision.deny(Reason.SITE_DENIED)
    return APPROVED


# -- access codes ---------------------------------------------------------------


def generate_access_code(role: str, storage_name: str, entropy: bytes | str | int, attempt: int = 0) -> str:
    """``role + "To" + storage_name`` followed by 18 decimal digits derived from ``entropy``."""
    if not role or not storage_name:
        raise ValueError("role and storage name must be nonempty")
    return f"{role}To{storage_name}" + _digits(_as_seed(entropy), f"code:{role}:{storage_name}:{attempt}",
                                               CODE_DIGITS)


class CodeRegistry:
    """Issued and consumed access codes.

    With a ``path`` every state change is written through (atomically), and
    a registry reopened on the same path refuses codes consumed before.
    """

    ISSUED, CONSUMED = "issued", "consumed"

    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path is not None else None
        self._state: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._state = json.loads(self.path.read_text())["codes"]

    def _persist(self) -> None:
        if self.path is None:
            return
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        tmp.write_text(json.dumps({"codes": self._state}, sort_keys=True, indent=0))
        os.replace(tmp, self.path)

    def issue(self, role: str, storage_name: str, entropy: bytes | str | int) -> str:
        with self._lock:
            for attempt in range(MAX_ATTEMPTS):
                code = generate_access_code(role, storage_name, entropy, attempt)
                if code not in self._state:
                    self._state[code] = self.ISSUED
                    self._persist()
                    return code
        raise RegistryCollision(f"no fresh access code after {MAX_ATTEMPTS} attempts")

    def register(self, code: str) -> None:
        """Record a code issued elsewhere (e.g. received from the chain) as unconsumed."""
        with self._lock:
            self._state.setdefault(code, self.ISSUED)
            self._persist()

    def state(self, code: str) -> str | None:
        return self._state.get(code)

    def is_consumed(self, code: str) -> bool:
        return self._state.get(code) == self.CONSUMED

    def match(self, presented: UpdatedRequest, forwarded: UpdatedRequest) -> bool:
        """Compare every field; on a match consume the code.  Replays raise."""
        with self._lock:
            if self._state.get(presented.access_code) == self.CONSUMED:
                raise CodeAlreadyConsumed(presented.access_code)
            if presented != forwarded or self._state.get(presented.access_code) != self.ISSUED:
                return False
            self._state[presented.access_code] = self.CONSUMED
            self._persist()
            return True


def match_requests(presented: UpdatedRequest, forwarded: UpdatedRequest, registry: CodeRegistry) -> bool:
    return registry.match(presented, forwarded)
