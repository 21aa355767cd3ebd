"""Credential checks and node-bound session tokens.

Biometric enrolment is simulated: each user registers a 256-bit credential
digest with every party it will authenticate to.  A successful check yields a
token that only the issuing party accepts.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass

from sepris.envelope import PublicKey
from sepris.errors import CredentialMismatch, SessionRejected, UnknownUser

TOKEN_MAC_LEN = 32


@dataclass(frozen=True)
class UserRecord:
    uid: str
    public: PublicKey
    credential_digest: bytes


def watermark(credential_digest: bytes) -> str:
    """Viewer watermark recorded in audit logs; derived so the credential itself never lands on-chain."""
    return hashlib.sha256(b"sepris-watermark" + credential_digest).hexdigest()


def _field(b: bytes) -> bytes:
    return struct.pack("<H", len(b)) + b


class Authenticator:
    def __init__(self, owner: str, secret: bytes, users: dict[str, UserRecord] | None = None):
        self.owner = owner
        self._secret = secret
        self.users: dict[str, UserRecord] = dict(users or {})

    def enroll(self, user: UserRecord) -> None:
        self.users[user.uid] = user

    def _mac(self, body: bytes) -> bytes:
        return hmac.new(self._secret, b"sepris-session" + body, hashlib.sha256).digest()

    def authenticate(self, uid_claim: str, credential_digest: bytes, now: int) -> bytes:
        """Constant-time digest check; returns a token bound to ``(uid, owner, now)``."""
        user = self.users.get(uid_claim)
        if user is None:
            raise UnknownUser(uid_claim)
        if not hmac.compare_digest(user.credential_digest, credential_digest):
            raise CredentialMismatch(f"credential mismatch for {uid_claim}")
        body = _field(self.owner.encode()) + _field(uid_claim.encode()) + struct.pack("<Q", now)
        return body + self._mac(body)

    def check(self, token: bytes) -> str:
        """UID the token was issued to; rejects tokens minted by any other party."""
        body, mac = token[:-TOKEN_MAC_LEN], token[-TOKEN_MAC_LEN:]
        try:
            (n,) = struct.unpack_from("<H", body)
            owner = body[2:2 + n].decode()
            (m,) = struct.unpack_from("<H", body, 2 + n)
            uid = body[4 + n:4 + n + m].decode()
        except (struct.error, UnicodeDecodeError):
            raise SessionRejected("malformed session token") from None
        if owner != self.owner:
            raise SessionRejected(f"token was issued by {owner!r}, not {self.owner!r}")
        if not hmac.compare_digest(self._mac(body), mac):
            raise SessionRejected("session token failed verification")
        if uid not in self.users:
            raise SessionRejected("token user is no longer enrolled")
        return uid
