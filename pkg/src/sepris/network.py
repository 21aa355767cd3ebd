"""Deterministic simulation of the SAC consortium and the ten-step access protocol.

Every party lives in one process and talks over :class:`Bus`, a reliable,
ordered message bus with a logical clock.  Each message on the bus is an
:class:`~sepris.envelope.Envelope` except the served video, which travels as
a DAB cipher stream.  All keys, nonces and ephemeral secrets come from one
seeded :class:`~sepris._drbg.Drbg`, so a run is a pure function of
``(config, seed)``.

Protocol steps as simulated:

1. requestor authenticates to a SAC node and receives its UID
2. requestor submits the access request to that node
3. the node re-seals the request to every peer
4. every node evaluates its ACL and votes to the round's miner
5. on unanimous approval the miner mines a RequestRecord block; all replicas append it
6. the miner derives the single-use access code (bound to the block hash)
7. the origin seals the code to the requestor; the miner forwards the updated request to storage
8. requestor authenticates at the storage site
9. requestor presents the updated request
10. storage serves the enciphered stream and keys; its audit record is mined into a block
"""

from __future__ import annotations

import base64
import datetime as dt
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from sepris._drbg import Drbg, derive
from sepris.auth import Authenticator, UserRecord
from sepris.codec import DabKeyset, FrameBuffer, decipher_frame
from sepris.codec import sprc
from sepris.contract import (
    AccessRequest,
    AclEntry,
    Reason,
    TimeRange,
    UidRegistry,
    UpdatedRequest,
    generate_access_code,
    role_of,
    validate_request,
)
from sepris.envelope import Envelope, KeyPair, PublicKey, generate_keypair, open as open_envelope, open_unverified, seal
from sepris.errors import (
    DivergentAcl,
    InvalidTransaction,
    NetworkError,
    ProtocolStepError,
    SeprisError,
    SessionRejected,
    SignatureInvalid,
    UnknownStorageSite,
)
from sepris.ledger import Block, Chain, Transaction, TxKind, genesis, key_id_for, mine_block
from sepris.samples import video_frames
from sepris.storage import AuditAction, AuditRecord, StorageSite, VideoRecord, VideoStore

TRANSCRIPT_FORMAT = "sepris-transcript"
TRANSCRIPT_VERSION = 1
DEFAULT_EPOCH = 1615680000  # 2021-03-14T00:00:00Z


def _canon(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


# -- bus ----------------------------------------------------------------------------------


class Clock:
    """Logical time in simulated seconds; every bus message advances it by one."""

    def __init__(self, now: int = 0):
        self.now = now


@dataclass(frozen=True)
class ProtocolEvent:
    logical_time: int
    step: int
    sender: str
    receiver: str
    kind: str  # "envelope" or "cipher-stream"
    wire: bytes

    @property
    def envelope(self) -> Envelope | None:
        return Envelope.from_bytes(self.wire) if self.kind == "envelope" else None

    def sort_key(self) -> tuple[int, str]:
        return self.logical_time, self.sender

    def to_dict(self) -> dict:
        return {"type": "event", "t": self.logical_time, "step": self.step, "from": self.sender,
                "to": self.receiver, "kind": self.kind, "size": len(self.wire),
                "sha256": hashlib.sha256(self.wire).hexdigest()}


Tap = Callable[[ProtocolEvent], None]


class Bus:
    def __init__(self, clock: Clock):
        self.clock = clock
        self.events: list[ProtocolEvent] = []
        self.taps: list[Tap] = []

    def _post(self, step: int, sender: str, receiver: str, kind: str, wire: bytes) -> ProtocolEvent:
        self.clock.now += 1
        ev = ProtocolEvent(self.clock.now, step, sender, receiver, kind, wire)
        self.events.append(ev)
        for tap in self.taps:
            tap(ev)
        return ev

    def send(self, step: int, sender: str, receiver: str, env: Envelope) -> Envelope:
        """Deliver ``env``; the receiver gets what was parsed back off the wire."""
        return self._post(step, sender, receiver, "envelope", env.to_bytes()).envelope

    def send_stream(self, step: int, sender: str, receiver: str, data: bytes) -> bytes:
        return self._post(step, sender, receiver, "cipher-stream", data).wire


# -- parties ------------------------------------------------------------------------------


class _Sealer:
    keypair: KeyPair
    rng: Drbg

    @property
    def public(self) -> PublicKey:
        return self.keypair.public

    def seal_to(self, pub: PublicKey, payload: bytes) -> Envelope:
        return seal(self.keypair, pub, payload, ephemeral=self.rng.bytes(32, "ephemeral"))


@dataclass
class SacNode(_Sealer):
    node_id: str
    keypair: KeyPair
    chain: Chain
    acl: frozenset[AclEntry]
    auth: Authenticator
    body_keystore: dict[str, bytes]
    peers: set[str]
    rng: Drbg

    @property
    def uid_registry(self) -> dict[str, UserRecord]:
        return self.auth.users


@dataclass
class Client(_Sealer):
    """A requestor (or an intruder, when its UID was never enrolled)."""

    name: str
    uid: str
    keypair: KeyPair
    credential: bytes
    rng: Drbg
    tokens: dict[str, bytes] = field(default_factory=dict)
    codes: list[str] = field(default_factory=list)
    updated_requests: list[UpdatedRequest] = field(default_factory=list)
    received: list[list[FrameBuffer]] = field(default_factory=list)


@dataclass(frozen=True)
class ConsensusOutcome:
    approved: bool
    reason: Reason
    decisions: dict[str, Reason]
    miner: str
    block: Block | None = None


class Network:
    def __init__(self, nodes: Iterable[SacNode], sites: dict[str, StorageSite], *, rng: Drbg,
                 body_key_id: str, epoch: int = DEFAULT_EPOCH, clock: Clock | None = None):
        self.nodes = sorted(nodes, key=lambda n: n.node_id)
        if not self.nodes:
            raise NetworkError("a network needs at least one SAC node")
        self.sites = dict(sites)
        self.rng = rng
        self.body_key_id = body_key_id
        self.epoch = epoch
        self.clock = clock or Clock()
        self.bus = Bus(self.clock)
        self.transcript: list[dict] = []
        self.bus.taps.append(lambda ev: self.transcript.append(ev.to_dict()))

    def node(self, node_id: str) -> SacNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise NetworkError(f"no node {node_id!r}")

    @property
    def height(self) -> int:
        return self.nodes[0].chain.height

    def miner_for(self, height: int) -> SacNode:
        """Round-robin by the height of the block being mined."""
        return self.nodes[height % len(self.nodes)]

    def tx_registry(self) -> dict[str, PublicKey]:
        return {n.node_id: n.public for n in self.nodes}

    def log(self, **entry: Any) -> None:
        self.transcript.append(entry)

    def replicas_identical(self) -> bool:
        first = self.nodes[0].chain.dumps()
        return all(n.chain.dumps() == first for n in self.nodes[1:])


# -- steps 1-3 -------------------------------------------------------------------------------


def authenticate_user(node: SacNode, uid_claim: str, credential_digest: bytes, now: int = 0) -> bytes:
    """Session token bound to ``(uid, node, now)``; raises UnknownUser or CredentialMismatch."""
    return node.auth.authenticate(uid_claim, credential_digest, now)


def _verify_claimant(users: dict[str, UserRecord], uid: str, label: str, signature: bytes, payload: bytes) -> None:
    user = users[uid]
    if label != uid or not user.public.verify(signature, payload):
        raise SignatureInvalid(f"message not signed by {uid}")


def login(net: Network, client: Client, node: SacNode) -> bytes:
    """Step 1 over the bus: credential in, sealed UID and token back."""
    msg = _canon({"uid": client.uid, "credential": client.credential.hex()})
    env = net.bus.send(1, client.name, node.node_id, client.seal_to(node.public, msg))
    label, sig, payload = open_unverified(node.keypair, env)
    claim = json.loads(payload)
    token = authenticate_user(node, claim["uid"], bytes.fromhex(claim["credential"]), net.clock.now)
    _verify_claimant(node.uid_registry, claim["uid"], label, sig, payload)
    reply = _canon({"uid": claim["uid"], "token": base64.b64encode(token).decode()})
    back = net.bus.send(1, node.node_id, client.name, node.seal_to(client.public, reply))
    got = json.loads(open_envelope(client.keypair, node.public, back))
    client.tokens[node.node_id] = base64.b64decode(got["token"])
    return client.tokens[node.node_id]


def submit_request(net: Network, client: Client, node: SacNode, req: AccessRequest) -> AccessRequest:
    """Step 2: the request reaches ``node`` and is checked against the sender's session."""
    token = client.tokens.get(node.node_id, b"")
    msg = _canon({"token": base64.b64encode(token).decode(), "request": req.to_dict()})
    env = net.bus.send(2, client.name, node.node_id, client.seal_to(node.public, msg))
    label, sig, payload = open_unverified(node.keypair, env)
    body = json.loads(payload)
    uid = node.auth.check(base64.b64decode(body["token"]))
    _verify_claimant(node.uid_registry, uid, label, sig, payload)
    received = AccessRequest.from_dict(body["request"])
    if received.uid != uid:
        raise SessionRejected("request names a different UID than the session")
    return received


def broadcast_request(net: Network, origin: SacNode, req: AccessRequest) -> dict[str, AccessRequest]:
    """Step 3: one freshly sealed copy per peer, delivered in node-label order."""
    payload = req.to_json()
    delivered = {}
    for peer in net.nodes:
        if peer.node_id == origin.node_id:
            continue
        env = net.bus.send(3, origin.node_id, peer.node_id, origin.seal_to(peer.public, payload))
        delivered[peer.node_id] = AccessRequest.from_json(open_envelope(peer.keypair, origin.public, env))
    return delivered


# -- steps 4-5 -------------------------------------------------------------------------------


def _distribute_block(net: Network, miner: SacNode, block: Block, step: int) -> None:
    raw = block.to_bytes()
    miner.chain.append(block)
    for peer in net.nodes:
        if peer is miner:
            continue
        env = net.bus.send(step, miner.node_id, peer.node_id, miner.seal_to(peer.public, raw))
        peer.chain.append(Block.from_bytes(open_envelope(peer.keypair, miner.public, env)))


def _mine_and_distribute(net: Network, miner: SacNode, tx: Transaction, step: int) -> Block:
    key = miner.body_keystore[net.body_key_id]
    block = mine_block(miner.chain, [tx], key, net.epoch + net.clock.now, registry=net.tx_registry(),
                       key_id=net.body_key_id)
    _distribute_block(net, miner, block, step)
    net.log(type="block", height=net.height, hash=block.hash().hex(), miner=miner.node_id,
            kind=TxKind(tx.kind).value, nonce=block.header.nonce)
    return block


def consensus_round(net: Network, req: AccessRequest, copies: dict[str, AccessRequest] | None = None,
                    origin: str | None = None) -> ConsensusOutcome:
    """Steps 4-5: every node judges its own copy, votes reach the miner, unanimity mines.

    ``copies`` maps node id to the request that node received (defaults to
    ``req`` everywhere).  Split verdicts raise :class:`DivergentAcl` and mine
    nothing; a unanimous denial returns an unapproved outcome.
    """
    if not net.nodes:
        raise NetworkError("no nodes")
    copies = copies or {}
    height = net.height + 1
    miner = net.miner_for(height)
    digest = hashlib.sha256(req.to_json()).hexdigest()
    local = {n.node_id: validate_request(copies.get(n.node_id, req), n.acl) for n in net.nodes}
    tally: dict[str, Reason] = {miner.node_id: local[miner.node_id].reason}
    for n in net.nodes:
        if n is miner:
            continue
        vote = _canon({"node": n.node_id, "reason": local[n.node_id].reason.value, "request_sha256": digest})
        env = net.bus.send(4, n.node_id, miner.node_id, n.seal_to(miner.public, vote))
        got = json.loads(open_envelope(miner.keypair, n.public, env))
        if got["request_sha256"] != digest:
            raise NetworkError(f"{n.node_id} voted on a different request")
        tally[got["node"]] = Reason(got["reason"])
    for node_id in sorted(tally):
        net.log(type="decision", node=node_id, reason=tally[node_id].value)
    approvals = {r is Reason.APPROVED for r in tally.values()}
    if approvals == {True, False}:
        err = DivergentAcl("nodes disagree: " + ", ".join(f"{k}={v.value}" for k, v in sorted(tally.items())))
        err.decisions = tally
        raise err
    if approvals == {False}:
        reason = tally[miner.node_id]
        return ConsensusOutcome(False, reason, tally, miner.node_id)
    payload = _canon({"request": req.to_dict(), "origin": origin or miner.node_id, "approvals": sorted(tally)})
    tx = Transaction(TxKind.REQUEST, payload, miner.node_id).signed(miner.keypair)
    block = _mine_and_distribute(net, miner, tx, 5)
    return ConsensusOutcome(True, Reason.APPROVED, tally, miner.node_id, block)


# -- steps 6-7 -------------------------------------------------------------------------------


def issue_and_forward_code(net: Network, req: AccessRequest, outcome: ConsensusOutcome, origin: SacNode,
                           requestor: Client) -> tuple[Envelope, Envelope]:
    """Derive the access code from the request block and send it two ways.

    Returns ``(envelope to requestor, envelope to storage)`` as delivered.
    The storage copy is the UpdatedRequest JSON.
    """
    if not outcome.approved or outcome.block is None:
        raise NetworkError("no approved request block to issue a code for")
    site = net.sites.get(req.storage_name)
    if site is None:
        raise UnknownStorageSite(req.storage_name)
    miner = net.node(outcome.miner)
    entropy = derive(miner.rng.bytes(32, "code-secret"), "access-code:" + outcome.block.hash().hex())
    code = generate_access_code(role_of(req.uid), req.storage_name, entropy)
    net.log(type="step", step=6, actor=miner.node_id, note="access code issued")
    if miner is not origin:
        env = net.bus.send(6, miner.node_id, origin.node_id, miner.seal_to(origin.public, code.encode()))
        code = open_envelope(origin.keypair, miner.public, env).decode()
    updated = req.with_code(code)
    to_user = net.bus.send(7, origin.node_id, requestor.name,
                           origin.seal_to(requestor.public, _canon({"access_code": code})))
    to_site = net.bus.send(7, miner.node_id, site.name, miner.seal_to(site.public, updated.to_json()))
    return to_user, to_site


# -- steps 8-10 ------------------------------------------------------------------------------


def site_login(net: Network, client: Client, site: StorageSite) -> bytes:
    msg = _canon({"uid": client.uid, "credential": client.credential.hex()})
    env = net.bus.send(8, client.name, site.name, client.seal_to(site.public, msg))
    label, sig, payload = open_unverified(site.keypair, env)
    claim = json.loads(payload)
    token = site.authenticate(claim["uid"], bytes.fromhex(claim["credential"]), net.clock.now)
    _verify_claimant(site.auth.users, claim["uid"], label, sig, payload)
    back = net.bus.send(8, site.name, client.name,
                        site.seal_to(client.public, _canon({"token": base64.b64encode(token).decode()})))
    got = json.loads(open_envelope(client.keypair, site.public, back))
    client.tokens[site.name] = base64.b64decode(got["token"])
    return client.tokens[site.name]


def record_audit(net: Network, record: AuditRecord) -> Block:
    """Mine ``record`` into a new block on every replica."""
    if record.action is AuditAction.GRANTED and not record.viewer_watermark:
        raise InvalidTransaction("a Granted audit record must carry a viewer watermark")
    miner = net.miner_for(net.height + 1)
    tx = Transaction(TxKind.AUDIT, record.to_json(), miner.node_id).signed(miner.keypair)
    block = _mine_and_distribute(net, miner, tx, 10)
    net.log(type="audit", **record.to_dict())
    return block


def present_and_view(net: Network, client: Client, site: StorageSite, updated: UpdatedRequest) -> tuple[int, bytes]:
    """Steps 9-10 from the requestor's side; returns the frame count and the cipher stream as received."""
    token = client.tokens.get(site.name, b"")
    msg = _canon({"token": base64.b64encode(token).decode(), "request": updated.to_dict()})
    env = net.bus.send(9, client.name, site.name, client.seal_to(site.public, msg))
    label, sig, payload = open_unverified(site.keypair, env)
    body = json.loads(payload)
    tok = base64.b64decode(body["token"])
    uid = site.auth.check(tok)
    _verify_claimant(site.auth.users, uid, label, sig, payload)
    served = site.serve_request(tok, UpdatedRequest.from_dict(body["request"]), net.clock.now)
    keys_env = net.bus.send(10, site.name, client.name, served.keys_envelope)
    stream = net.bus.send_stream(10, site.name, client.name, served.stream)
    keys = DabKeyset.from_json(open_envelope(client.keypair, site.public, keys_env).decode())
    client.received.append([decipher_frame(cf, keys) for cf in sprc.iter_stream(stream)])
    gateway = net.miner_for(net.height + 1)
    audit_env = net.bus.send(10, site.name, gateway.node_id, site.seal_to(gateway.public, served.audit.to_json()))
    record_audit(net, AuditRecord.from_json(open_envelope(gateway.keypair, site.public, audit_env)))
    return served.frame_count, stream


# -- scenarios ------------------------------------------------------------------------------


@dataclass
class ScenarioResult:
    seed: int
    network: Network
    clients: dict[str, Client]
    outcomes: list[dict]
    streams: list[bytes]

    @property
    def transcript(self) -> list[dict]:
        return self.network.transcript

    def transcript_bytes(self) -> bytes:
        return b"".join(_canon(e) + b"\n" for e in self.transcript)

    @property
    def chain(self) -> Chain:
        return self.network.nodes[0].chain

    def keystore(self) -> dict[str, bytes]:
        return dict(self.network.nodes[0].body_keystore)


def _time(s: str) -> dt.time:
    return dt.time.fromisoformat(s)


def build_network(config: dict, seed: int) -> tuple[Network, dict[str, Client]]:
    """Nodes, storage sites and clients for ``config``, all keyed from ``seed``."""
    rng = Drbg(b"sepris-scenario" + seed.to_bytes(16, "big"))
    difficulty = int(config.get("difficulty_bits", 8))
    epoch = int(config.get("epoch", DEFAULT_EPOCH))
    quality = int(config.get("quality", 50))

    uids = UidRegistry()
    clients: dict[str, Client] = {}
    users: dict[str, UserRecord] = {}
    for u in config.get("users", []):
        uid = uids.issue(u["role"], rng.bytes(32, "uid:" + u["name"]))
        cred = bytes.fromhex(u["credential"]) if "credential" in u else rng.bytes(32, "credential:" + u["name"])
        kp = generate_keypair(uid, rng.bytes(32, "user-key:" + u["name"]))
        clients[u["name"]] = Client(u["name"], uid, kp, cred, rng.child("client:" + u["name"]))
        users[uid] = UserRecord(uid, kp.public, cred)
    for u in config.get("intruders", []):
        uid = u.get("uid_claim") or (u["role"] + str(int.from_bytes(rng.bytes(32, "fake:" + u["name"]), "big") % 10**39).zfill(39))
        kp = generate_keypair(uid, rng.bytes(32, "intruder-key:" + u["name"]))
        clients[u["name"]] = Client(u["name"], uid, kp, rng.bytes(32, "cred:" + u["name"]),
                                    rng.child("client:" + u["name"]))

    def acl_from(entries: list[dict]) -> frozenset[AclEntry]:
        out = []
        for e in entries:
            c = clients[e["user"]]
            lo, hi = e["allowed_date_window"]
            out.append(AclEntry(c.uid, e.get("role", role_of(c.uid)), frozenset(e["allowed_cameras"]),
                                (dt.date.fromisoformat(lo), dt.date.fromisoformat(hi)), int(e["max_range_minutes"]),
                                frozenset(e.get("allowed_types", ["whole_context", "activities"])),
                                frozenset(e["allowed_storage_sites"])))
        return frozenset(out)

    body_key = rng.bytes(32, "body-key")
    kid = key_id_for(body_key)
    names = sorted(config["nodes"])
    nodes = []
    for name in names:
        entries = config.get("node_acl", {}).get(name, config.get("acl", []))
        nodes.append(SacNode(
            node_id=name,
            keypair=generate_keypair(name, rng.bytes(32, "node-key:" + name)),
            chain=genesis(difficulty, clock=epoch),
            acl=acl_from(entries),
            auth=Authenticator(name, rng.bytes(32, "node-auth:" + name), users),
            body_keystore={kid: body_key},
            peers=set(names) - {name},
            rng=rng.child("node:" + name),
        ))
    sac_keys = {n.node_id: n.public for n in nodes}
    sites = {}
    for s in config.get("storage_sites", []):
        site = StorageSite(
            name=s["name"], address=s["address"],
            keypair=generate_keypair(s["name"], rng.bytes(32, "site-key:" + s["name"])),
            sac_keys=sac_keys,
            auth=Authenticator(s["name"], rng.bytes(32, "site-auth:" + s["name"]), users),
            store=VideoStore(rng.bytes(32, "store:" + s["name"])),
            rng=rng.child("site:" + s["name"]),
            ttl=int(s.get("grant_ttl", 3600)),
            quality=quality,
        )
        for k, v in enumerate(s.get("videos", [])):
            frames = video_frames(int(v["frames"]), int(v.get("width", 64)), int(v.get("height", 48)),
                                  int(v.get("channels", 1)),
                                  seed=int.from_bytes(rng.bytes(4, f"video:{s['name']}:{k}"), "big"))
            site.ingest_video(VideoRecord(v["camera_id"], dt.date.fromisoformat(v["date"]), _time(v["start"]),
                                          int(v.get("fps", 1)), frames))
        sites[site.name] = site
    net = Network(nodes, sites, rng=rng.child("network"), body_key_id=kid, epoch=epoch)
    return net, clients


def _request_from(fields: dict, client: Client, net: Network) -> AccessRequest:
    site = net.sites.get(fields["storage_name"])
    address = fields.get("storage_address") or (site.address if site else "")
    return AccessRequest(client.uid, tuple(fields["camera_ids"]), dt.date.fromisoformat(fields["date"]),
                         TimeRange(_time(fields["start"]), _time(fields["end"])), fields.get("type", "whole_context"),
                         fields["storage_name"], address)


class _Denied(Exception):
    def __init__(self, step: int, reason: str):
        self.step, self.reason = step, reason


def _at(step: int, fn: Callable, *args):
    try:
        return fn(*args)
    except SeprisError as e:
        raise _Denied(step, type(e).__name__) from e
    except Exception as e:  # an implementation fault, not a protocol denial
        raise ProtocolStepError(step, e) from e


def _steps_8_to_10(net: Network, client: Client, updated: UpdatedRequest, result: ScenarioResult) -> dict:
    site = net.sites.get(updated.storage_name)
    if site is None:
        raise _Denied(8, "UnknownStorageSite")
    net.log(type="step", step=8, actor=client.name)
    _at(8, site_login, net, client, site)
    net.log(type="step", step=9, actor=client.name)
    frames, stream = _at(10, present_and_view, net, client, site, updated)
    result.streams.append(stream)
    return {"status": "granted", "step": 10, "frames": frames}


def _run_request(net: Network, client: Client, action: dict, result: ScenarioResult) -> dict:
    origin = net.node(action.get("via", net.nodes[0].node_id))
    net.log(type="step", step=1, actor=client.name, node=origin.node_id)
    _at(1, login, net, client, origin)
    req = _request_from(action["request"], client, net)
    net.log(type="step", step=2, actor=client.name)
    received = _at(2, submit_request, net, client, origin, req)
    net.log(type="step", step=3, actor=origin.node_id)
    copies = _at(3, broadcast_request, net, origin, received)
    copies[origin.node_id] = received
    net.log(type="step", step=4, actor="all")
    outcome = _at(5, consensus_round, net, received, copies, origin.node_id)
    if not outcome.approved:
        raise _Denied(5, outcome.reason.value)
    to_user, to_site = _at(7, issue_and_forward_code, net, received, outcome, origin, client)
    site = net.sites[received.storage_name]
    _at(7, site.receive_forwarded_request, to_site, net.clock.now)
    code = json.loads(open_envelope(client.keypair, origin.public, to_user))["access_code"]
    client.codes.append(code)
    updated = req.with_code(code)
    client.updated_requests.append(updated)
    if int(action.get("stop_after", 10)) <= 7:
        return {"status": "pending", "step": 7, "access_code_issued": True}
    presented = updated
    if "present" in action:
        d = {**updated.to_dict(), **action["present"]}
        presented = _at(9, UpdatedRequest.from_dict, d)
    return _steps_8_to_10(net, client, presented, result)


def run_scenario(config: dict, seed: int) -> ScenarioResult:
    """Execute ``config['script']`` against a freshly built network.

    Script actions:

    * ``{"action": "request", "user", "via", "request": {...}, "present": {...}, "stop_after": 7}``
    * ``{"action": "present", "user", "of": k}`` re-presents the k-th updated request the user holds
    * ``{"action": "wait", "seconds": n}`` advances the clock and expires stale grants

    Protocol denials become outcomes; implementation faults surface as
    :class:`ProtocolStepError` carrying the step number.
    """
    net, clients = build_network(config, seed)
    result = ScenarioResult(seed, net, clients, [], [])
    net.transcript.append({"type": "run", "format": TRANSCRIPT_FORMAT, "version": TRANSCRIPT_VERSION,
                           "seed": seed, "config_sha256": hashlib.sha256(_canon(config)).hexdigest(),
                           "nodes": [n.node_id for n in net.nodes], "genesis": net.nodes[0].chain.tip.hash().hex()})
    for i, action in enumerate(config.get("script", [])):
        kind = action.get("action", "request")
        if kind == "wait":
            net.clock.now += int(action["seconds"])
            expired = sum(s.expire_grants(net.clock.now) for _, s in sorted(net.sites.items()))
            out = {"status": "waited", "expired": expired}
        else:
            client = clients[action["user"]]
            try:
                if kind == "request":
                    out = _run_request(net, client, action, result)
                elif kind == "present":
                    updated = client.updated_requests[int(action.get("of", -1))]
                    out = _steps_8_to_10(net, client, updated, result)
                else:
                    raise ValueError(f"unknown script action {kind!r}")
            except _Denied as d:
                out = {"status": "denied", "step": d.step, "reason": d.reason}
        out = {"type": "outcome", "index": i, "action": kind, **out}
        result.outcomes.append(out)
        net.log(**out)
    net.log(type="summary", blocks=len(result.chain), replicas_identical=net.replicas_identical(),
            tip=result.chain.tip.hash().hex())
    return result


def court_scenario(difficulty_bits: int = 8) -> dict:
    """The canonical walkthrough: five SAC nodes, one cloud NVR, one court."""
    return {
        "difficulty_bits": difficulty_bits,
        "nodes": [f"SAC_{i}" for i in range(1, 6)],
        "users": [{"name": "court", "role": "court"}],
        "acl": [{"user": "court", "allowed_cameras": ["cam-1", "cam-2"],
                 "allowed_date_window": ["2021-01-01", "2021-12-31"], "max_range_minutes": 60,
                 "allowed_types": ["whole_context", "activities"], "allowed_storage_sites": ["CloudNVR"]}],
        "storage_sites": [{"name": "CloudNVR", "address": "10.0.0.5:7000",
                           "videos": [{"camera_id": "cam-1", "date": "2021-03-14", "start": "10:00", "fps": 1,
                                       "frames": 120, "width": 64, "height": 48}]}],
        "script": [{"action": "request", "user": "court", "via": "SAC_2",
                    "request": {"camera_ids": ["cam-1"], "date": "2021-03-14", "start": "10:00", "end": "10:01",
                                "type": "whole_context", "storage_name": "CloudNVR"}}],
    }
