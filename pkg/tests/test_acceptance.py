"""End-to-end acceptance gate, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and then
asserts, so a failing criterion also fails the suite.
"""

import hashlib
import json
import random
import statistics
import time

import numpy as np
import pytest

from oracle import ref_coefficients, ref_reconstruct
from sepris import envelope, network
from sepris._drbg import Drbg
from sepris.cli import main
from sepris.codec import DabKeyset, FrameBuffer, decipher_frame, decipher_plane, encipher_frame
from sepris.envelope import Envelope, generate_keypair, seal
from sepris.errors import SeprisError, SignatureInvalid
from sepris.ledger import Block, Chain, Transaction, TxKind, genesis, mine_block, validate_chain
from sepris.metrics import security_report
from sepris.network import court_scenario, run_scenario
from sepris.samples import test_image

SEED = 2021


# 1 -----------------------------------------------------------------------------------------


def test_criterion_1_security_table(verdict):
    keys = DabKeyset.generate(50, Drbg("table-1"))
    t = time.perf_counter()
    report = security_report(test_image(), keys)
    elapsed = time.perf_counter() - t
    failed = [k for k, ok in report.checks().items() if not ok]
    ok = verdict(not failed and elapsed < 30,
                 f"EQ {100 * report.encryption_quality:.3f}%, NPCR {report.npcr_pct:.2f}/{report.key_npcr_pct:.2f}%, "
                 f"UACI {report.uaci_pct:.2f}/{report.key_uaci_pct:.2f}%, H {report.entropy_bits:.4f}, "
                 f"PSNR {report.psnr_db:.2f} dB, p(freq,runs,gap,poker) {report.frequency_p:.3f},"
                 f"{report.runs_p:.3f},{report.gap_p:.3f},{report.poker_p:.3f}, {elapsed:.1f}s"
                 + (f", failed: {failed}" if failed else ""))
    print(report.table())
    assert ok


# 2 -----------------------------------------------------------------------------------------


def test_criterion_2_codec_oracle_equivalence(verdict):
    sizes = [(32, 32), (64, 48), (511, 333)]
    qualities = [1, 50, 90, 100]
    rng = np.random.default_rng(SEED)
    mismatches, combos = 0, set()
    for i in range(100):
        (w, h), q = sizes[i % 3], qualities[(i // 3) % 4]
        channels = 3 if i % 10 == 9 else 1
        px = rng.integers(0, 256, (channels, h, w), dtype=np.uint8)
        keys = DabKeyset.generate(q, Drbg(f"oracle-{i}"))
        cf = encipher_frame(FrameBuffer(px), keys, frame_index=i)
        plane = decipher_plane(cf, keys)
        same = np.array_equal(plane.coefficients, ref_coefficients(px, q))
        same &= np.array_equal(decipher_frame(cf, keys).pixels, ref_reconstruct(px, q))
        mismatches += not same
        combos.add((w, h, q))
    ok = verdict(mismatches == 0 and len(combos) == 12,
                 f"{100 - mismatches}/100 frames bit-identical to the oracle over {len(combos)} size/Q combinations")
    assert ok


# 3 -----------------------------------------------------------------------------------------


def _chain(n_blocks: int, bits: int) -> Chain:
    kp = generate_keypair("SAC_1", b"acceptance")
    body_key = hashlib.sha256(b"acceptance-body").digest()
    chain = genesis(bits, clock=1_615_680_000)
    for h in range(1, n_blocks):
        txs = [Transaction(TxKind.REQUEST, f"request {h}.{j}".encode() * 8, "SAC_1").signed(kp) for j in range(2)]
        chain.append(mine_block(chain, txs, body_key, 1_615_680_000 + h, registry={"SAC_1": kp.public}))
    return chain


def test_criterion_3_chain_tamper_fuzz(verdict):
    # 16 bits: at 8 bits a flip in the tip's nonce lands on another valid PoW about 1 time in 256
    bits = 16
    chain = _chain(10, bits)
    clean = bool(validate_chain(chain))
    raws = [b.to_bytes() for b in chain.blocks]
    header_len = len(chain.blocks[0].header.to_bytes())
    rng = random.Random(SEED)
    detected, in_header = 0, 0
    for _ in range(1000):
        i = rng.randrange(len(raws))
        raw = bytearray(raws[i])
        pos = rng.randrange(len(raw))
        raw[pos] ^= rng.randrange(1, 256)
        in_header += pos < header_len
        blocks = list(chain.blocks)
        blocks[i] = Block.from_bytes(bytes(raw))
        detected += not validate_chain(Chain(blocks, bits))
    ok = verdict(clean and detected == 1000,
                 f"untampered chain valid={clean}; {detected}/1000 flips detected "
                 f"({in_header} in headers, {1000 - in_header} in key ids/bodies), difficulty {bits}")
    assert ok


# 4 -----------------------------------------------------------------------------------------


def test_criterion_4_pow_statistics(verdict):
    kp = generate_keypair("SAC_1", b"pow")
    body_key = hashlib.sha256(b"pow-body").digest()
    base = genesis(8, clock=0)
    attempts, times = [], []
    for i in range(100):
        txs = [Transaction(TxKind.AUDIT, f"audit {i}".encode() * 4, "SAC_1").signed(kp)]
        t = time.perf_counter()
        blk = mine_block(base, txs, body_key, 1000 + i)
        times.append(time.perf_counter() - t)
        attempts.append(blk.header.nonce + 1)
    mean = statistics.mean(attempts)
    median_ms = 1000 * statistics.median(times)
    ok = verdict(128 <= mean <= 512 and median_ms < 50,
                 f"mean attempts {mean:.1f} (expected 256), median mine {median_ms:.2f} ms, "
                 f"max {1000 * max(times):.2f} ms")
    assert ok


# 5 -----------------------------------------------------------------------------------------


def _negative_config() -> dict:
    cfg = court_scenario()
    cfg["intruders"] = [{"name": "mallory", "role": "court"}]
    req = cfg["script"][0]["request"]
    cfg["script"] = [
        {"action": "request", "user": "mallory", "via": "SAC_1", "request": req},
        {"action": "request", "user": "court", "via": "SAC_3", "request": {**req, "camera_ids": ["cam-7"]}},
        {"action": "request", "user": "court", "via": "SAC_2", "request": req},
        {"action": "present", "user": "court", "of": -1},
    ]
    return cfg


def _tapped_run(config: dict, seed: int):
    wire = []
    orig = network.Bus._post

    def tap(self, *a):
        ev = orig(self, *a)
        wire.append(ev)
        return ev

    network.Bus._post = tap
    try:
        return run_scenario(config, seed), wire
    finally:
        network.Bus._post = orig


def _leaks(result, wire) -> list[str]:
    court = result.clients["court"]
    site = result.network.sites["CloudNVR"]
    needles = [court.uid, "cam-1", "cam-7", "2021-03-14", "10.0.0.5:7000", "whole_context", "10:00"]
    needles += court.codes + list(site.store.mapping.entries)
    blob = b"".join(e.wire for e in wire)
    meta = json.dumps([[e.sender, e.receiver, e.kind] for e in wire])
    leaks = [s for s in needles if s.encode() in blob or s in meta]
    streams = b"".join(e.wire for e in wire if e.kind == "cipher-stream")
    for ref in site.store.mapping.entries:
        for f in site.store.record(ref).frames[::5]:
            px = f.tobytes()
            leaks += [f"pixels@{ref}"] if any(px[o:o + 16] in streams for o in range(0, len(px) - 16, 61)) else []
    leaks += [f"non-envelope kind {e.kind}" for e in wire if e.kind not in ("envelope", "cipher-stream")]
    return leaks


def test_criterion_5_protocol_end_to_end(verdict):
    r, wire = _tapped_run(court_scenario(), SEED)
    steps = {e["step"] for e in r.transcript if e["type"] in ("event", "step")}
    o = r.outcomes[0]
    served_ok = o["status"] == "granted" and o["frames"] == 60
    site = r.network.sites["CloudNVR"]
    (ref,) = site.store.mapping.entries
    stored = site.store.record(ref).frames[:60]
    got = r.clients["court"].received[0]
    served_ok &= len(got) == 60 and all(np.array_equal(a.pixels, ref_reconstruct(b.pixels, 50))
                                        for a, b in zip(got, stored))
    lengths = {len(n.chain) for n in r.network.nodes}
    walk_ok = steps == set(range(1, 11)) and lengths == {3} and r.network.replicas_identical()
    walk_ok &= all(validate_chain(n.chain) for n in r.network.nodes)
    leaks = _leaks(r, wire)

    n, nwire = _tapped_run(_negative_config(), SEED)
    got_neg = [(x["status"], x["step"], x.get("reason")) for x in n.outcomes]
    want_neg = [("denied", 1, "UnknownUser"), ("denied", 5, "CameraDenied"),
                ("granted", 10, None), ("denied", 10, "CodeAlreadyConsumed")]
    block_events = [e for e in n.transcript if e["type"] == "block"]
    neg_ok = got_neg == want_neg and len(n.chain) == 3 and len(block_events) == 2
    leaks += _leaks(n, nwire)

    ok = verdict(walk_ok and served_ok and neg_ok and not leaks,
                 f"steps {sorted(steps)[0]}..{sorted(steps)[-1]}, {len(r.network.nodes)} replicas x "
                 f"{lengths.pop()} blocks identical, 60/60 served frames match oracle={served_ok}; "
                 f"negatives {[g[2] for g in got_neg if g[0] == 'denied']}; tap leaks {leaks or 'none'} "
                 f"over {len(wire) + len(nwire)} messages")
    assert ok


# 6 -----------------------------------------------------------------------------------------


def test_criterion_6_envelope_suite(verdict):
    rnd = random.Random(SEED)
    parties = [generate_keypair(f"party-{i}", bytes([i]) * 8) for i in range(6)]
    mallory = generate_keypair("mallory", b"mallory")
    round_trips = 0
    for _ in range(10_000):
        a, b = rnd.sample(parties, 2)
        msg = rnd.randbytes(rnd.randrange(1, 300))
        env = seal(a, b.public, msg, ephemeral=rnd.randbytes(32))
        round_trips += envelope.open(b, a.public, Envelope.from_bytes(env.to_bytes())) == msg

    a, b = parties[0], parties[1]
    rejected = 0
    for _ in range(1000):
        raw = bytearray(seal(a, b.public, rnd.randbytes(rnd.randrange(1, 200)), ephemeral=rnd.randbytes(32)).to_bytes())
        bit = rnd.randrange(8 * len(raw))
        raw[bit // 8] ^= 1 << (bit % 8)
        try:
            envelope.open(b, a.public, Envelope.from_bytes(bytes(raw)))
        except SeprisError:
            rejected += 1

    payload = b"grant court access to cam-1"
    spliced = envelope._encrypt(envelope._inner(a.label, mallory.sign(payload), payload), b.public, bytes(range(32)))
    try:
        envelope.open(b, a.public, spliced)
        splice_ok = False
    except SignatureInvalid:
        splice_ok = True

    ok = verdict(round_trips == 10_000 and rejected == 1000 and splice_ok,
                 f"{round_trips}/10000 round trips, {rejected}/1000 bit flips rejected, "
                 f"splice forgery rejected={splice_ok}")
    assert ok


# 7 -----------------------------------------------------------------------------------------


def test_criterion_7_determinism(verdict, tmp_path, monkeypatch, capsys):
    a, b = run_scenario(_negative_config(), SEED), run_scenario(_negative_config(), SEED)
    in_memory = (a.transcript_bytes() == b.transcript_bytes() and a.chain.dumps() == b.chain.dumps()
                 and a.streams == b.streams and len(a.streams) >= 1)

    monkeypatch.setenv("SEPRIS_HOME", str(tmp_path / "home"))
    codes = [main(["sim", "run", "court", "--seed", str(SEED), "--out", str(tmp_path / d)]) for d in ("x", "y")]
    capsys.readouterr()
    files = sorted(p.relative_to(tmp_path / "x") for p in (tmp_path / "x").rglob("*") if p.is_file())
    differing = [str(f) for f in files if (tmp_path / "x" / f).read_bytes() != (tmp_path / "y" / f).read_bytes()]
    wanted = {"transcript.jsonl", "chain.jsonl", "streams/stream-000.sprc"}
    present = wanted <= {str(f) for f in files}

    ok = verdict(in_memory and codes == [0, 0] and present and not differing,
                 f"in-memory transcript/chain/{len(a.streams)} streams identical={in_memory}; "
                 f"CLI runs wrote {len(files)} files, differing: {differing or 'none'}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
