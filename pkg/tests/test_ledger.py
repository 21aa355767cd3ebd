import hashlib
import random
import statistics
import time

import pytest
from hypothesis import given, settings, strategies as st

from sepris import ledger
from sepris.envelope import generate_keypair
from sepris.errors import AuthTagMismatch, FormatError, InvalidTransaction, LedgerError, UnknownBodyKey
from sepris.ledger import (
    Block,
    BlockHeader,
    Chain,
    Transaction,
    TxKind,
    decrypt_body,
    genesis,
    merkle_root,
    mine_block,
    target_for,
    validate_block,
    validate_chain,
)

BODY_KEY = hashlib.sha256(b"body-key").digest()
ALICE = generate_keypair("TLAlice", b"alice-seed")
REGISTRY = {"TLAlice": ALICE.public}


def H(b):
    return hashlib.sha256(b).digest()


def tx(i=0, kind=TxKind.REQUEST):
    return Transaction(kind, f"payload-{i}".encode() * 5, "TLAlice").signed(ALICE)


def build(n_blocks, difficulty=0, txs_per_block=2):
    chain = genesis(difficulty, clock=1_600_000_000)
    for h in range(1, n_blocks):
        blk = mine_block(chain, [tx(h * 10 + j) for j in range(txs_per_block)], BODY_KEY,
                         1_600_000_000 + h, registry=REGISTRY)
        chain.append(blk)
    return chain


@pytest.fixture(scope="module")
def chain10():
    return build(10, difficulty=8)


# -- header / target --------------------------------------------------------


def test_header_is_110_bytes_and_round_trips():
    h = BlockHeader(1, bytes(range(32)), 123456789, 0xDEADBEEF, b"\x11" * 32, target_for(8))
    raw = h.to_bytes()
    assert len(raw) == 110
    assert BlockHeader.from_bytes(raw) == h
    assert h.hash() == H(raw)


def test_target_for():
    assert target_for(0) == b"\xff" * 32
    assert target_for(8) == b"\x00" + b"\xff" * 31
    assert target_for(12) == b"\x00\x0f" + b"\xff" * 30
    with pytest.raises(ValueError):
        target_for(33)


# -- genesis ----------------------------------------------------------------


def test_genesis_shape():
    c = genesis(0)
    assert len(c.blocks) == 1
    g = c.blocks[0]
    assert g.header.prev_hash == bytes(32)
    assert g.body_ciphertext == b""
    assert validate_chain(c)


def test_genesis_deterministic_with_pinned_clock():
    a, b = genesis(8, clock=42), genesis(8, clock=42)
    assert a.tip.hash() == b.tip.hash()
    assert a.tip.hash()[0] == 0


# -- merkle -----------------------------------------------------------------


def test_merkle_single_chunk_hand_computed():
    leaf = H(b"\x00" + b"abc")
    assert merkle_root([b"abc"]) == H(b"\x01" + leaf + leaf)


def test_merkle_empty_is_leaf_hash_of_empty_string():
    assert merkle_root([]) == H(b"\x00")


def test_merkle_three_leaves_hand_computed():
    a, b, c = (H(b"\x00" + x) for x in (b"a", b"b", b"c"))
    left, right = H(b"\x01" + a + b), H(b"\x01" + c + c)
    assert merkle_root([b"a", b"b", b"c"]) == H(b"\x01" + left + right)


def test_merkle_order_sensitive():
    assert merkle_root([b"a", b"b"]) != merkle_root([b"b", b"a"])


def test_merkle_leaf_and_node_domains_differ():
    # a leaf equal to the concatenation of two child hashes must not collide
    a, b = H(b"\x00a"), H(b"\x00b")
    assert merkle_root([b"a", b"b"]) != merkle_root([b"\x01" + a + b])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.binary(min_size=0, max_size=40), min_size=1, max_size=12), st.data())
def test_merkle_avalanche_on_single_chunk_change(chunks, data):
    i = data.draw(st.integers(0, len(chunks) - 1))
    new = data.draw(st.binary(max_size=40).filter(lambda b: b != chunks[i]))
    changed = list(chunks)
    changed[i] = new
    assert merkle_root(changed) != merkle_root(chunks)


# -- mining -----------------------------------------------------------------


def test_difficulty_zero_accepts_nonce_zero():
    c = genesis(0, clock=5)
    blk = mine_block(c, [tx()], BODY_KEY, 6)
    assert blk.header.nonce == 0


def test_difficulty_8_first_byte_zero_and_lowest_nonce():
    c = genesis(8, clock=5)
    blk = mine_block(c, [tx()], BODY_KEY, 6)
    assert blk.hash()[0] == 0
    # brute-force: no lower nonce qualifies
    h = blk.header
    for n in range(h.nonce):
        probe = BlockHeader(h.version, h.prev_hash, h.timestamp, n, h.body_root_hash, h.target_hash)
        assert probe.hash()[0] != 0


def test_mining_is_deterministic():
    c1, c2 = genesis(8, clock=7), genesis(8, clock=7)
    b1 = mine_block(c1, [tx(1), tx(2)], BODY_KEY, 9)
    b2 = mine_block(c2, [tx(1), tx(2)], BODY_KEY, 9)
    assert b1 == b2


def test_invalid_transaction_rejected():
    bad = Transaction(TxKind.AUDIT, b"x", "TLAlice", b"\x00" * 64)
    with pytest.raises(InvalidTransaction):
        mine_block(genesis(0), [bad], BODY_KEY, 1, registry=REGISTRY)
    stranger = Transaction(TxKind.AUDIT, b"x", "TLMallory").signed(ALICE)
    with pytest.raises(InvalidTransaction):
        mine_block(genesis(0), [stranger], BODY_KEY, 1, registry=REGISTRY)


def test_lagging_clock_does_not_regress_timestamp():
    c = genesis(0, clock=100)
    blk = mine_block(c, [tx()], BODY_KEY, 50)
    assert blk.header.timestamp == 100
    assert validate_block(c.tip, blk, 0)


def test_nonce_exhaustion_bumps_timestamp(monkeypatch):
    monkeypatch.setattr(ledger, "NONCE_SPACE", 4)
    blk = ledger._mine(bytes(32), 11, b"ct", "k", 10)  # 4 nonces rarely reach 10 bits
    assert blk.header.timestamp > 11
    assert blk.header.nonce < 4
    assert int.from_bytes(blk.hash(), "big") <= int.from_bytes(target_for(10), "big")


def test_pow_mean_attempts_at_difficulty_8():
    c = genesis(8, clock=0)
    attempts = [mine_block(c, [tx(i)], BODY_KEY, 1000 + i).header.nonce + 1 for i in range(100)]
    assert 128 <= statistics.mean(attempts) <= 512


# -- validation -------------------------------------------------------------


def test_fresh_block_valid_and_chain_valid(chain10):
    assert len(chain10) == 10
    for i in range(1, 10):
        assert validate_block(chain10.blocks[i - 1], chain10.blocks[i], 8)
    assert validate_chain(chain10)


def _replace(block, **kw):
    h = block.header
    fields = dict(version=h.version, prev_hash=h.prev_hash, timestamp=h.timestamp, nonce=h.nonce,
                  body_root_hash=h.body_root_hash, target_hash=h.target_hash)
    body = kw.pop("body_ciphertext", block.body_ciphertext)
    fields.update(kw)
    return Block(BlockHeader(**fields), body, block.body_key_id)


def test_flipped_body_byte_is_merkle_mismatch(chain10):
    b = chain10.blocks[3]
    ct = bytearray(b.body_ciphertext)
    ct[5] ^= 0x40
    v = validate_block(chain10.blocks[2], _replace(b, body_ciphertext=bytes(ct)), 8)
    assert not v and v.reason == "MerkleMismatch"


def test_decremented_nonce_is_pow_invalid():
    rng = random.Random(3)
    hits = 0
    for trial in range(20):
        c = genesis(8, clock=trial)
        blk = mine_block(c, [tx(rng.randrange(10**6))], BODY_KEY, trial + 1)
        if blk.header.nonce == 0:
            continue
        v = validate_block(c.tip, _replace(blk, nonce=blk.header.nonce - 1), 8)
        assert not v and v.reason == "PowInvalid"
        hits += 1
    assert hits >= 15


def test_wrong_prev_link(chain10):
    v = validate_block(chain10.blocks[1], chain10.blocks[3], 8)
    assert v.reason == "PrevLinkMismatch"


def test_timestamp_regression():
    c = genesis(0, clock=100)
    blk = ledger._mine(c.tip.hash(), 99, b"", "k", 0)
    assert validate_block(c.tip, blk, 0).reason == "TimestampRegression"


def test_target_and_version_checks(chain10):
    b = chain10.blocks[2]
    assert validate_block(chain10.blocks[1], _replace(b, version=2), 8).reason == "VersionInvalid"
    assert validate_block(chain10.blocks[1], b, 4).reason == "TargetMismatch"


def test_reordered_blocks_invalid(chain10):
    blocks = list(chain10.blocks)
    blocks[4], blocks[5] = blocks[5], blocks[4]
    v = validate_chain(Chain(blocks, 8))
    assert not v and v.reason == "PrevLinkMismatch" and v.index == 4


def test_append_refuses_invalid_block(chain10):
    c = Chain(list(chain10.blocks[:3]), 8)
    with pytest.raises(LedgerError):
        c.append(chain10.blocks[5])
    assert len(c) == 3


def test_chain_tamper_fuzz():
    # difficulty 16 so a flip in the tip's nonce/timestamp does not land on another valid PoW
    chain = build(10, difficulty=16)
    assert validate_chain(chain)
    raws = [b.to_bytes() for b in chain.blocks]
    rng = random.Random(1234)
    detected = 0
    for _ in range(300):
        i = rng.randrange(len(raws))
        raw = bytearray(raws[i])
        raw[rng.randrange(len(raw))] ^= rng.randrange(1, 256)
        blocks = list(chain.blocks)
        blocks[i] = Block.from_bytes(bytes(raw))
        detected += not validate_chain(Chain(blocks, 16))
    assert detected == 300


def test_validation_needs_no_body_keys(chain10):
    # the validator never sees a keystore; decryption availability is irrelevant
    assert validate_chain(Chain(list(chain10.blocks), 8))


# -- bodies -----------------------------------------------------------------


def test_decrypt_round_trip(chain10):
    store = {ledger.key_id_for(BODY_KEY): BODY_KEY}
    got = decrypt_body(chain10.blocks[4], store, height=4)
    assert got == [tx(40), tx(41)]
    assert all(t.verify(REGISTRY) for t in got)
    assert decrypt_body(chain10.blocks[0], store, height=0) == []


def test_decrypt_unknown_key(chain10):
    with pytest.raises(UnknownBodyKey):
        decrypt_body(chain10.blocks[2], {}, height=2)


def test_decrypt_tampered(chain10):
    store = {ledger.key_id_for(BODY_KEY): BODY_KEY}
    b = chain10.blocks[2]
    ct = bytearray(b.body_ciphertext)
    ct[-1] ^= 1
    with pytest.raises(AuthTagMismatch):
        decrypt_body(_replace(b, body_ciphertext=bytes(ct)), store, height=2)
    with pytest.raises(AuthTagMismatch):
        decrypt_body(b, store, height=3)  # wrong position


def test_body_hides_plaintext(chain10):
    for b in chain10.blocks[1:]:
        assert b"payload" not in b.body_ciphertext
        assert b"TLAlice" not in b.body_ciphertext


def test_chain_transactions(chain10):
    store = {ledger.key_id_for(BODY_KEY): BODY_KEY}
    txs = ledger.chain_transactions(chain10, store)
    assert len(txs) == 18
    assert txs[0][0] == 1


# -- chain file -------------------------------------------------------------


def test_chain_file_round_trip(tmp_path, chain10):
    p = tmp_path / "chain.jsonl"
    chain10.save(p)
    lines = p.read_text().splitlines()
    assert len(lines) == 11
    import json
    head = json.loads(lines[0])
    assert head == {"format": "sepris-chain", "version": 1, "hash": "sha256", "difficulty_bits": 8}
    loaded = Chain.load(p)
    assert loaded.blocks == chain10.blocks
    assert loaded.dumps() == chain10.dumps()
    assert validate_chain(loaded)


def test_chain_file_rejects_garbage():
    with pytest.raises(FormatError):
        Chain.loads("not json\n")
    with pytest.raises(FormatError):
        Chain.loads('{"format": "sepris-chain", "version": 1, "hash": "md5", "difficulty_bits": 0}\n')


def test_tampered_chain_file_detected(tmp_path, chain10):
    text = chain10.dumps()
    lines = text.splitlines()
    import json
    d = json.loads(lines[6])
    d["timestamp"] = format(int(d["timestamp"], 16) + 1, "016x")
    lines[6] = json.dumps(d, sort_keys=True)
    v = validate_chain(Chain.loads("\n".join(lines)))
    assert not v and v.index in (5, 6)


def test_block_bytes_round_trip(chain10):
    for b in chain10.blocks:
        assert Block.from_bytes(b.to_bytes()) == b


def test_mining_speed_difficulty_8():
    c = genesis(8, clock=1)
    t = time.perf_counter()
    for i in range(10):
        c.append(mine_block(c, [tx(i)], BODY_KEY, 2 + i))
    assert (time.perf_counter() - t) / 10 < 0.05
