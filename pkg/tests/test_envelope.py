import random

import pytest

from sepris import envelope
from sepris.envelope import Envelope, generate_keypair, open_from, seal
from sepris.errors import AuthTagMismatch, EntropyError, FormatError, SignatureInvalid, WrongRecipient

SAMPLE_UID = b"court322874352017640022980892363199962446587"


@pytest.fixture(scope="module")
def parties():
    return {name: generate_keypair(name, b"seed-" + name.encode()) for name in ("court", "SAC_2", "SAC_5", "mallory")}


class TestKeys:
    def test_deterministic(self):
        assert generate_keypair("court", b"abc") == generate_keypair("court", b"abc")
        assert generate_keypair("court", b"abc").public == generate_keypair("court", b"abc").public

    def test_distinct_seeds(self):
        points = {generate_keypair("u", i.to_bytes(4, "big")).public.kex for i in range(10_000)}
        assert len(points) == 10_000

    def test_empty_seed(self):
        with pytest.raises(EntropyError):
            generate_keypair("court", b"")

    def test_key_file_round_trip(self, tmp_path, parties):
        priv, pub = envelope.write_keypair(parties["court"], tmp_path)
        assert envelope.read_key(priv) == parties["court"]
        assert envelope.read_key(pub) == parties["court"].public
        assert priv.read_bytes()[:4] == b"SPRK"

    def test_bad_key_file(self):
        with pytest.raises(FormatError):
            envelope.decode_key(b"NOPE" + bytes(40))


class TestSealOpen:
    def test_round_trip(self, parties):
        env = seal(parties["SAC_2"], parties["court"].public, b"hello")
        assert envelope.open(parties["court"], parties["SAC_2"].public, env) == b"hello"

    def test_sample_uid(self, parties):
        env = seal(parties["SAC_2"], parties["court"].public, SAMPLE_UID)
        assert envelope.open(parties["court"], parties["SAC_2"].public, env).decode() == SAMPLE_UID.decode()

    def test_randomized(self, parties):
        a = seal(parties["court"], parties["SAC_2"].public, b"m")
        b = seal(parties["court"], parties["SAC_2"].public, b"m")
        assert a.ciphertext != b.ciphertext
        for env in (a, b):
            assert envelope.open(parties["SAC_2"], parties["court"].public, env) == b"m"

    def test_pinned_ephemeral_is_deterministic(self, parties):
        eph = bytes(range(32))
        a = seal(parties["court"], parties["SAC_2"].public, b"m", ephemeral=eph)
        b = seal(parties["court"], parties["SAC_2"].public, b"m", ephemeral=eph)
        assert a == b

    def test_flipped_ciphertext_bit(self, parties):
        env = seal(parties["court"], parties["SAC_2"].public, b"request")
        ct = bytearray(env.ciphertext)
        ct[3] ^= 0x10
        with pytest.raises(AuthTagMismatch):
            envelope.open(parties["SAC_2"], parties["court"].public, Envelope(env.recipient_hint, env.encapsulation, bytes(ct), env.auth_tag))

    def test_third_party(self, parties):
        env = seal(parties["court"], parties["SAC_2"].public, b"request")
        with pytest.raises(WrongRecipient):
            envelope.open(parties["mallory"], parties["court"].public, env)

    def test_wrong_expected_sender(self, parties):
        env = seal(parties["mallory"], parties["SAC_2"].public, b"request")
        with pytest.raises(SignatureInvalid):
            envelope.open(parties["SAC_2"], parties["court"].public, env)

    def test_signature_splice(self, parties):
        # mallory's valid signature over the same payload, presented under court's name
        payload = b"grant me camera 7"
        spliced = envelope._inner("court", parties["mallory"].sign(payload), payload)
        env = envelope._encrypt(spliced, parties["SAC_2"].public, bytes(range(32)))
        with pytest.raises(SignatureInvalid):
            envelope.open(parties["SAC_2"], parties["court"].public, env)

    def test_equal_length_payloads(self, parties):
        a = seal(parties["court"], parties["SAC_2"].public, b"A" * 50)
        b = seal(parties["court"], parties["SAC_2"].public, b"B" * 50)
        assert len(a.to_bytes()) == len(b.to_bytes())

    def test_large_payload(self, parties):
        m = random.Random(1).randbytes(1 << 20)
        env = seal(parties["court"], parties["SAC_2"].public, m)
        assert envelope.open(parties["SAC_2"], parties["court"].public, env) == m

    def test_empty_payload(self, parties):
        with pytest.raises(ValueError):
            seal(parties["court"], parties["SAC_2"].public, b"")

    def test_wire_round_trip(self, parties):
        env = seal(parties["court"], parties["SAC_2"].public, b"wire")
        raw = env.to_bytes()
        assert int.from_bytes(raw[:4], "little") == 16
        assert Envelope.from_bytes(raw) == env
        with pytest.raises(FormatError):
            Envelope.from_bytes(raw[:-1])

    def test_open_from_registry(self, parties):
        known = {p.label: p.public for p in (parties["SAC_2"], parties["SAC_5"])}
        env = seal(parties["SAC_5"], parties["court"].public, b"code")
        assert open_from(parties["court"], known, env) == ("SAC_5", b"code")
        with pytest.raises(SignatureInvalid):
            open_from(parties["court"], known, seal(parties["mallory"], parties["court"].public, b"code"))
