import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saczyzzyva import crypto


@pytest.fixture(params=["test", "ed25519"])
def keys(request):
    rng = random.Random(7)
    return crypto.generate_keypair(rng, request.param), crypto.generate_keypair(rng, request.param)


def test_sign_verify_round_trip(keys):
    kp, other = keys
    sig = crypto.sign(kp.secret, b"hello")
    assert crypto.verify(kp.public_key, b"hello", sig)
    assert not crypto.verify(kp.public_key, b"hellO", sig)
    assert not crypto.verify(other.public_key, b"hello", sig)


def test_digest_is_deterministic_and_fixed_length():
    assert crypto.digest(b"abc") == crypto.digest(b"abc")
    assert len(crypto.digest(b"")) == crypto.DIGEST_SIZE == 32
    # SHA-256 of the empty string
    assert crypto.digest(b"").hex().startswith("e3b0c44298fc1c14")


def test_trailing_zero_changes_digest():
    rng = random.Random(1)
    for _ in range(10_000):
        m = rng.randbytes(rng.randint(0, 64))
        assert crypto.digest(m) != crypto.digest(m + b"\x00")


def test_keys_are_reproducible_from_seed():
    a = crypto.generate_keypair(random.Random(3))
    b = crypto.generate_keypair(random.Random(3))
    assert a == b
    assert crypto.generate_keypair(random.Random(4)) != a


def test_unknown_scheme():
    with pytest.raises(ValueError):
        crypto.generate_keypair(random.Random(0), "rsa")


def test_ten_thousand_random_pairs_round_trip_and_reject_mutations():
    rng = random.Random(11)
    keys = [crypto.generate_keypair(rng) for _ in range(50)]
    for i in range(10_000):
        kp = keys[i % len(keys)]
        m = rng.randbytes(rng.randint(1, 48))
        sig = crypto.sign(kp.secret, m)
        assert crypto.verify(kp.public_key, m, sig)
        j = rng.randrange(len(m))
        bad_m = m[:j] + bytes([m[j] ^ (1 + rng.randrange(255))]) + m[j + 1 :]
        assert not crypto.verify(kp.public_key, bad_m, sig)
        k = rng.randrange(len(sig))
        bad_sig = sig[:k] + bytes([sig[k] ^ (1 + rng.randrange(255))]) + sig[k + 1 :]
        assert not crypto.verify(kp.public_key, m, bad_sig)


@settings(max_examples=60, deadline=None)
@given(st.binary(min_size=1, max_size=64), st.integers(0, 2**32), st.data())
def test_ed25519_rejects_single_byte_mutation(message, seed, data):
    kp = crypto.generate_keypair(random.Random(seed), "ed25519")
    sig = crypto.sign(kp.secret, message)
    assert crypto.verify(kp.public_key, message, sig)
    i = data.draw(st.integers(0, len(message) - 1))
    flip = data.draw(st.integers(1, 255))
    mutated = message[:i] + bytes([message[i] ^ flip]) + message[i + 1 :]
    assert not crypto.verify(kp.public_key, mutated, sig)
