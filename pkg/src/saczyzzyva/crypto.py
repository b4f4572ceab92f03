"""Signatures and hashing shared by every protocol message.

Two signature schemes are available behind the same three functions:

* ``"test"``: keyed HMAC-SHA256 tags. Keys come from a seeded generator so a
  whole simulation is reproducible from one seed. Verification goes through a
  process-local registry that maps public keys to their MAC secret, which plays
  the role of a PKI that everybody trusts.
* ``"ed25519"``: real signatures from ``cryptography``. Key generation is also
  seedable (Ed25519 signing is deterministic), but it is ~50x slower, so the
  simulator uses it only when asked to.

Public keys and secrets carry a one-byte scheme tag so ``verify`` can dispatch
without extra context.
"""

from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

DIGEST_SIZE = 32

_TEST = b"\x01"
_ED25519 = b"\x02"

# public key -> MAC secret, for the "test" scheme only
_mac_registry: dict[bytes, bytes] = {}


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    secret: bytes

    def __repr__(self) -> str:
        return f"KeyPair(public_key={self.public_key[:9].hex()}...)"


def digest(message: bytes) -> bytes:
    """Fixed-length (32 byte) SHA-256 digest."""
    return hashlib.sha256(message).digest()


def generate_keypair(rng: random.Random | None = None, scheme: str = "test") -> KeyPair:
    rng = rng or random.Random()
    seed = rng.getrandbits(256).to_bytes(32, "big")
    if scheme == "test":
        public = _TEST + hashlib.sha256(b"saczyzzyva/test-pk/" + seed).digest()
        _mac_registry[public] = seed
        return KeyPair(public, _TEST + seed)
    if scheme == "ed25519":
        sk = Ed25519PrivateKey.from_private_bytes(seed)
        raw = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return KeyPair(_ED25519 + raw, _ED25519 + seed)
    raise ValueError(f"unknown signature scheme {scheme!r}")


def sign(secret: bytes, message: bytes) -> bytes:
    tag, key = secret[:1], secret[1:]
    if tag == _TEST:
        return hmac.new(key, message, hashlib.sha256).digest()
    if tag == _ED25519:
        return Ed25519PrivateKey.from_private_bytes(key).sign(message)
    raise ValueError("malformed secret")


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    tag, key = public_key[:1], public_key[1:]
    if tag == _TEST:
        secret = _mac_registry.get(public_key)
        if secret is None or len(signature) != DIGEST_SIZE:
            return False
        expected = hmac.new(secret, message, hashlib.sha256).digest()
        return hmac.compare_digest(expected, signature)
    if tag == _ED25519:
        try:
            Ed25519PublicKey.from_public_bytes(key).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True
    return False
