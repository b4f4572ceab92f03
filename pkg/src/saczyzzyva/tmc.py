"""Simulated trusted monotonic counter.

A :class:`TrustedCounter` is the trusted part of one replica. It owns a
long-lived identity key (provisioned in the genesis configuration, standing in
for remote attestation) and hands out counter instances. Each instance signs
``(counter value, message digest)`` pairs with its own key, incrementing the
counter on every call, so one counter value can never be bound to two
different digests.

The trusted part fails by crashing only. State is volatile: a crash destroys
every instance, and after recovery only fresh instances can be created.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

from . import crypto
from .encoding import encode, wire


class NoTrustedComponent(Exception):
    """The replica has no trusted monotonic counter."""


class Crashed(Exception):
    """The trusted part has crashed, or the instance was lost in a crash."""


@wire(1)
@dataclass(frozen=True)
class OrderingCertificate:
    counter_value: int
    message_digest: bytes
    signature: bytes

    @cached_property
    def encoded(self) -> bytes:
        return encode(self)


@wire(2)
@dataclass(frozen=True)
class Attestation:
    """``<pk_instance>`` signed by the identity key of a trusted component."""

    instance_pk: bytes
    identity_pk: bytes
    signature: bytes

    @cached_property
    def encoded(self) -> bytes:
        return encode(self)


def certificate_payload(counter_value: int, message_digest: bytes) -> bytes:
    return encode(("ORDER", counter_value, message_digest))


def attestation_payload(instance_pk: bytes) -> bytes:
    return encode(("ATTEST", instance_pk))


@dataclass(eq=False)
class CounterInstance:
    instance_key_pair: crypto.KeyPair = field(repr=False)
    parent_key: bytes
    owner: TrustedCounter = field(repr=False)
    counter_value: int = 0
    destroyed: bool = False

    @property
    def public_key(self) -> bytes:
        return self.instance_key_pair.public_key

    def increment(self, message_digest: bytes) -> OrderingCertificate:
        return increment(self, message_digest)


IssueHook = Callable[[CounterInstance, OrderingCertificate], None]


class TrustedCounter:
    """The trusted component of one replica."""

    def __init__(self, identity: crypto.KeyPair, rng: random.Random, scheme: str = "test"):
        self._identity = identity
        self._rng = rng
        self._scheme = scheme
        self._instances: list[CounterInstance] = []
        self.crashed = False
        self.on_issue: IssueHook | None = None

    @property
    def identity_pk(self) -> bytes:
        return self._identity.public_key

    @property
    def instances(self) -> tuple[CounterInstance, ...]:
        return tuple(self._instances)

    def crash(self) -> None:
        self.crashed = True
        for inst in self._instances:
            inst.destroyed = True

    def recover(self) -> None:
        self.crashed = False

    def _attest(self, instance_pk: bytes) -> Attestation:
        sig = crypto.sign(self._identity.secret, attestation_payload(instance_pk))
        return Attestation(instance_pk, self.identity_pk, sig)


def init(tmc: TrustedCounter | None) -> tuple[CounterInstance, Attestation]:
    """Create a fresh counter instance (counter 0) and its attested public key."""
    if tmc is None:
        raise NoTrustedComponent("replica has no trusted monotonic counter")
    if tmc.crashed:
        raise Crashed("trusted component is crashed")
    keys = crypto.generate_keypair(tmc._rng, tmc._scheme)
    inst = CounterInstance(keys, tmc.identity_pk, tmc)
    tmc._instances.append(inst)
    return inst, tmc._attest(keys.public_key)


def increment(instance: CounterInstance, message_digest: bytes) -> OrderingCertificate:
    if instance.owner.crashed or instance.destroyed:
        raise Crashed("counter instance is unavailable")
    instance.counter_value += 1
    value = instance.counter_value
    sig = crypto.sign(instance.instance_key_pair.secret, certificate_payload(value, message_digest))
    cert = OrderingCertificate(value, message_digest, sig)
    if instance.owner.on_issue is not None:
        instance.owner.on_issue(instance, cert)
    return cert


def verify_certificate(instance_pk: bytes, cert: OrderingCertificate) -> bool:
    if cert.counter_value < 1 or len(cert.message_digest) != crypto.DIGEST_SIZE:
        return False
    return crypto.verify(
        instance_pk, certificate_payload(cert.counter_value, cert.message_digest), cert.signature
    )


def verify_attestation(identity_pk: bytes, attestation: Attestation) -> bool:
    if attestation.identity_pk != identity_pk:
        return False
    return crypto.verify(
        identity_pk, attestation_payload(attestation.instance_pk), attestation.signature
    )


class SignedSequencer:
    """Primary-signed sequence numbers, used by the Zyzzyva baselines.

    Same shape as a counter instance, but the "counter key" is the primary's
    ordinary replica key, so a faulty primary can sign any number twice.
    """

    def __init__(self, keys: crypto.KeyPair):
        self._keys = keys
        self.counter_value = 0

    @property
    def public_key(self) -> bytes:
        return self._keys.public_key

    def increment(self, message_digest: bytes) -> OrderingCertificate:
        self.counter_value += 1
        return self.certify(self.counter_value, message_digest)

    def certify(self, counter_value: int, message_digest: bytes) -> OrderingCertificate:
        sig = crypto.sign(self._keys.secret, certificate_payload(counter_value, message_digest))
        return OrderingCertificate(counter_value, message_digest, sig)
