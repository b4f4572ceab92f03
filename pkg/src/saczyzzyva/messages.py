"""Protocol messages, certificates and their validation.

All messages are frozen dataclasses with a canonical encoding (see
:mod:`saczyzzyva.encoding`). Signed messages keep their signature in a final
``signature`` field; the signed payload is the encoding of every other field.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Union

from . import crypto
from .encoding import encode, wire, wire_code
from .tmc import Attestation, OrderingCertificate, verify_attestation, verify_certificate
from .variants import ProtocolVariant, Thresholds, thresholds

Address = Union[int, str]

GENESIS_HISTORY = crypto.digest(b"saczyzzyva/genesis-history")


class Message:
    """Mixin giving wire messages a cached encoding, digest and signing payload."""

    @cached_property
    def encoded(self) -> bytes:
        return encode(self)

    @cached_property
    def digest(self) -> bytes:
        return crypto.digest(self.encoded)

    @cached_property
    def signing_bytes(self) -> bytes:
        values = [wire_code(type(self))]
        values += [getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "signature"]
        return encode(values)

    @property
    def kind(self) -> str:
        return KIND_NAMES[type(self)]


def signed(msg: Any, secret: bytes) -> Any:
    """Return ``msg`` with its signature field filled in."""
    return dataclasses.replace(msg, signature=crypto.sign(secret, msg.signing_bytes))


# ---------------------------------------------------------------------------
# client / agreement messages


@wire(10)
@dataclass(frozen=True)
class RequestMsg(Message):
    op: bytes
    client: str
    request_id: int
    signature: bytes = b""


@wire(11)
@dataclass(frozen=True)
class OrderRequestMsg(Message):
    view: int
    cert: OrderingCertificate
    request: RequestMsg
    signature: bytes = b""

    @property
    def counter(self) -> int:
        return self.cert.counter_value


@wire(12)
@dataclass(frozen=True)
class ReplyMsg(Message):
    order_request: OrderRequestMsg
    response: bytes
    history_length: int
    history_digest: bytes
    replica_id: int
    signature: bytes = b""

    @property
    def match_key(self) -> tuple:
        """Replies count together only when all of these agree."""
        return (
            self.order_request.view,
            self.order_request.digest,
            self.response,
            self.history_length,
            self.history_digest,
        )


@wire(13)
@dataclass(frozen=True)
class FillHoleMsg(Message):
    view: int
    index: int


# ---------------------------------------------------------------------------
# view change


@wire(14)
@dataclass(frozen=True)
class ReqViewChangeMsg(Message):
    view: int
    replica_id: int
    signature: bytes = b""


@wire(20)
@dataclass(frozen=True)
class GenesisCertificate(Message):
    """Stands in for the view-0 certificate; it is checked against the genesis config."""

    counter_pk: bytes


@wire(21)
@dataclass(frozen=True)
class ViewConfirmMsg(Message):
    view: int
    replica_id: int
    new_view_digest: bytes
    # the starting point computed from the confirmed NEW-VIEW, so a certificate
    # of matching confirms can stand on its own
    counter_pk: bytes
    start_length: int
    start_digest: bytes
    signature: bytes = b""

    @property
    def match_key(self) -> tuple:
        return (self.view, self.new_view_digest, self.counter_pk, self.start_length, self.start_digest)


@wire(22)
@dataclass(frozen=True)
class ViewCertificate(Message):
    view: int
    confirms: tuple[ViewConfirmMsg, ...]


@wire(23)
@dataclass(frozen=True)
class CheckpointMsg(Message):
    view_certificate: GenesisCertificate | ViewCertificate
    last_request_number: int
    state_digest: bytes
    history_length: int
    history_digest: bytes
    replica_id: int
    signature: bytes = b""

    @property
    def view(self) -> int:
        return certificate_view(self.view_certificate)

    @property
    def match_key(self) -> tuple:
        return (
            self.view_certificate.digest,
            self.last_request_number,
            self.state_digest,
            self.history_length,
            self.history_digest,
        )


@wire(24)
@dataclass(frozen=True)
class CheckpointCertificate(Message):
    checkpoints: tuple[CheckpointMsg, ...]


BaseCertificate = Union[GenesisCertificate, ViewCertificate, CheckpointCertificate]


@wire(15)
@dataclass(frozen=True)
class ViewChangeMsg(Message):
    new_view: int
    replica_id: int
    base: BaseCertificate
    executed: tuple[OrderRequestMsg, ...]
    evidence: tuple[ReqViewChangeMsg, ...]
    # Zyzzyva baselines: the longest commit certificate acked in the base view
    committed: "CommitCertificate | None" = None
    signature: bytes = b""


@wire(16)
@dataclass(frozen=True)
class NewViewMsg(Message):
    view: int
    counter_attestation: Attestation
    view_changes: tuple[ViewChangeMsg, ...]
    signature: bytes = b""


# ---------------------------------------------------------------------------
# Zyzzyva commit phase, state transfer


@wire(30)
@dataclass(frozen=True)
class CommitCertificate(Message):
    replies: tuple[ReplyMsg, ...]


@wire(31)
@dataclass(frozen=True)
class CommitMsg(Message):
    client: str
    certificate: CommitCertificate
    signature: bytes = b""


@wire(32)
@dataclass(frozen=True)
class LocalCommitMsg(Message):
    view: int
    client: str
    request_id: int
    history_length: int
    history_digest: bytes
    replica_id: int
    signature: bytes = b""


@wire(40)
@dataclass(frozen=True)
class HistoryEntry(Message):
    order_request: OrderRequestMsg
    result: bytes

    @property
    def view(self) -> int:
        return self.order_request.view

    @property
    def counter(self) -> int:
        return self.order_request.counter

    @property
    def request(self) -> RequestMsg:
        return self.order_request.request


@wire(33)
@dataclass(frozen=True)
class StateRequestMsg(Message):
    history_length: int
    history_digest: bytes


@wire(34)
@dataclass(frozen=True)
class StateResponseMsg(Message):
    entries: tuple[HistoryEntry, ...]
    replica_id: int


@wire(35)
@dataclass(frozen=True)
class MisbehaviorProofMsg(Message):
    """Two order-requests the primary signed for the same slot of one view."""

    first: OrderRequestMsg
    second: OrderRequestMsg


KIND_NAMES: dict[type, str] = {
    RequestMsg: "REQUEST",
    OrderRequestMsg: "ORDER-REQUEST",
    ReplyMsg: "REPLY",
    FillHoleMsg: "FILL-HOLE",
    ReqViewChangeMsg: "REQ-VIEW-CHANGE",
    ViewChangeMsg: "VIEW-CHANGE",
    NewViewMsg: "NEW-VIEW",
    ViewConfirmMsg: "VIEW-CONFIRM",
    CheckpointMsg: "CHECKPOINT",
    CommitMsg: "COMMIT",
    LocalCommitMsg: "LOCAL-COMMIT",
    StateRequestMsg: "STATE-REQUEST",
    StateResponseMsg: "STATE-RESPONSE",
    MisbehaviorProofMsg: "PROOF-OF-MISBEHAVIOR",
    GenesisCertificate: "GENESIS-CERT",
    ViewCertificate: "VIEW-CERT",
    CheckpointCertificate: "CHECKPOINT-CERT",
    CommitCertificate: "COMMIT-CERT",
    HistoryEntry: "HISTORY-ENTRY",
}

PROTOCOL_MESSAGES = (
    RequestMsg,
    OrderRequestMsg,
    ReplyMsg,
    FillHoleMsg,
    ReqViewChangeMsg,
    ViewChangeMsg,
    NewViewMsg,
    ViewConfirmMsg,
    CheckpointMsg,
)


# ---------------------------------------------------------------------------
# history chain


def chain_step(prev: bytes, view: int, counter: int, request_digest: bytes) -> bytes:
    """Digest of a history extended by one ordered request."""
    return crypto.digest(prev + encode((view, counter, request_digest)))


def chain(prev: bytes, entries: Any) -> bytes:
    for e in entries:
        prev = chain_step(prev, e.view, e.counter, e.request.digest)
    return prev


# ---------------------------------------------------------------------------
# genesis configuration


@dataclass(eq=False)
class Genesis:
    """Keys and parameters every correct party knows at start-up."""

    variant: ProtocolVariant
    f: int
    n: int
    n_tmc: int
    replica_keys: tuple[bytes, ...]
    tmc_keys: tuple[bytes | None, ...]
    client_keys: dict[str, bytes]
    genesis_counter_pk: bytes
    checkpoint_interval: int = 10
    window: int = 2
    limits: Thresholds = field(init=False)
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        self.limits = thresholds(self.variant, self.f, self.n)

    @property
    def uses_tmc(self) -> bool:
        return self.variant is ProtocolVariant.SACZYZZYVA

    def primary(self, view: int) -> int:
        return view % self.n_tmc

    def replica_key(self, replica_id: Any) -> bytes | None:
        if isinstance(replica_id, int) and not isinstance(replica_id, bool) and 0 <= replica_id < self.n:
            return self.replica_keys[replica_id]
        return None


# ---------------------------------------------------------------------------
# validation


class Invalid(Exception):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass(frozen=True)
class Anchor:
    """A certified point in the history: view, counter within it, and history digest."""

    view: int
    counter: int
    counter_pk: bytes
    history_length: int
    history_digest: bytes

    @property
    def position(self) -> tuple[int, int]:
        return (self.view, self.counter)


def certificate_view(cert: Any) -> int:
    if isinstance(cert, GenesisCertificate):
        return 0
    if isinstance(cert, ViewCertificate):
        return cert.view
    if isinstance(cert, CheckpointCertificate):
        return cert.checkpoints[0].view if cert.checkpoints else -1
    raise TypeError(type(cert).__name__)


def validate(msg: Any, genesis: Genesis, counter_pk: bytes | None = None, view: int | None = None) -> tuple[bool, str | None]:
    """Check signatures, quorum sizes and structural invariants of ``msg``.

    ``counter_pk`` is the counter key of the view an ORDER-REQUEST claims, and
    ``view`` the receiver's current view; both are optional context.
    Returns ``(True, None)`` or ``(False, reason)``.
    """
    try:
        check(msg, genesis, counter_pk=counter_pk, view=view)
    except Invalid as exc:
        return False, exc.reason
    return True, None


def check(msg: Any, genesis: Genesis, counter_pk: bytes | None = None, view: int | None = None) -> None:
    """Like :func:`validate` but raises :class:`Invalid`."""
    if view is not None and isinstance(msg, OrderRequestMsg) and msg.view != view:
        raise Invalid("WrongView", f"order-request for view {msg.view}, current view {view}")
    try:
        key = (msg.digest, counter_pk)
    except (AttributeError, TypeError):
        raise Invalid("Malformed") from None
    cached = genesis._cache.get(key)
    if cached is None:
        try:
            _CHECKERS[type(msg)](msg, genesis, counter_pk)
            cached = ""
        except Invalid as exc:
            cached = exc.reason
        except (AttributeError, TypeError, KeyError, IndexError, ValueError):
            cached = "Malformed"
        genesis._cache[key] = cached
    if cached:
        raise Invalid(cached)


def _sig(pk: bytes | None, msg: Any) -> None:
    if pk is None:
        raise Invalid("UnknownSigner")
    if not crypto.verify(pk, msg.signing_bytes, msg.signature):
        raise Invalid("BadSignature", type(msg).__name__)


def _check_request(m: RequestMsg, g: Genesis, _: Any) -> None:
    if not isinstance(m.op, bytes) or m.request_id < 1:
        raise Invalid("Malformed")
    _sig(g.client_keys.get(m.client), m)


def _check_order_request(m: OrderRequestMsg, g: Genesis, counter_pk: bytes | None) -> None:
    if m.view < 0:
        raise Invalid("Malformed")
    _sig(g.replica_key(g.primary(m.view)), m)
    check(m.request, g)
    if m.cert.message_digest != m.request.digest:
        raise Invalid("DigestMismatch")
    if counter_pk is not None and not verify_certificate(counter_pk, m.cert):
        raise Invalid("BadCertificate")


def _check_reply(m: ReplyMsg, g: Genesis, _: Any) -> None:
    _sig(g.replica_key(m.replica_id), m)
    check(m.order_request, g)


def _check_fill_hole(m: FillHoleMsg, g: Genesis, _: Any) -> None:
    if m.index < 1 or m.view < 0:
        raise Invalid("Malformed")


def _check_req_view_change(m: ReqViewChangeMsg, g: Genesis, _: Any) -> None:
    if m.view < 0:
        raise Invalid("Malformed")
    _sig(g.replica_key(m.replica_id), m)


def _check_view_confirm(m: ViewConfirmMsg, g: Genesis, _: Any) -> None:
    if m.view < 1 or m.start_length < 0:
        raise Invalid("Malformed")
    _sig(g.replica_key(m.replica_id), m)


def _distinct(signers: list[Any], needed: int) -> None:
    if len(set(signers)) != len(signers):
        raise Invalid("DuplicateSigner")
    if len(signers) < needed:
        raise Invalid("InsufficientQuorum", f"{len(signers)} < {needed}")


def _check_genesis_cert(m: GenesisCertificate, g: Genesis, _: Any) -> None:
    if m.counter_pk != g.genesis_counter_pk:
        raise Invalid("BadCertificate", "genesis counter key mismatch")


def _check_view_cert(m: ViewCertificate, g: Genesis, _: Any) -> None:
    _distinct([c.replica_id for c in m.confirms], g.limits.quorum)
    keys = {c.match_key for c in m.confirms}
    if len(keys) != 1 or m.confirms[0].view != m.view:
        raise Invalid("DigestMismatch", "confirms do not match")
    for c in m.confirms:
        check(c, g)


def _check_checkpoint(m: CheckpointMsg, g: Genesis, _: Any) -> None:
    if m.last_request_number < 0 or m.history_length < 0:
        raise Invalid("Malformed")
    _sig(g.replica_key(m.replica_id), m)
    check(m.view_certificate, g)
    if not isinstance(m.view_certificate, (GenesisCertificate, ViewCertificate)):
        raise Invalid("Malformed")


def _check_checkpoint_cert(m: CheckpointCertificate, g: Genesis, _: Any) -> None:
    _distinct([c.replica_id for c in m.checkpoints], g.limits.quorum)
    if len({c.match_key for c in m.checkpoints}) != 1:
        raise Invalid("DigestMismatch", "checkpoints do not match")
    for c in m.checkpoints:
        check(c, g)


def anchor_of(cert: BaseCertificate, genesis: Genesis) -> Anchor:
    """The certified history point of a (valid) base certificate."""
    if isinstance(cert, GenesisCertificate):
        return Anchor(0, 0, cert.counter_pk, 0, GENESIS_HISTORY)
    if isinstance(cert, ViewCertificate):
        c = cert.confirms[0]
        return Anchor(cert.view, 0, c.counter_pk, c.start_length, c.start_digest)
    if isinstance(cert, CheckpointCertificate):
        c = cert.checkpoints[0]
        view_anchor = anchor_of(c.view_certificate, genesis)
        return Anchor(
            view_anchor.view, c.last_request_number, view_anchor.counter_pk, c.history_length, c.history_digest
        )
    raise Invalid("Malformed", "not a base certificate")


def _check_view_change(m: ViewChangeMsg, g: Genesis, _: Any) -> None:
    if m.new_view < 1:
        raise Invalid("Malformed")
    _sig(g.replica_key(m.replica_id), m)
    for r in m.evidence:
        if r.view != m.new_view - 1:
            raise Invalid("WrongView", "evidence accuses another view")
        check(r, g)
    _distinct([r.replica_id for r in m.evidence], g.limits.accuse)
    if not isinstance(m.base, (GenesisCertificate, ViewCertificate, CheckpointCertificate)):
        raise Invalid("Malformed")
    check(m.base, g)
    anchor = anchor_of(m.base, g)
    if anchor.view >= m.new_view:
        raise Invalid("WrongView", "base certificate is not older than the new view")
    expected = anchor.counter + 1
    for orq in m.executed:
        if orq.view != anchor.view:
            raise Invalid("WrongView", "executed request from another view")
        if orq.counter != expected:
            raise Invalid("Malformed", "executed requests are not consecutive")
        check(orq, g, counter_pk=anchor.counter_pk)
        expected += 1
    if m.committed is not None:
        check(m.committed, g)
        top = m.committed.replies[0]
        if top.order_request.view != anchor.view:
            raise Invalid("WrongView", "commit certificate from another view")
        extra = top.history_length - anchor.history_length
        if extra > 0 and (
            extra > len(m.executed) or chain(anchor.history_digest, m.executed[:extra]) != top.history_digest
        ):
            raise Invalid("DigestMismatch", "executed requests do not extend to the committed history")


def _check_attestation(m: NewViewMsg, g: Genesis) -> None:
    primary = g.primary(m.view)
    att = m.counter_attestation
    if g.uses_tmc:
        identity = g.tmc_keys[primary]
        if identity is None or not verify_attestation(identity, att):
            raise Invalid("BadAttestation")
    else:
        # baselines order with the primary's own replica key
        key = g.replica_keys[primary]
        if att.instance_pk != key or not verify_attestation(key, att):
            raise Invalid("BadAttestation")


def _check_new_view(m: NewViewMsg, g: Genesis, _: Any) -> None:
    if m.view < 1:
        raise Invalid("Malformed")
    _sig(g.replica_key(g.primary(m.view)), m)
    _distinct([vc.replica_id for vc in m.view_changes], g.limits.quorum)
    for vc in m.view_changes:
        if vc.new_view != m.view:
            raise Invalid("WrongView", "view-change for another view")
        check(vc, g)
    _check_attestation(m, g)


def _check_commit(m: CommitMsg, g: Genesis, _: Any) -> None:
    _sig(g.client_keys.get(m.client), m)
    replies = m.certificate.replies
    _distinct([r.replica_id for r in replies], g.limits.commit_quorum)
    if len({r.match_key for r in replies}) != 1:
        raise Invalid("DigestMismatch", "commit certificate replies do not match")
    for r in replies:
        check(r, g)
        if r.order_request.request.client != m.client:
            raise Invalid("Malformed", "certificate for another client")


def _check_local_commit(m: LocalCommitMsg, g: Genesis, _: Any) -> None:
    _sig(g.replica_key(m.replica_id), m)


def _check_commit_cert(m: CommitCertificate, g: Genesis, _: Any) -> None:
    _distinct([r.replica_id for r in m.replies], g.limits.commit_quorum)
    if len({r.match_key for r in m.replies}) != 1:
        raise Invalid("DigestMismatch")
    for r in m.replies:
        check(r, g)


def _check_state_request(m: StateRequestMsg, g: Genesis, _: Any) -> None:
    if m.history_length < 0:
        raise Invalid("Malformed")


def _check_state_response(m: StateResponseMsg, g: Genesis, _: Any) -> None:
    for e in m.entries:
        check(e, g)


def _check_misbehavior_proof(m: MisbehaviorProofMsg, g: Genesis, counter_pk: bytes | None) -> None:
    a, b = m.first, m.second
    if (a.view, a.counter) != (b.view, b.counter) or a.request.digest == b.request.digest:
        raise Invalid("Malformed", "order-requests do not conflict")
    check(a, g, counter_pk=counter_pk)
    check(b, g, counter_pk=counter_pk)


def _check_history_entry(m: HistoryEntry, g: Genesis, _: Any) -> None:
    check(m.order_request, g)


_CHECKERS = {
    RequestMsg: _check_request,
    OrderRequestMsg: _check_order_request,
    ReplyMsg: _check_reply,
    FillHoleMsg: _check_fill_hole,
    ReqViewChangeMsg: _check_req_view_change,
    ViewChangeMsg: _check_view_change,
    NewViewMsg: _check_new_view,
    ViewConfirmMsg: _check_view_confirm,
    CheckpointMsg: _check_checkpoint,
    GenesisCertificate: _check_genesis_cert,
    ViewCertificate: _check_view_cert,
    CheckpointCertificate: _check_checkpoint_cert,
    CommitMsg: _check_commit,
    LocalCommitMsg: _check_local_commit,
    CommitCertificate: _check_commit_cert,
    StateRequestMsg: _check_state_request,
    StateResponseMsg: _check_state_response,
    HistoryEntry: _check_history_entry,
    MisbehaviorProofMsg: _check_misbehavior_proof,
}
