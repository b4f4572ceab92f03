"""The replica state machine: ordering, speculative execution, hole filling,
view changes and checkpoints.

A replica is single-threaded and deterministic. Every input is either a
message (``on_message``) or a timer (``on_timer``); every output goes through
the :class:`~saczyzzyva.node.Env` it was started with.

The same class runs all three protocol variants. What differs is how the
primary binds requests to slots (a trusted counter instance for SACZyzzyva,
its own signature for the Zyzzyva baselines) and the thresholds in
``genesis.limits``.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from typing import Any

from . import crypto
from . import tmc as tmc_mod
from .app import KeyValueStore
from .crypto import KeyPair
from .messages import (
    GENESIS_HISTORY,
    Anchor,
    CheckpointCertificate,
    CheckpointMsg,
    CommitCertificate,
    CommitMsg,
    FillHoleMsg,
    Genesis,
    GenesisCertificate,
    HistoryEntry,
    Invalid,
    LocalCommitMsg,
    MisbehaviorProofMsg,
    NewViewMsg,
    OrderRequestMsg,
    ReplyMsg,
    ReqViewChangeMsg,
    RequestMsg,
    StateRequestMsg,
    StateResponseMsg,
    ViewCertificate,
    ViewChangeMsg,
    ViewConfirmMsg,
    anchor_of,
    chain,
    chain_step,
    check,
    signed,
)
from .node import Env
from .tmc import Attestation, Crashed, NoTrustedComponent, SignedSequencer, TrustedCounter


class Phase(str, enum.Enum):
    ACTIVE = "active"
    VIEW_CHANGING = "view-changing"


class History:
    """Executed requests in order, with the chain digest after every prefix."""

    def __init__(self) -> None:
        self.entries: list[HistoryEntry] = []
        self.digests: list[bytes] = [GENESIS_HISTORY]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def head(self) -> bytes:
        return self.digests[-1]

    def append(self, entry: HistoryEntry) -> bytes:
        d = chain_step(self.digests[-1], entry.view, entry.counter, entry.request.digest)
        self.entries.append(entry)
        self.digests.append(d)
        return d

    def truncate(self, length: int) -> None:
        del self.entries[length:]
        del self.digests[length + 1 :]

    def digest_at(self, length: int) -> bytes | None:
        if 0 <= length < len(self.digests):
            return self.digests[length]
        return None

    def has_prefix(self, length: int, digest: bytes) -> bool:
        return self.digest_at(length) == digest


@dataclass
class Snapshot:
    history_digest: bytes
    app: dict[bytes, bytes]
    client_ids: dict[str, int]


def compute_new_view_state(new_view: NewViewMsg, genesis: Genesis) -> tuple[Anchor, list[OrderRequestMsg]]:
    """Starting state of a view from its (valid) NEW-VIEW message.

    Picks the highest-numbered view with a view or checkpoint certificate among
    the VIEW-CHANGE messages, starts from the latest certified point in that
    view, and extends it with the longest run of consecutive order-requests of
    that view found in any of the messages. For the baselines an order-request
    only counts once ``genesis.limits.inclusion`` messages carry it.
    """
    anchors = [anchor_of(vc.base, genesis) for vc in new_view.view_changes]
    top_view = max(a.view for a in anchors)
    start = max((a for a in anchors if a.view == top_view), key=lambda a: a.counter)

    support: dict[int, dict[bytes, tuple[int, OrderRequestMsg]]] = defaultdict(dict)
    for vc in new_view.view_changes:
        for orq in vc.executed:
            if orq.view != top_view:
                continue
            count, _ = support[orq.counter].get(orq.request.digest, (0, orq))
            support[orq.counter][orq.request.digest] = (count + 1, orq)

    needed = genesis.limits.inclusion
    ext: list[OrderRequestMsg] = []
    counter = start.counter + 1
    while counter in support:
        backed = [(c, o) for c, o in support[counter].values() if c >= needed]
        if not backed:
            break
        # with inclusion >= 1 at most one request per slot can reach the bar
        # for SACZyzzyva; for the baselines ties are broken deterministically
        backed.sort(key=lambda co: (-co[0], co[1].request.digest))
        ext.append(backed[0][1])
        counter += 1

    # a certified commit survives even where fewer than ``inclusion`` messages carry it
    best: list[OrderRequestMsg] = []
    for vc in new_view.view_changes:
        cc = vc.committed
        if cc is None or cc.replies[0].order_request.view != top_view:
            continue
        k = cc.replies[0].history_length - start.history_length
        if k > len(best):
            best = [o for o in vc.executed if o.counter > start.counter][:k]
    if len(best) > len(ext) or ext[: len(best)] != best:
        tail = ext[len(best) :] if ext[: len(best)] == best else []
        ext = best + tail
    return start, ext


def start_point(anchor: Anchor, ext: list[OrderRequestMsg]) -> tuple[int, bytes]:
    return anchor.history_length + len(ext), chain(anchor.history_digest, ext)


@dataclass
class PendingTransfer:
    length: int
    digest: bytes
    purpose: str  # "install" or "checkpoint"
    view: int
    counter: int = 0
    cert: ViewCertificate | None = None
    counter_pk: bytes = b""
    new_view: NewViewMsg | None = None


class Replica:
    def __init__(
        self,
        replica_id: int,
        genesis: Genesis,
        keys: KeyPair,
        trusted: TrustedCounter | None = None,
        genesis_orderer: Any = None,
        timeout: int = 40,
    ):
        self.id = replica_id
        self.genesis = genesis
        self.keys = keys
        self.tmc = trusted
        self.env: Env | None = None
        self.app = KeyValueStore()
        self.history = History()
        self.base_timeout = timeout
        self.timeout = timeout

        self.current_view = 0
        self.installed_view = 0
        self.phase = Phase.ACTIVE
        self.view_cert: GenesisCertificate | ViewCertificate = GenesisCertificate(genesis.genesis_counter_pk)
        self.counter_pk = genesis.genesis_counter_pk
        self.orderer: Any = genesis_orderer if replica_id == genesis.primary(0) else None
        self.last_executed = 0

        # order-requests kept for fill-hole answers and VIEW-CHANGE messages
        self.order_log: dict[tuple[int, int], OrderRequestMsg] = {}
        self.buffer: dict[int, OrderRequestMsg] = {}
        self.by_request: dict[tuple[str, int], OrderRequestMsg] = {}
        self.ordered: dict[tuple[str, int], OrderRequestMsg] = {}
        self.requested_holes: set[int] = set()
        self.holes_broadcast = False
        self.future_orders: dict[int, list[OrderRequestMsg]] = defaultdict(list)

        self.client_ids: dict[str, int] = {}
        self.client_replies: dict[str, ReplyMsg] = {}
        self.forwarded: dict[tuple[str, int], RequestMsg] = {}
        self.known_requests: dict[str, RequestMsg] = {}

        self.accusations: dict[int, dict[int, ReqViewChangeMsg]] = defaultdict(dict)
        self.accused: set[int] = set()
        self.exposed: set[int] = set()
        self.view_changes: dict[int, dict[int, ViewChangeMsg]] = defaultdict(dict)
        self.new_view_sent: set[int] = set()
        self.next_orderers: dict[int, Any] = {}
        self.new_views: dict[int, NewViewMsg] = {}
        self.confirms: dict[int, dict[tuple, dict[int, ViewConfirmMsg]]] = defaultdict(lambda: defaultdict(dict))
        self.confirmed: set[int] = set()
        self.transfer: PendingTransfer | None = None

        self.checkpoint_votes: dict[tuple[int, int], dict[tuple, dict[int, CheckpointMsg]]] = defaultdict(
            lambda: defaultdict(dict)
        )
        self.stable_checkpoint: CheckpointCertificate | None = None
        self.stable_anchor: Anchor | None = None
        self.stable_count = 0
        self.snapshots: dict[int, Snapshot] = {0: Snapshot(GENESIS_HISTORY, {}, {})}
        self.committed_length = 0
        self.commit_cert: CommitCertificate | None = None

    # ------------------------------------------------------------------ plumbing

    def start(self, env: Env) -> None:
        self.env = env

    @property
    def n(self) -> int:
        return self.genesis.n

    @property
    def f(self) -> int:
        return self.genesis.f

    @property
    def is_primary(self) -> bool:
        return self.genesis.primary(self.current_view) == self.id

    def broadcast(self, msg: Any) -> None:
        for dst in range(self.n):
            self.env.send(dst, msg)

    def sign(self, msg: Any) -> Any:
        return signed(msg, self.keys.secret)

    def valid(self, msg: Any, counter_pk: bytes | None = None) -> bool:
        try:
            check(msg, self.genesis, counter_pk=counter_pk)
        except Invalid as exc:
            self.env.log("reject", kind=msg.kind if hasattr(msg, "kind") else type(msg).__name__, reason=exc.reason)
            return False
        return True

    def on_message(self, src: Any, msg: Any) -> None:
        handler = self._handlers.get(type(msg))
        if handler is not None:
            handler(self, src, msg)

    def on_timer(self, name: str) -> None:
        kind, _, rest = name.partition(":")
        if kind == "r3":
            client, _, rid = rest.rpartition(":")
            self._forward_expired(client, int(rid))
        elif kind == "holes":
            self._holes_expired()
        elif kind == "vc":
            self._view_change_expired(int(rest))
        elif kind == "transfer":
            self._transfer_retry()

    # ------------------------------------------------------------------ requests

    def _cached_id(self, client: str) -> int:
        return self.client_ids.get(client, 0)

    def _on_request(self, src: Any, m: RequestMsg) -> None:
        if not self.valid(m):
            return
        key = (m.client, m.request_id)
        cached = self._cached_id(m.client)
        if m.request_id <= cached:
            if m.request_id == cached and self.phase is Phase.ACTIVE:
                if src == m.client:
                    reply = self.client_replies.get(m.client)
                    if reply is not None:
                        self.env.send(m.client, reply)
                elif key in self.by_request:
                    self.env.send(src, self.by_request[key])
            return
        self.known_requests[m.client] = m
        if self.phase is not Phase.ACTIVE:
            return
        if self.is_primary:
            self.on_client_request(m, src)
        else:
            self.on_forwarded_request(m, src)

    def on_client_request(self, m: RequestMsg, src: Any = None) -> None:
        """Primary: bind a fresh request to the next counter value and broadcast it."""
        key = (m.client, m.request_id)
        if key in self.ordered:
            if isinstance(src, int) and src != self.id:
                self.env.send(src, self.ordered[key])
            return
        if self.orderer is None:
            return
        if self.orderer.counter_value + 1 > self._window_limit():
            return
        try:
            cert = self.orderer.increment(m.digest)
        except Crashed:
            self.env.log("tmc_unavailable", view=self.current_view)
            return
        orq = self.sign(OrderRequestMsg(self.current_view, cert, m))
        self.ordered[key] = orq
        self.broadcast(orq)

    def on_forwarded_request(self, m: RequestMsg, src: Any) -> None:
        """Backup: relay a client's request to the primary and watch for the order."""
        key = (m.client, m.request_id)
        held = self.by_request.get(key)
        if held is not None:
            if isinstance(src, int) and src != self.id:
                self.env.send(src, held)
            return
        if key in self.forwarded:
            return
        self.forwarded[key] = m
        self.env.send(self.genesis.primary(self.current_view), m)
        self.env.set_timer(f"r3:{m.client}:{m.request_id}", self.timeout)

    def _forward_expired(self, client: str, rid: int) -> None:
        key = (client, rid)
        m = self.forwarded.pop(key, None)
        if m is None or self.phase is not Phase.ACTIVE or key in self.by_request:
            return
        if self._cached_id(client) >= rid:
            return
        self.env.log("primary_suspected", view=self.current_view, reason="request not ordered")
        self.request_view_change()
        for dst in range(self.n):
            if dst != self.id:
                self.env.send(dst, m)

    # ------------------------------------------------------------------ ordering

    def _window_limit(self) -> int:
        base = 0
        if self.stable_anchor is not None and self.stable_anchor.view == self.current_view:
            base = self.stable_anchor.counter
        return base + self.genesis.checkpoint_interval * self.genesis.window

    def on_order_request(self, src: Any, m: OrderRequestMsg) -> None:
        if m.view > self.current_view or (m.view == self.current_view and self.phase is not Phase.ACTIVE):
            pending = self.future_orders[m.view]
            if len(pending) < 4 * self.genesis.checkpoint_interval * self.genesis.window:
                pending.append(m)
            return
        if m.view < self.current_view:
            return
        if not self.valid(m, counter_pk=self.counter_pk):
            return
        c = m.counter
        held = self.buffer.get(c) or self.order_log.get((m.view, c))
        if held is not None and held.view == m.view and held.request.digest != m.request.digest:
            self._expose(held, m)
            return
        if c <= self.last_executed or c in self.buffer:
            return
        if c > self._window_limit():
            return
        key = (m.request.client, m.request.request_id)
        self.by_request.setdefault(key, m)
        if self.forwarded.pop(key, None) is not None:
            self.env.cancel_timer(f"r3:{key[0]}:{key[1]}")
        self.buffer[c] = m
        self._drain()
        missing = [i for i in range(self.last_executed + 1, max(self.buffer, default=0)) if i not in self.buffer]
        if missing:
            primary = self.genesis.primary(self.current_view)
            fresh = [i for i in missing if i not in self.requested_holes]
            for i in fresh:
                self.requested_holes.add(i)
                self.env.send(primary, FillHoleMsg(self.current_view, i))
            if fresh:
                self.env.set_timer("holes", self.timeout)
        else:
            self.env.cancel_timer("holes")
            self.holes_broadcast = False

    def _drain(self) -> None:
        while self.phase is Phase.ACTIVE and self.last_executed + 1 in self.buffer:
            orq = self.buffer.pop(self.last_executed + 1)
            self.requested_holes.discard(orq.counter)
            self._execute(orq)

    def _holes_expired(self) -> None:
        if self.phase is not Phase.ACTIVE or not self.buffer:
            return
        if self.transfer is not None and self.transfer.purpose == "checkpoint":
            return
        if not self.holes_broadcast:
            # any replica holding the order-request can vouch for it, ask them all once
            self.holes_broadcast = True
            top = max(self.buffer)
            for i in range(self.last_executed + 1, top):
                if i not in self.buffer:
                    for dst in range(self.n):
                        if dst != self.id:
                            self.env.send(dst, FillHoleMsg(self.current_view, i))
            self.env.set_timer("holes", self.timeout)
            return
        self.env.log("primary_suspected", view=self.current_view, reason="holes not filled")
        self.request_view_change()

    def _expose(self, first: OrderRequestMsg, second: OrderRequestMsg) -> None:
        if self.current_view in self.exposed:
            return
        self.exposed.add(self.current_view)
        self.env.log("primary_suspected", view=self.current_view, reason="equivocation")
        self.broadcast(MisbehaviorProofMsg(first, second))
        self.request_view_change()

    def on_misbehavior_proof(self, src: Any, m: MisbehaviorProofMsg) -> None:
        if m.first.view != self.current_view or not self.valid(m, counter_pk=self.counter_pk):
            return
        self._expose(m.first, m.second)

    def on_fill_hole(self, src: Any, m: FillHoleMsg) -> None:
        orq = self.order_log.get((m.view, m.index))
        if orq is not None:
            self.env.send(src, orq)

    # ------------------------------------------------------------------ execution

    def _apply(self, orq: OrderRequestMsg) -> HistoryEntry:
        """Run one ordered request against the application and append it."""
        request = orq.request
        if request.request_id <= self.client_ids.get(request.client, 0):
            result = b""
        else:
            result = self.app.execute(request.op)
            self.client_ids[request.client] = request.request_id
        entry = HistoryEntry(orq, result)
        self.history.append(entry)
        return entry

    def _log_entry(self, entry: HistoryEntry, mode: str, prev: bytes) -> None:
        self.env.log(
            "execute",
            mode=mode,
            view=entry.view,
            counter=entry.counter,
            pos=len(self.history),
            digest=self.history.head.hex(),
            prev=prev.hex(),
            request=entry.request.digest.hex(),
            client=entry.request.client,
            rid=entry.request.request_id,
            phase=self.phase.value,
        )

    def _execute(self, orq: OrderRequestMsg) -> None:
        req = orq.request
        fresh = req.request_id > self._cached_id(req.client)
        prev = self.history.head
        entry = self._apply(orq)
        self.last_executed = orq.counter
        self.order_log[(orq.view, orq.counter)] = orq
        self._log_entry(entry, "exec", prev)
        if fresh:
            reply = self.sign(ReplyMsg(orq, entry.result, len(self.history), self.history.head, self.id))
            self.client_replies[req.client] = reply
            self.env.send(req.client, reply)
            if self.known_requests.get(req.client) is not None and self.known_requests[req.client].request_id <= req.request_id:
                del self.known_requests[req.client]
        self.timeout = self.base_timeout
        self.maybe_checkpoint()

    # ------------------------------------------------------------------ view change

    def request_view_change(self) -> None:
        """Accuse the primary of the current view (once per view)."""
        view = self.current_view
        if view in self.accused:
            return
        self.accused.add(view)
        self.broadcast(self.sign(ReqViewChangeMsg(view, self.id)))

    def on_req_view_change(self, src: Any, m: ReqViewChangeMsg) -> None:
        if m.view < self.current_view or not self.valid(m):
            return
        votes = self.accusations[m.view]
        votes[m.replica_id] = m
        if len(votes) >= self.genesis.limits.accuse:
            if self.phase is Phase.VIEW_CHANGING and self.current_view > m.view:
                return
            evidence = tuple(sorted(votes.values(), key=lambda r: r.replica_id))[: self.genesis.limits.accuse]
            self.start_view_change(m.view + 1, evidence)

    def _base(self) -> GenesisCertificate | ViewCertificate | CheckpointCertificate:
        if self.stable_anchor is not None and self.stable_anchor.view == self.installed_view:
            return self.stable_checkpoint
        return self.view_cert

    def start_view_change(self, new_view: int, evidence: tuple[ReqViewChangeMsg, ...]) -> None:
        self._leave_view(new_view)
        self.timeout *= 2
        base = self._base()
        anchor = anchor_of(base, self.genesis)
        executed = []
        counter = anchor.counter + 1
        while (anchor.view, counter) in self.order_log and counter <= self._executed_in(anchor.view):
            executed.append(self.order_log[(anchor.view, counter)])
            counter += 1
        committed = self.commit_cert
        if committed is not None and committed.replies[0].order_request.view != anchor.view:
            committed = None
        vc = self.sign(ViewChangeMsg(new_view, self.id, base, tuple(executed), evidence, committed))
        self.env.log("view_change_start", view=new_view, executed=len(executed))
        self.broadcast(vc)
        self.env.set_timer(f"vc:{new_view}", self.timeout)

    def _executed_in(self, view: int) -> int:
        return self.last_executed if view == self.installed_view else 0

    def _leave_view(self, new_view: int) -> None:
        for key in list(self.forwarded):
            self.env.cancel_timer(f"r3:{key[0]}:{key[1]}")
        self.forwarded.clear()
        self.env.cancel_timer("holes")
        self.buffer.clear()
        self.requested_holes.clear()
        self.holes_broadcast = False
        self.current_view = new_view
        self.phase = Phase.VIEW_CHANGING

    def _view_change_expired(self, view: int) -> None:
        if self.current_view != view or self.phase is not Phase.VIEW_CHANGING:
            return
        self.env.log("view_change_timeout", view=view)
        self.request_view_change()

    def on_view_change(self, src: Any, m: ViewChangeMsg) -> None:
        """New primary: gather a quorum of VIEW-CHANGE messages, then announce the view."""
        if self.genesis.primary(m.new_view) != self.id:
            return
        if m.new_view < self.current_view or m.new_view in self.new_view_sent:
            return
        if not self.valid(m):
            return
        got = self.view_changes[m.new_view]
        got[m.replica_id] = m
        if len(got) < self.genesis.limits.quorum:
            return
        try:
            orderer, attestation = self._fresh_orderer()
        except (Crashed, NoTrustedComponent):
            self.env.log("tmc_unavailable", view=m.new_view)
            return
        self.next_orderers[m.new_view] = orderer
        chosen = tuple(sorted(got.values(), key=lambda vc: vc.replica_id))[: self.genesis.limits.quorum]
        self.new_view_sent.add(m.new_view)
        self.broadcast(self.sign(NewViewMsg(m.new_view, attestation, chosen)))

    def _fresh_orderer(self) -> tuple[Any, Attestation]:
        if self.genesis.uses_tmc:
            return tmc_mod.init(self.tmc)
        return SignedSequencer(self.keys), self_attestation(self.keys)

    def on_new_view(self, src: Any, m: NewViewMsg) -> None:
        if m.view < self.current_view or m.view in self.new_views:
            return
        if m.view == self.current_view and self.phase is Phase.ACTIVE:
            return
        if not self.valid(m):
            return
        self.new_views[m.view] = m
        if m.view > self.current_view or self.phase is Phase.ACTIVE:
            self._leave_view(m.view)
            self.env.set_timer(f"vc:{m.view}", self.timeout)
        anchor, ext = compute_new_view_state(m, self.genesis)
        length, digest = start_point(anchor, ext)
        self.confirmed.add(m.view)
        self.broadcast(
            self.sign(ViewConfirmMsg(m.view, self.id, m.digest, m.counter_attestation.instance_pk, length, digest))
        )
        for key in list(self.confirms[m.view]):
            self._try_install(m.view, key)

    def on_view_confirm(self, src: Any, m: ViewConfirmMsg) -> None:
        if m.view < self.current_view or (m.view == self.current_view and self.phase is Phase.ACTIVE):
            return
        if not self.valid(m):
            return
        self.confirms[m.view][m.match_key][m.replica_id] = m
        self._try_install(m.view, m.match_key)

    def _try_install(self, view: int, key: tuple) -> None:
        votes = self.confirms[view][key]
        if len(votes) < self.genesis.limits.quorum:
            return
        if view < self.current_view or (view == self.current_view and self.phase is Phase.ACTIVE):
            return
        confirms = tuple(sorted(votes.values(), key=lambda c: c.replica_id))[: self.genesis.limits.quorum]
        cert = ViewCertificate(view, confirms)
        _, nv_digest, counter_pk, length, digest = key
        nv = self.new_views.get(view)
        if nv is not None and nv.digest != nv_digest:
            nv = None
        if nv is not None:
            anchor, ext = compute_new_view_state(nv, self.genesis)
            if self.history.has_prefix(anchor.history_length, anchor.history_digest):
                self.install(view, cert, counter_pk, anchor.history_length, ext)
                return
        elif self.history.has_prefix(length, digest):
            self.install(view, cert, counter_pk, length, [])
            return
        self._request_state(PendingTransfer(length, digest, "install", view, cert=cert, counter_pk=counter_pk, new_view=nv))

    def install(
        self,
        view: int,
        cert: ViewCertificate,
        counter_pk: bytes,
        keep_length: int,
        ext: list[OrderRequestMsg],
        entries: list[HistoryEntry] | None = None,
    ) -> None:
        """Enter ``view`` with history ``own[:keep_length] + ext`` (or ``entries``)."""
        if entries is not None:
            target = [e.order_request for e in entries]
            keep_length = 0
        else:
            target = list(ext)
        common = keep_length
        for orq in target:
            if common < len(self.history):
                e = self.history.entries[common]
                if (e.view, e.counter, e.request.digest) == (orq.view, orq.counter, orq.request.digest):
                    common += 1
                    continue
            break
        rolled_back = len(self.history) - common
        self._restore(common)
        for orq in target[common - keep_length :]:
            prev = self.history.head
            entry = self._apply(orq)
            self._log_entry(entry, "adopt", prev)
        for o in ext:
            self.order_log[(o.view, o.counter)] = o

        self.current_view = view
        self.installed_view = view
        self.phase = Phase.ACTIVE
        self.view_cert = cert
        self.counter_pk = counter_pk
        self.last_executed = 0
        self.orderer = self.next_orderers.pop(view, None) if self.is_primary else None
        self.buffer.clear()
        self.by_request.clear()
        self.ordered.clear()
        self.requested_holes.clear()
        self.holes_broadcast = False
        self.transfer = None
        self.env.cancel_timer("transfer")
        self.env.cancel_timer(f"vc:{view}")
        self._rebuild_replies()
        self.snapshots[len(self.history)] = Snapshot(self.history.head, self.app.snapshot(), dict(self.client_ids))
        self.env.log(
            "install",
            view=view,
            length=len(self.history),
            digest=self.history.head.hex(),
            counter_pk=counter_pk.hex(),
            rolled_back=rolled_back,
        )
        for old in [v for v in self.accusations if v < view]:
            del self.accusations[old]
        for table in (self.view_changes, self.new_views, self.confirms, self.future_orders):
            for old in [v for v in table if v < view]:
                del table[old]

        for orq in self.future_orders.pop(view, []):
            self.on_order_request(None, orq)
        for client, req in sorted(self.known_requests.items()):
            if req.request_id > self._cached_id(client):
                if self.is_primary:
                    self.on_client_request(req)
                else:
                    self.on_forwarded_request(req, client)

    def _restore(self, length: int) -> None:
        """Roll the history and application back to the first ``length`` entries."""
        if length == len(self.history):
            return
        self.history.truncate(length)
        usable = [
            k for k, s in self.snapshots.items() if k <= length and self.history.digest_at(k) == s.history_digest
        ]
        start = max(usable, default=0)
        snap = self.snapshots.get(start)
        if snap is None or self.history.digest_at(start) != snap.history_digest:
            start, snap = 0, Snapshot(GENESIS_HISTORY, {}, {})
        self.app = KeyValueStore.restore(snap.app)
        self.client_ids = dict(snap.client_ids)
        for e in self.history.entries[start:length]:
            if e.request.request_id > self.client_ids.get(e.request.client, 0):
                self.app.execute(e.request.op)
                self.client_ids[e.request.client] = e.request.request_id
        for k in [k for k in self.snapshots if k > length]:
            del self.snapshots[k]

    def _rebuild_replies(self) -> None:
        """Regenerate cached replies from the (possibly rewritten) history."""
        latest: dict[str, int] = {}
        seen: dict[str, int] = {}
        for pos, e in enumerate(self.history.entries, start=1):
            if e.request.request_id > seen.get(e.request.client, 0):
                seen[e.request.client] = e.request.request_id
                latest[e.request.client] = pos
        replies: dict[str, ReplyMsg] = {}
        for client, pos in latest.items():
            e = self.history.entries[pos - 1]
            old = self.client_replies.get(client)
            if (
                old is not None
                and old.history_length == pos
                and old.history_digest == self.history.digests[pos]
            ):
                replies[client] = old
                continue
            replies[client] = self.sign(ReplyMsg(e.order_request, e.result, pos, self.history.digests[pos], self.id))
        self.client_replies = replies

    # ------------------------------------------------------------------ state transfer

    def _request_state(self, pending: PendingTransfer) -> None:
        if self.transfer is not None and (self.transfer.length, self.transfer.digest, self.transfer.purpose) == (
            pending.length,
            pending.digest,
            pending.purpose,
        ):
            return
        self.transfer = pending
        self.env.log("state_request", length=pending.length, purpose=pending.purpose)
        self._send_state_request()

    def _send_state_request(self) -> None:
        msg = StateRequestMsg(self.transfer.length, self.transfer.digest)
        for dst in range(self.n):
            if dst != self.id:
                self.env.send(dst, msg)
        self.env.set_timer("transfer", self.timeout)

    def _transfer_retry(self) -> None:
        if self.transfer is not None:
            self._send_state_request()

    def on_state_request(self, src: Any, m: StateRequestMsg) -> None:
        if not isinstance(src, int) or src == self.id:
            return
        if m.history_length <= len(self.history) and self.history.has_prefix(m.history_length, m.history_digest):
            self.env.send(src, StateResponseMsg(tuple(self.history.entries[: m.history_length]), self.id))

    def on_state_response(self, src: Any, m: StateResponseMsg) -> None:
        t = self.transfer
        if t is None or len(m.entries) != t.length:
            return
        if chain(GENESIS_HISTORY, m.entries) != t.digest:
            return
        entries = list(m.entries)
        if t.purpose == "install":
            if t.view < self.current_view or (t.view == self.current_view and self.phase is Phase.ACTIVE):
                self.transfer = None
                return
            ext = []
            if t.new_view is not None:
                _, ext = compute_new_view_state(t.new_view, self.genesis)
            self.install(t.view, t.cert, t.counter_pk, 0, ext, entries=entries)
            return
        # checkpoint catch-up inside the installed view
        self.transfer = None
        self.env.cancel_timer("transfer")
        if t.view != self.installed_view or self.phase is not Phase.ACTIVE or self.last_executed >= t.counter:
            return
        common = 0
        limit = min(len(self.history), len(entries))
        while common < limit and self.history.digests[common + 1] == chain_step(
            self.history.digests[common], entries[common].view, entries[common].counter, entries[common].request.digest
        ):
            common += 1
        self._restore(common)
        for e in entries[common:]:
            prev = self.history.head
            entry = self._apply(e.order_request)
            self._log_entry(entry, "adopt", prev)
        self.last_executed = t.counter
        self.env.log("transfer", view=t.view, counter=t.counter, length=len(self.history))
        for c in [c for c in self.buffer if c <= t.counter]:
            del self.buffer[c]
        self.requested_holes = {i for i in self.requested_holes if i > t.counter}
        self._rebuild_replies()
        self._drain()

    # ------------------------------------------------------------------ checkpoints

    def maybe_checkpoint(self) -> None:
        N = self.genesis.checkpoint_interval
        if self.phase is not Phase.ACTIVE or N <= 0 or self.last_executed == 0 or self.last_executed % N:
            return
        self.snapshots[len(self.history)] = Snapshot(self.history.head, self.app.snapshot(), dict(self.client_ids))
        msg = self.sign(
            CheckpointMsg(
                self.view_cert, self.last_executed, self.app.digest(), len(self.history), self.history.head, self.id
            )
        )
        self.env.log("checkpoint", view=self.installed_view, counter=self.last_executed)
        self.broadcast(msg)

    def on_checkpoint(self, src: Any, m: CheckpointMsg) -> None:
        if self.phase is not Phase.ACTIVE or not self.valid(m):
            return
        if m.view != self.installed_view:
            return
        position = (m.view, m.last_request_number)
        if self.stable_anchor is not None and position <= self.stable_anchor.position:
            return
        votes = self.checkpoint_votes[position][m.match_key]
        votes[m.replica_id] = m
        if len(votes) < self.genesis.limits.quorum:
            return
        cert = CheckpointCertificate(tuple(sorted(votes.values(), key=lambda c: c.replica_id))[: self.genesis.limits.quorum])
        self._make_stable(cert)

    def _make_stable(self, cert: CheckpointCertificate) -> None:
        anchor = anchor_of(cert, self.genesis)
        self.stable_checkpoint = cert
        self.stable_anchor = anchor
        self.stable_count += 1
        for key in [k for k in self.order_log if k <= anchor.position]:
            del self.order_log[key]
        for key in [k for k in self.checkpoint_votes if k <= anchor.position]:
            del self.checkpoint_votes[key]
        for length in [k for k in self.snapshots if k < anchor.history_length]:
            del self.snapshots[length]
        self.env.log(
            "checkpoint_stable", view=anchor.view, counter=anchor.counter, length=anchor.history_length
        )
        if self.last_executed < anchor.counter:
            self._request_state(
                PendingTransfer(anchor.history_length, anchor.history_digest, "checkpoint", anchor.view, anchor.counter)
            )

    # ------------------------------------------------------------------ Zyzzyva commit phase

    def on_commit(self, src: Any, m: CommitMsg) -> None:
        if not self.valid(m):
            return
        reply = m.certificate.replies[0]
        # a view-change message already sent cannot vouch for a commit acked later
        if self.phase is Phase.VIEW_CHANGING:
            return
        length, digest = reply.history_length, reply.history_digest
        if not self.history.has_prefix(length, digest):
            return
        if length > self.committed_length:
            self.committed_length = length
            self.commit_cert = m.certificate
        req = reply.order_request.request
        self.env.send(
            m.client,
            self.sign(LocalCommitMsg(reply.order_request.view, m.client, req.request_id, length, digest, self.id)),
        )

    _handlers = {
        RequestMsg: _on_request,
        OrderRequestMsg: on_order_request,
        FillHoleMsg: on_fill_hole,
        ReqViewChangeMsg: on_req_view_change,
        ViewChangeMsg: on_view_change,
        NewViewMsg: on_new_view,
        ViewConfirmMsg: on_view_confirm,
        CheckpointMsg: on_checkpoint,
        CommitMsg: on_commit,
        MisbehaviorProofMsg: on_misbehavior_proof,
        StateRequestMsg: on_state_request,
        StateResponseMsg: on_state_response,
    }


def self_attestation(keys: KeyPair) -> Attestation:
    """Attestation a baseline primary issues for its own replica key."""
    pk = keys.public_key
    return Attestation(pk, pk, crypto.sign(keys.secret, tmc_mod.attestation_payload(pk)))
