"""Client state machine: submit, collect matching replies, retry by broadcast.

Clients are sequential: one outstanding request at a time. The Zyzzyva
baseline adds a commit phase (see :mod:`saczyzzyva.baselines`) when only a
commit quorum of replies matches.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable

from .crypto import KeyPair
from .messages import (
    CommitCertificate,
    CommitMsg,
    Genesis,
    Invalid,
    LocalCommitMsg,
    ReplyMsg,
    RequestMsg,
    check,
    signed,
)
from .node import Env
from .variants import ProtocolVariant

# retries double the timeout up to this multiple of the base value
MAX_BACKOFF = 8


@dataclass
class Completion:
    response: bytes
    history_length: int
    history_digest: bytes
    view: int
    support: int
    fallback: bool
    time: int


@dataclass
class PendingRequest:
    request: RequestMsg
    sent_at: int
    replies: dict[int, ReplyMsg] = field(default_factory=dict)
    deadline: int = 0
    retries: int = 0
    commit: CommitMsg | None = None
    acks: dict[int, LocalCommitMsg] = field(default_factory=dict)
    fallback_armed: bool = False
    completed: Completion | None = None

    def groups(self) -> dict[tuple, list[ReplyMsg]]:
        out: dict[tuple, list[ReplyMsg]] = defaultdict(list)
        for r in self.replies.values():
            out[r.match_key].append(r)
        return out

    def best_group(self) -> list[ReplyMsg]:
        return max(self.groups().values(), key=len, default=[])


class Client:
    def __init__(
        self,
        name: str,
        genesis: Genesis,
        keys: KeyPair,
        timeout: int = 40,
        ops: list[bytes] | None = None,
        completion: int | None = None,
    ):
        self.name = name
        self.genesis = genesis
        self.keys = keys
        self.base_timeout = timeout
        # the completion threshold is normally the variant's; tests may lower it
        self.completion = completion if completion is not None else genesis.limits.completion
        self.ops = list(ops or [])
        self.next_id = 1
        self.view = 0
        self.pending: PendingRequest | None = None
        self.done: list[tuple[RequestMsg, Completion]] = []
        self.env: Env | None = None
        self.on_complete: Callable[[Client, RequestMsg, Completion], None] | None = None

    @property
    def fallback_enabled(self) -> bool:
        return self.genesis.variant is ProtocolVariant.ZYZZYVA and self.genesis.limits.fallback

    def start(self, env: Env) -> None:
        self.env = env
        self._next()

    def _next(self) -> None:
        if self.pending is None and self.ops:
            self.submit(self.ops.pop(0))

    def submit(self, op: bytes) -> PendingRequest:
        """Send the next request to the replica believed to be primary."""
        req = signed(RequestMsg(op, self.name, self.next_id), self.keys.secret)
        self.next_id += 1
        self.pending = PendingRequest(req, self.env.now)
        self.env.send(self.genesis.primary(self.view), req)
        self._arm(self.base_timeout)
        return self.pending

    def _arm(self, delay: int) -> None:
        self.pending.deadline = self.env.now + delay
        self.env.set_timer("retry", delay)

    def on_message(self, src: Any, msg: Any) -> None:
        if isinstance(msg, ReplyMsg):
            self.on_reply(msg)
        elif isinstance(msg, LocalCommitMsg):
            self.on_local_commit(msg)

    def on_reply(self, m: ReplyMsg) -> Completion | None:
        p = self.pending
        if p is None or p.completed is not None:
            return None
        if m.order_request.request.digest != p.request.digest:
            return None
        try:
            check(m, self.genesis)
        except Invalid:
            return None
        p.replies[m.replica_id] = m
        self.view = max(self.view, m.order_request.view)
        group = p.best_group()
        if len(group) >= self.completion:
            return self._complete(group[0], len(group), fallback=False)
        if self.fallback_enabled and not p.fallback_armed and len(group) >= self.genesis.limits.commit_quorum:
            # enough for a commit certificate: give the stragglers one more
            # client timeout, then fall back to the commit phase
            p.fallback_armed = True
            self.env.cancel_timer("retry")
            self.env.set_timer("fallback", self.base_timeout)
        elif (
            p.commit is not None
            and len(group) >= self.genesis.limits.commit_quorum
            and group[0].match_key != p.commit.certificate.replies[0].match_key
        ):
            self.on_timer("fallback")
        return None

    def on_local_commit(self, m: LocalCommitMsg) -> Completion | None:
        p = self.pending
        if p is None or p.completed is not None or p.commit is None:
            return None
        ref = p.commit.certificate.replies[0]
        if (m.client, m.request_id, m.history_length, m.history_digest) != (
            self.name,
            p.request.request_id,
            ref.history_length,
            ref.history_digest,
        ):
            return None
        try:
            check(m, self.genesis)
        except Invalid:
            return None
        p.acks[m.replica_id] = m
        if len(p.acks) >= self.genesis.limits.commit_quorum:
            return self._complete(ref, len(p.acks), fallback=True)
        return None

    def on_timer(self, name: str) -> None:
        p = self.pending
        if p is None or p.completed is not None:
            return
        if name == "fallback":
            from .baselines import zyzzyva_client_fallback

            for dst, msg in zyzzyva_client_fallback(self, p):
                self.env.send(dst, msg)
            p.retries = 0
            self._arm(self.base_timeout)
        elif name == "retry":
            self.on_timeout(p)

    def on_timeout(self, p: PendingRequest) -> None:
        """Broadcast the request (or re-send the commit) and back off."""
        p.retries += 1
        msg = p.commit if p.commit is not None else p.request
        for dst in range(self.genesis.n):
            self.env.send(dst, msg)
        self._arm(self.base_timeout * min(2**p.retries, MAX_BACKOFF))

    def _complete(self, reply: ReplyMsg, support: int, fallback: bool) -> Completion:
        p = self.pending
        c = Completion(
            reply.response,
            reply.history_length,
            reply.history_digest,
            reply.order_request.view,
            support,
            fallback,
            self.env.now,
        )
        p.completed = c
        self.env.cancel_timer("retry")
        self.env.cancel_timer("fallback")
        self.done.append((p.request, c))
        self.env.log(
            "complete",
            client=self.name,
            rid=p.request.request_id,
            request=p.request.digest.hex(),
            latency=self.env.now - p.sent_at,
            length=c.history_length,
            digest=c.history_digest.hex(),
            view=c.view,
            support=support,
            fallback=fallback,
            retries=p.retries,
        )
        if self.on_complete is not None:
            self.on_complete(self, p.request, c)
        self.pending = None
        self._next()
        return c


def commit_certificate(p: PendingRequest, quorum: int) -> CommitCertificate | None:
    """The ``quorum`` lowest-numbered replies of the largest matching group."""
    group = sorted(p.best_group(), key=lambda r: r.replica_id)
    if len(group) < quorum:
        return None
    return CommitCertificate(tuple(group[:quorum]))
