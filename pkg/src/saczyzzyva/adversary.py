"""Byzantine behaviour scripts.

A Byzantine replica runs the ordinary replica state machine, but every message
it sends passes through its script first. The script returns a list of
actions for that message. It can sign with the node's own replica key and,
in ``partial`` mode, call the node's trusted counter through its normal
interface. It never sees counter instance secrets or other nodes' keys; the
simulator re-checks every replacement message and raises
:class:`AdversaryViolation` if one carries a signature the adversary could not
have produced.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from typing import Any, Callable

from .crypto import KeyPair
from .messages import (
    CheckpointMsg,
    Genesis,
    NewViewMsg,
    OrderRequestMsg,
    ReplyMsg,
    RequestMsg,
    ViewChangeMsg,
    ViewConfirmMsg,
    signed,
)
from .tmc import Crashed, SignedSequencer


class AdversaryViolation(RuntimeError):
    """A script produced a signature it has no capability for (a harness bug)."""


@dataclass
class Deliver:
    pass


@dataclass
class Drop:
    reason: str = "adversary"


@dataclass
class Delay:
    amount: int


@dataclass
class Replace:
    # (destination, message, extra delay)
    sends: list[tuple[Any, Any, int]]


Action = Deliver | Drop | Delay | Replace


@dataclass
class AdversaryContext:
    """What a script may use: its node's keys, state and trusted-counter API."""

    node_id: int
    replica: Any
    genesis: Genesis
    keys: KeyPair
    rng: random.Random
    now: Callable[[], int]
    partial: bool = True
    # messages the colluding faulty nodes have seen, most recent last
    seen_requests: list[RequestMsg] = field(default_factory=list)
    seen_messages: list[Any] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.genesis.n

    def sign(self, msg: Any) -> Any:
        return signed(msg, self.keys.secret)

    def other_request(self, than: RequestMsg) -> RequestMsg | None:
        options = [r for r in self.seen_requests[-20:] if r.digest != than.digest]
        return self.rng.choice(options) if options else None

    def burn(self, count: int) -> int:
        """Advance the node's own counter instance without sending the results."""
        orderer = self.replica.orderer
        if orderer is None or not self.partial:
            return 0
        burnt = 0
        for _ in range(count):
            try:
                orderer.increment(bytes(self.rng.getrandbits(8) for _ in range(32)))
            except Crashed:
                break
            burnt += 1
        return burnt

    def alternative_order(self, orq: OrderRequestMsg) -> OrderRequestMsg | None:
        """An ORDER-REQUEST for a different request, as close to ``orq`` as allowed.

        Without a trusted counter the primary simply signs the same sequence
        number again. With one, the best it can do is take a fresh counter value.
        """
        alt = self.other_request(orq.request)
        if alt is None:
            return None
        if self.genesis.uses_tmc:
            orderer = self.replica.orderer
            if orderer is None or not self.partial:
                return None
            try:
                cert = orderer.increment(alt.digest)
            except Crashed:
                return None
        else:
            cert = SignedSequencer(self.keys).certify(orq.counter, alt.digest)
        return self.sign(OrderRequestMsg(orq.view, cert, alt))


class Script:
    name = "honest"

    def __init__(self, **params: Any):
        self.params = params

    def intercept(self, ctx: AdversaryContext, dst: Any, msg: Any) -> list[Action]:
        return [Deliver()]


class DropAll(Script):
    name = "drop_all"

    def intercept(self, ctx, dst, msg):
        return [Drop()]


class DropSelective(Script):
    """Drop messages to ``targets`` (default: a random f of the replicas), optionally by kind."""

    name = "drop_selective"

    def __init__(self, targets: list[Any] | None = None, kinds: list[str] | None = None, **params):
        super().__init__(**params)
        self.targets = set(targets) if targets is not None else None
        self.kinds = set(kinds) if kinds else None

    def intercept(self, ctx, dst, msg):
        if self.targets is None:
            others = [i for i in range(ctx.n) if i != ctx.node_id]
            self.targets = set(ctx.rng.sample(others, min(ctx.genesis.f, len(others))))
        if dst in self.targets and (self.kinds is None or msg.kind in self.kinds):
            return [Drop()]
        return [Deliver()]


class DelayAll(Script):
    name = "delay"

    def __init__(self, amount: int = 50, **params):
        super().__init__(**params)
        self.amount = amount

    def intercept(self, ctx, dst, msg):
        return [Delay(self.amount)]


class Equivocate(Script):
    """As primary, send a conflicting ORDER-REQUEST to half of the replicas."""

    name = "equivocate"

    def __init__(self, **params):
        super().__init__(**params)
        self.alternatives: dict[bytes, tuple[OrderRequestMsg | None, set[int]]] = {}

    def intercept(self, ctx, dst, msg):
        if not isinstance(msg, OrderRequestMsg) or dst == ctx.node_id:
            return [Deliver()]
        if msg.digest not in self.alternatives:
            others = [i for i in range(ctx.n) if i != ctx.node_id]
            half = set(ctx.rng.sample(others, len(others) // 2))
            self.alternatives[msg.digest] = (ctx.alternative_order(msg), half)
        alt, half = self.alternatives[msg.digest]
        if alt is not None and dst in half:
            return [Replace([(dst, alt, 0)])]
        return [Deliver()]


class CounterBurn(Script):
    """As primary, skip counter values now and then, leaving holes nobody can fill."""

    name = "counter_burn"

    def __init__(self, probability: float = 0.3, burst: int = 1, **params):
        super().__init__(**params)
        self.probability = probability
        self.burst = burst
        self.done: set[bytes] = set()

    def intercept(self, ctx, dst, msg):
        if isinstance(msg, OrderRequestMsg) and msg.digest not in self.done:
            self.done.add(msg.digest)
            if ctx.rng.random() < self.probability:
                ctx.burn(self.burst)
        return [Deliver()]


class SelectiveOrder(Script):
    """As primary, withhold ORDER-REQUESTs (and FILL-HOLE answers) from some replicas."""

    name = "selective_order"

    def __init__(self, keep: int | None = None, persistent: bool = True, **params):
        super().__init__(**params)
        self.keep = keep
        self.persistent = persistent
        self.receivers: dict[int, set[int]] = {}
        self.sent: set[tuple[bytes, Any]] = set()

    def intercept(self, ctx, dst, msg):
        if not isinstance(msg, OrderRequestMsg) or dst == ctx.node_id:
            return [Deliver()]
        if msg.view not in self.receivers:
            others = [i for i in range(ctx.n) if i != ctx.node_id]
            keep = self.keep if self.keep is not None else ctx.rng.randint(1, len(others))
            self.receivers[msg.view] = set(ctx.rng.sample(others, min(keep, len(others))))
        first = (msg.digest, dst) not in self.sent
        self.sent.add((msg.digest, dst))
        if dst in self.receivers[msg.view] or not (first or self.persistent):
            return [Deliver()]
        return [Drop()]


class StaleNewView(Script):
    """As new primary, send some replicas an old NEW-VIEW instead of the current one."""

    name = "stale_new_view"

    def __init__(self, **params):
        super().__init__(**params)
        self.history: list[NewViewMsg] = []

    def intercept(self, ctx, dst, msg):
        if not isinstance(msg, NewViewMsg):
            return [Deliver()]
        stale = [m for m in ctx.seen_messages if isinstance(m, NewViewMsg) and m.view < msg.view]
        if ctx.rng.random() < 0.5:
            if stale:
                return [Replace([(dst, ctx.rng.choice(stale), 0)])]
            return [Drop()]
        return [Deliver()]


class SplitConfirm(Script):
    """Send VIEW-CONFIRMs for different starting points to different replicas."""

    name = "split_confirm"

    def intercept(self, ctx, dst, msg):
        if not isinstance(msg, ViewConfirmMsg) or ctx.rng.random() < 0.5:
            return [Deliver()]
        bogus = dataclasses.replace(
            msg,
            start_length=max(0, msg.start_length - 1),
            start_digest=bytes(reversed(msg.start_digest)),
            signature=b"",
        )
        return [Replace([(dst, ctx.sign(bogus), 0)])]


class OmitViewChange(Script):
    """Send VIEW-CHANGE messages that leave out executed order-requests."""

    name = "omit_view_change"

    def intercept(self, ctx, dst, msg):
        if not isinstance(msg, ViewChangeMsg) or not msg.executed:
            return [Deliver()]
        keep = ctx.rng.randint(0, len(msg.executed) - 1)
        bogus = dataclasses.replace(msg, executed=msg.executed[:keep], signature=b"")
        return [Replace([(dst, ctx.sign(bogus), 0)])]


class Fuzz(Script):
    """Random mix: a seeded subset of the scripts above plus per-message noise."""

    name = "fuzz"

    def __init__(
        self,
        drop: float = 0.05,
        delay: float = 0.1,
        max_delay: int = 100,
        duplicate: float = 0.05,
        replay: float = 0.05,
        mutate: float = 0.05,
        behaviours: list[str] | None = None,
        **params,
    ):
        super().__init__(**params)
        self.drop, self.delay, self.max_delay = drop, delay, max_delay
        self.duplicate, self.replay, self.mutate = duplicate, replay, mutate
        self.behaviour_names = behaviours
        self.behaviours: list[Script] | None = None

    def _setup(self, ctx: AdversaryContext) -> None:
        names = self.behaviour_names
        if names is None:
            pool = sorted(set(SCRIPTS) - {"fuzz", "honest", "drop_all", "delay"})
            names = [s for s in pool if ctx.rng.random() < 0.4]
        self.behaviours = [SCRIPTS[s]() for s in names]

    def intercept(self, ctx, dst, msg):
        if self.behaviours is None:
            self._setup(ctx)
        actions: list[Action] = [Deliver()]
        for b in self.behaviours:
            actions = b.intercept(ctx, dst, msg)
            if not (len(actions) == 1 and isinstance(actions[0], Deliver)):
                break
        if not (len(actions) == 1 and isinstance(actions[0], Deliver)):
            return actions
        r = ctx.rng.random()
        if r < self.drop:
            return [Drop()]
        r -= self.drop
        if r < self.delay:
            return [Delay(ctx.rng.randint(1, self.max_delay))]
        r -= self.delay
        if r < self.duplicate:
            return [Deliver(), Replace([(dst, msg, ctx.rng.randint(0, self.max_delay))])]
        r -= self.duplicate
        if r < self.replay and ctx.seen_messages:
            return [Deliver(), Replace([(dst, ctx.rng.choice(ctx.seen_messages[-50:]), 0)])]
        r -= self.replay
        if r < self.mutate:
            bogus = mutate(ctx, msg)
            if bogus is not None:
                return [Replace([(dst, bogus, 0)])]
        return [Deliver()]


def mutate(ctx: AdversaryContext, msg: Any) -> Any:
    """Re-signed variant of one of the node's own messages with a field changed."""
    rng = ctx.rng
    if isinstance(msg, ReplyMsg):
        return ctx.sign(dataclasses.replace(msg, response=msg.response + b"?", signature=b""))
    if isinstance(msg, CheckpointMsg):
        return ctx.sign(dataclasses.replace(msg, state_digest=bytes(32), signature=b""))
    if isinstance(msg, ViewConfirmMsg):
        return ctx.sign(dataclasses.replace(msg, start_length=msg.start_length + rng.randint(1, 3), signature=b""))
    if isinstance(msg, ViewChangeMsg) and msg.executed:
        return ctx.sign(dataclasses.replace(msg, executed=msg.executed[:-1], signature=b""))
    if isinstance(msg, OrderRequestMsg):
        return ctx.alternative_order(msg)
    return None


SCRIPTS: dict[str, type[Script]] = {
    cls.name: cls
    for cls in (
        Script,
        DropAll,
        DropSelective,
        DelayAll,
        Equivocate,
        CounterBurn,
        SelectiveOrder,
        StaleNewView,
        SplitConfirm,
        OmitViewChange,
        Fuzz,
    )
}


def make_script(name: str, params: dict[str, Any] | None = None) -> Script:
    return SCRIPTS[name](**(params or {}))
