"""Deterministic discrete-event network simulator.

Events are processed in ``(time, insertion sequence)`` order from a heap, so a
run is a pure function of its :class:`~saczyzzyva.scenario.ScenarioConfig`
(including the seed). Every send, timer, fault action and node log event is
appended to the transcript as a flat dict.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field, is_dataclass
from pathlib import Path
from typing import Any, Iterable

from . import crypto
from . import tmc as tmc_mod
from .adversary import (
    AdversaryContext,
    AdversaryViolation,
    Delay,
    Deliver,
    Drop,
    Replace,
    make_script,
)
from .client import Client
from .messages import (
    CommitMsg,
    Genesis,
    LocalCommitMsg,
    Message,
    NewViewMsg,
    OrderRequestMsg,
    ReplyMsg,
    RequestMsg,
)
from .replica import Replica
from .scenario import ConfigError, Partition, ScenarioConfig
from .tmc import Attestation, OrderingCertificate, SignedSequencer, TrustedCounter

__all__ = ["ConfigError", "Partition", "Simulator", "Transcript", "partition", "run"]


@dataclass
class Transcript:
    records: list[dict[str, Any]] = field(default_factory=list)

    @property
    def config(self) -> dict[str, Any]:
        return self.records[0] if self.records and self.records[0]["type"] == "config" else {}

    def of_type(self, *types: str) -> list[dict[str, Any]]:
        return [r for r in self.records if r["type"] in types]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path: str | Path) -> Transcript:
        with open(path) as fh:
            return cls([json.loads(line) for line in fh if line.strip()])

    def messages_by_request(self) -> dict[tuple[str, int], int]:
        counts: dict[tuple[str, int], int] = {}
        for r in self.records:
            if r["type"] == "msg" and r.get("key") is not None:
                key = (r["key"][0], r["key"][1])
                counts[key] = counts.get(key, 0) + 1
        return counts

    def metrics_csv(self) -> str:
        from .harness.metrics import metrics_csv

        return metrics_csv([self])


class NodeEnv:
    def __init__(self, sim: Simulator, addr: Any):
        self.sim = sim
        self.addr = addr

    @property
    def now(self) -> int:
        return self.sim.time

    def send(self, dst: Any, msg: Any) -> None:
        self.sim.send(self.addr, dst, msg)

    def set_timer(self, name: str, delay: int) -> None:
        self.sim.set_timer(self.addr, name, delay)

    def cancel_timer(self, name: str) -> None:
        self.sim.cancel_timer(self.addr, name)

    def log(self, event: str, **fields: Any) -> None:
        self.sim.record(event, node=self.addr, **fields)


def request_key(msg: Any) -> tuple[str, int] | None:
    """The client request a message belongs to, for per-request accounting."""
    if isinstance(msg, RequestMsg):
        return (msg.client, msg.request_id)
    if isinstance(msg, OrderRequestMsg):
        return (msg.request.client, msg.request.request_id)
    if isinstance(msg, ReplyMsg):
        r = msg.order_request.request
        return (r.client, r.request_id)
    if isinstance(msg, CommitMsg):
        r = msg.certificate.replies[0].order_request.request if msg.certificate.replies else None
        return (r.client, r.request_id) if r is not None else None
    if isinstance(msg, LocalCommitMsg):
        return (msg.client, msg.request_id)
    return None


def _children(obj: Any) -> Iterable[Any]:
    if isinstance(obj, (tuple, list)):
        yield from obj
    elif is_dataclass(obj):
        for name in obj.__dataclass_fields__:
            yield getattr(obj, name)


class Simulator:
    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.time = 0
        self._seq = 0
        self._queue: list[tuple[int, int, str, Any]] = []
        self._timer_gen: dict[tuple[Any, str], int] = {}
        self.transcript = Transcript()
        self.rng = random.Random(f"{cfg.seed}/net")
        key_rng = random.Random(f"{cfg.seed}/keys")
        scheme = cfg.signature_scheme

        n, n_tmc = cfg.replicas, cfg.tmc_replicas
        self.n = n
        self.faults = {fa.node: fa for fa in cfg.faults}
        self.crashed: set[Any] = set()
        self.slow: dict[int, tuple[int, int]] = {}

        replica_keys = [crypto.generate_keypair(key_rng, scheme) for _ in range(n)]
        self.tmcs: list[TrustedCounter | None] = []
        for i in range(n):
            if cfg.variant.value == "saczyzzyva" and i < n_tmc:
                fa = self.faults.get(i)
                tmc = TrustedCounter(crypto.generate_keypair(key_rng, scheme), key_rng, scheme)
                tmc.on_issue = self._make_issue_hook(i)
                if fa is not None and fa.kind == "byzantine" and fa.mode == "full":
                    tmc = None
                self.tmcs.append(tmc)
            else:
                self.tmcs.append(None)
        self.client_names = [f"c{i}" for i in range(cfg.workload.clients)]
        client_keys = {name: crypto.generate_keypair(key_rng, scheme) for name in self.client_names}

        primary0 = 0
        if cfg.variant.value == "saczyzzyva":
            orderer0, att = tmc_mod.init(self.tmcs[primary0])
            genesis_pk = orderer0.public_key
        else:
            orderer0 = SignedSequencer(replica_keys[primary0])
            genesis_pk = replica_keys[primary0].public_key
        self.genesis = Genesis(
            variant=cfg.variant,
            f=cfg.f,
            n=n,
            n_tmc=n_tmc,
            replica_keys=tuple(k.public_key for k in replica_keys),
            tmc_keys=tuple(t.identity_pk if t is not None else None for t in self.tmcs),
            client_keys={name: k.public_key for name, k in client_keys.items()},
            genesis_counter_pk=genesis_pk,
            checkpoint_interval=cfg.checkpoint_interval,
            window=cfg.window,
        )
        self.replicas = [
            Replica(
                i,
                self.genesis,
                replica_keys[i],
                trusted=self.tmcs[i],
                genesis_orderer=orderer0 if i == primary0 else None,
                timeout=cfg.replica_timeout,
            )
            for i in range(n)
        ]
        self.clients: dict[str, Client] = {}
        for idx, name in enumerate(self.client_names):
            self.clients[name] = Client(
                name,
                self.genesis,
                client_keys[name],
                timeout=cfg.client_wait,
                ops=cfg.workload.ops(idx),
                completion=cfg.completion_override,
            )
        self.envs = {i: NodeEnv(self, i) for i in range(n)}
        self.envs.update({name: NodeEnv(self, name) for name in self.client_names})

        # adversary bookkeeping
        self.byzantine: dict[int, tuple[Any, AdversaryContext]] = {}
        self._owned_keys = {replica_keys[i].public_key for i in cfg.byzantine()}
        self._owned_tmc = {t.identity_pk for i, t in enumerate(self.tmcs) if t is not None and i in cfg.byzantine()}
        self._observed: set[bytes] = set()
        self._issued: set[bytes] = set()
        self._seen_requests: list[RequestMsg] = []
        self._seen_messages: list[Any] = []
        for fa in cfg.faults:
            if fa.kind != "byzantine":
                continue
            ctx = AdversaryContext(
                node_id=fa.node,
                replica=self.replicas[fa.node],
                genesis=self.genesis,
                keys=replica_keys[fa.node],
                rng=random.Random(f"{cfg.seed}/adversary/{fa.node}"),
                now=lambda: self.time,
                partial=fa.mode == "partial",
                seen_requests=self._seen_requests,
                seen_messages=self._seen_messages,
            )
            self.byzantine[fa.node] = (make_script(fa.script, fa.params), ctx)

        self._cert_keys: dict[bytes, str | None] = {}
        self.completed: dict[str, int] = {name: 0 for name in self.client_names}
        self.done_at: int | None = None

    # ------------------------------------------------------------------ events

    def _push(self, at: int, kind: str, payload: Any) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (at, self._seq, kind, payload))

    def record(self, type_: str, **fields: Any) -> None:
        rec = {"type": type_, "t": self.time}
        rec.update(fields)
        self.transcript.records.append(rec)

    def _make_issue_hook(self, node: int):
        def hook(instance: tmc_mod.CounterInstance, cert: OrderingCertificate) -> None:
            self._issued.add(cert.signature)
            self.record(
                "issue",
                node=node,
                pk=instance.public_key.hex()[:16],
                counter=cert.counter_value,
                digest=cert.message_digest.hex()[:16],
            )

        return hook

    def set_timer(self, owner: Any, name: str, delay: int) -> None:
        key = (owner, name)
        gen = self._timer_gen.get(key, 0) + 1
        self._timer_gen[key] = gen
        self._push(self.time + max(0, delay), "timer", (owner, name, gen))

    def cancel_timer(self, owner: Any, name: str) -> None:
        key = (owner, name)
        if key in self._timer_gen:
            self._timer_gen[key] += 1

    # ------------------------------------------------------------------ network

    def _group(self, addr: Any) -> int | None:
        d = self.cfg.delay
        if not d.groups:
            return None
        if isinstance(addr, str):
            return d.client_group
        for gi, g in enumerate(d.groups):
            if addr in g:
                return gi
        return None

    def _is_correct(self, addr: Any) -> bool:
        return not (isinstance(addr, int) and addr in self.faults)

    def delay_for(self, src: Any, dst: Any) -> tuple[int, bool]:
        """One-way delay and whether a partition holds the message back."""
        d = self.cfg.delay
        if src == dst:
            return d.self_delay, False
        link = d.links.get(f"{src}->{dst}")
        if link is None:
            gs, gd = self._group(src), self._group(dst)
            link = d.inter_group if (gs is not None and gd is not None and gs != gd and d.inter_group is not None) else d.base
        delay = link + (self.rng.randint(0, d.jitter) if d.jitter else 0)
        if self.time < d.gst and d.async_extra:
            delay += self.rng.randint(0, d.async_extra)
        elif self.time >= d.gst and self._is_correct(src) and self._is_correct(dst):
            delay = min(delay, d.effective_bound)
        for node in (src, dst):
            if node in self.slow and self.time >= self.slow[node][0]:
                delay += self.slow[node][1]
        held = False
        for p in self.cfg.partitions:
            if p.start <= self.time < p.end and self._split(p, src, dst):
                if self.time + delay < p.end:
                    delay = p.end - self.time
                    held = True
        return delay, held

    @staticmethod
    def _split(p: Partition, src: Any, dst: Any) -> bool:
        gs = gd = None
        for gi, g in enumerate(p.groups):
            if src in g:
                gs = gi
            if dst in g:
                gd = gi
        return gs is not None and gd is not None and gs != gd

    def send(self, src: Any, dst: Any, msg: Any) -> None:
        if src in self.crashed:
            return
        if src in self.byzantine:
            script, ctx = self.byzantine[src]
            self._observe(msg)
            for action in script.intercept(ctx, dst, msg):
                if isinstance(action, Deliver):
                    self._transmit(src, dst, msg)
                elif isinstance(action, Drop):
                    self._transmit(src, dst, msg, drop=action.reason)
                elif isinstance(action, Delay):
                    self._transmit(src, dst, msg, extra=action.amount)
                elif isinstance(action, Replace):
                    for rdst, rmsg, rdelay in action.sends:
                        self._check_capability(src, rmsg)
                        self._observe(rmsg)
                        self._transmit(src, rdst, rmsg, extra=rdelay, replaced=True)
            return
        self._transmit(src, dst, msg)

    def _transmit(self, src: Any, dst: Any, msg: Any, extra: int = 0, drop: str | None = None, replaced: bool = False) -> None:
        self._seq += 1
        rec: dict[str, Any] = {
            "type": "msg",
            "t": self.time,
            "i": self._seq,
            "src": src,
            "dst": dst,
            "kind": msg.kind if isinstance(msg, Message) else type(msg).__name__,
        }
        key = request_key(msg) if isinstance(msg, Message) else None
        if key is not None:
            rec["key"] = list(key)
        if isinstance(src, int):
            rec["phase"] = self.replicas[src].phase.value
        if src in self.byzantine:
            rec["byz"] = True
        if replaced:
            rec["replaced"] = True
        if isinstance(msg, OrderRequestMsg):
            rec["view"] = msg.view
            rec["counter"] = msg.counter
            rec["req"] = msg.request.digest.hex()[:16]
            rec["cpk"] = self._cert_key(msg)
        if drop is not None:
            rec["drop"] = drop
            self.transcript.records.append(rec)
            return
        delay, held = self.delay_for(src, dst)
        delay += extra
        rec["at"] = self.time + delay
        if held:
            rec["held"] = True
        if extra:
            rec["extra"] = extra
        self.transcript.records.append(rec)
        self._push(self.time + delay, "deliver", (src, dst, msg))

    def _cert_key(self, orq: OrderRequestMsg) -> str | None:
        """Which known counter key (if any) the ordering certificate verifies under."""
        sig = orq.cert.signature
        if sig in self._cert_keys:
            return self._cert_keys[sig]
        found = None
        payload_ok = len(orq.cert.message_digest) == crypto.DIGEST_SIZE and orq.cert.counter_value >= 1
        if payload_ok:
            primary = self.genesis.primary(orq.view)
            if self.genesis.uses_tmc:
                candidates = [inst.public_key for t in self.tmcs if t is not None for inst in t.instances]
            else:
                candidates = [self.genesis.replica_keys[primary]]
            for pk in candidates:
                if tmc_mod.verify_certificate(pk, orq.cert):
                    found = pk.hex()[:16]
                    break
        self._cert_keys[sig] = found
        return found

    # ------------------------------------------------------------------ adversary soundness

    def _observe(self, msg: Any) -> None:
        stack = [msg]
        while stack:
            obj = stack.pop()
            enc = getattr(obj, "encoded", None)
            if enc is not None:
                if enc in self._observed:
                    continue
                self._observed.add(enc)
                if isinstance(obj, RequestMsg):
                    self._seen_requests.append(obj)
                if isinstance(obj, (NewViewMsg, OrderRequestMsg, RequestMsg)):
                    self._seen_messages.append(obj)
            stack.extend(c for c in _children(obj) if is_dataclass(c) or isinstance(c, tuple))

    def _check_capability(self, node: int, msg: Any) -> None:
        stack = [msg]
        while stack:
            obj = stack.pop()
            enc = getattr(obj, "encoded", None)
            if enc is not None and enc in self._observed:
                continue
            if isinstance(obj, OrderingCertificate):
                if obj.signature not in self._issued and self._forged_certificate(obj):
                    raise AdversaryViolation(f"replica {node} produced an ordering certificate it cannot sign")
            elif isinstance(obj, Attestation):
                owned = obj.identity_pk in self._owned_keys or obj.identity_pk in self._owned_tmc
                if not owned and tmc_mod.verify_attestation(obj.identity_pk, obj):
                    raise AdversaryViolation(f"replica {node} produced an attestation it cannot sign")
            elif isinstance(obj, Message) and getattr(obj, "signature", b""):
                pk = self._signer(obj)
                if pk is not None and pk not in self._owned_keys and crypto.verify(pk, obj.signing_bytes, obj.signature):
                    raise AdversaryViolation(f"replica {node} produced a {obj.kind} signed by someone else")
            stack.extend(c for c in _children(obj) if is_dataclass(c) or isinstance(c, tuple))

    def _forged_certificate(self, cert: OrderingCertificate) -> bool:
        keys = [inst.public_key for t in self.tmcs if t is not None for inst in t.instances]
        keys += [k for k in self.genesis.replica_keys if k not in self._owned_keys]
        return any(tmc_mod.verify_certificate(k, cert) for k in keys)

    def _signer(self, msg: Any) -> bytes | None:
        g = self.genesis
        if isinstance(msg, (RequestMsg, CommitMsg)):
            return g.client_keys.get(msg.client)
        if isinstance(msg, (OrderRequestMsg, NewViewMsg)):
            return g.replica_key(g.primary(msg.view))
        rid = getattr(msg, "replica_id", None)
        return g.replica_key(rid) if rid is not None else None

    # ------------------------------------------------------------------ run loop

    def _schedule_faults(self) -> None:
        for fa in self.cfg.faults:
            if fa.kind == "crash":
                self._push(fa.at, "crash", fa.node)
            elif fa.kind == "slow":
                self.slow[fa.node] = (fa.at, fa.extra)
            elif fa.kind == "tmc_crash":
                self._push(fa.at, "tmc_crash", fa.node)
                if fa.recover_at is not None:
                    self._push(fa.recover_at, "tmc_recover", fa.node)

    def _apply_fault(self, kind: str, node: int) -> None:
        self.record(kind, node=node)
        if kind == "crash":
            self.crashed.add(node)
        elif kind == "tmc_crash" and self.tmcs[node] is not None:
            self.tmcs[node].crash()
        elif kind == "tmc_recover" and self.tmcs[node] is not None:
            self.tmcs[node].recover()

    def _header(self) -> None:
        cfg = self.cfg
        lim = cfg.limits
        self.record(
            "config",
            scenario=cfg.to_dict(),
            n=self.n,
            n_tmc=cfg.tmc_replicas,
            faulty=sorted(cfg.faulty()),
            byzantine=sorted(cfg.byzantine()),
            completion=lim.completion,
            commit_quorum=lim.commit_quorum,
            fallback=lim.fallback,
            gst=cfg.delay.gst,
            bound=cfg.delay.effective_bound,
            clients=self.client_names,
            requests=cfg.workload.requests,
        )

    def _on_complete(self, client: Client, req: RequestMsg, c: Any) -> None:
        self.completed[client.name] += 1
        if self.done_at is None and all(v >= self.cfg.workload.requests for v in self.completed.values()):
            self.done_at = self.time

    def run(self) -> Transcript:
        self._header()
        self._schedule_faults()
        for node in [fa.node for fa in self.cfg.faults if fa.kind == "crash" and fa.at <= 0]:
            self.crashed.add(node)
        for i, r in enumerate(self.replicas):
            r.start(self.envs[i])
        for name, c in self.clients.items():
            c.on_complete = self._on_complete
            c.start(self.envs[name])
        if not self.client_names or self.cfg.workload.requests == 0:
            self.done_at = 0
        settle = self.cfg.settle
        limit = self.cfg.time_limit
        while self._queue:
            at, _, kind, payload = self._queue[0]
            if at > limit:
                break
            if settle is not None and self.done_at is not None and at > self.done_at + settle:
                break
            heapq.heappop(self._queue)
            self.time = at
            if kind == "deliver":
                src, dst, msg = payload
                if dst in self.crashed:
                    continue
                if dst in self.byzantine:
                    self._observe(msg)
                node = self.replicas[dst] if isinstance(dst, int) else self.clients.get(dst)
                if node is not None:
                    node.on_message(src, msg)
            elif kind == "timer":
                owner, name, gen = payload
                if self._timer_gen.get((owner, name)) != gen or owner in self.crashed:
                    continue
                self.record("timer", node=owner, name=name)
                node = self.replicas[owner] if isinstance(owner, int) else self.clients[owner]
                node.on_timer(name)
            else:
                self._apply_fault(kind, payload)
        self.record(
            "end",
            completed=dict(self.completed),
            done_at=self.done_at,
            quiescent=not self._queue,
            stable_checkpoints={str(i): r.stable_count for i, r in enumerate(self.replicas) if self._is_correct(i)},
            views={str(i): r.installed_view for i, r in enumerate(self.replicas) if self._is_correct(i)},
        )
        return self.transcript


def run(scenario: ScenarioConfig) -> Transcript:
    """Execute ``scenario`` to quiescence (or its time bound) and return the transcript."""
    return Simulator(scenario).run()


def partition(scenario: ScenarioConfig, groups: list[list[Any]], from_time: int, to_time: int) -> ScenarioConfig:
    """Copy of ``scenario`` where messages across ``groups`` are held back during the window."""
    flat = [x for g in groups for x in g]
    if len(flat) != len(set(flat)):
        raise ConfigError("partition groups must be disjoint")
    return scenario.replace(partitions=[*scenario.partitions, Partition(groups, from_time, to_time)])

