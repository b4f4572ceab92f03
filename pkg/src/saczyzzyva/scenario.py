"""Scenario description: protocol, faults, network and workload.

A :class:`ScenarioConfig` is plain data. ``to_dict``/``from_dict`` map it to
the nested-table layout used by the TOML files under ``configs/``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

from .variants import ProtocolVariant, Thresholds, thresholds

FAULT_KINDS = ("crash", "slow", "tmc_crash", "byzantine")


class ConfigError(ValueError):
    pass


@dataclass
class DelayModel:
    """One-way delays in logical time units.

    Before ``gst`` every message may take up to ``async_extra`` extra units;
    from ``gst`` on, messages between correct nodes take at most ``bound``.
    """

    base: int = 10
    jitter: int = 0
    self_delay: int = 0
    gst: int = 0
    async_extra: int = 0
    bound: int | None = None
    # optional regions: lists of replica ids; clients sit in ``client_group``
    groups: list[list[int]] = field(default_factory=list)
    inter_group: int | None = None
    client_group: int = 0
    # per-link overrides, keyed "src->dst"
    links: dict[str, int] = field(default_factory=dict)

    @property
    def max_delay(self) -> int:
        top = max([self.base, self.inter_group or 0, *self.links.values()])
        return top + self.jitter

    @property
    def effective_bound(self) -> int:
        return self.bound if self.bound is not None else self.max_delay

    @property
    def mean(self) -> float:
        return self.base + self.jitter / 2


@dataclass
class Fault:
    node: int
    kind: str
    at: int = 0
    extra: int = 0
    recover_at: int | None = None
    script: str = ""
    # "partial": the trusted counter keeps working correctly;
    # "full": the node has no usable trusted counter at all
    mode: str = "partial"
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class Partition:
    groups: list[list[Any]]
    start: int
    end: int


@dataclass
class Workload:
    clients: int = 1
    requests: int = 50
    # formatted with ``client`` (client index) and ``i`` (request number)
    op: str = "incr ctr"

    def ops(self, client: int) -> list[bytes]:
        return [self.op.format(client=client, i=i).encode() for i in range(1, self.requests + 1)]


@dataclass
class ScenarioConfig:
    variant: ProtocolVariant = ProtocolVariant.SACZYZZYVA
    f: int = 1
    n: int | None = None
    n_tmc: int | None = None
    delay: DelayModel = field(default_factory=DelayModel)
    faults: list[Fault] = field(default_factory=list)
    partitions: list[Partition] = field(default_factory=list)
    workload: Workload = field(default_factory=Workload)
    checkpoint_interval: int = 10
    window: int = 2
    timeout: int | None = None
    client_timeout: int | None = None
    time_limit: int = 1_000_000
    # once every client is done, keep running this long (None: until quiescent)
    settle: int | None = None
    seed: int = 0
    signature_scheme: str = "test"
    # lowers the client completion threshold; only for mutation tests
    completion_override: int | None = None
    name: str = ""

    def __post_init__(self) -> None:
        self.variant = ProtocolVariant.parse(self.variant)

    @property
    def replicas(self) -> int:
        return self.n if self.n is not None else thresholds(self.variant, self.f).n

    @property
    def tmc_replicas(self) -> int:
        if self.n_tmc is not None:
            return self.n_tmc
        return self.replicas

    @property
    def limits(self) -> Thresholds:
        return thresholds(self.variant, self.f, self.replicas)

    @property
    def replica_timeout(self) -> int:
        return self.timeout if self.timeout is not None else 6 * self.delay.max_delay

    @property
    def client_wait(self) -> int:
        if self.client_timeout is not None:
            return self.client_timeout
        return max(1, round(4 * self.delay.mean))

    def faulty(self) -> set[int]:
        return {fa.node for fa in self.faults}

    def byzantine(self) -> set[int]:
        return {fa.node for fa in self.faults if fa.kind == "byzantine"}

    def validate(self) -> None:
        n, f = self.replicas, self.f
        if f < 0 or n < 1:
            raise ConfigError(f"need f >= 0 and n >= 1 (got f={f}, n={n})")
        if self.variant is ProtocolVariant.SACZYZZYVA and not (f + 1 <= self.tmc_replicas <= n):
            raise ConfigError(f"n_tmc must lie in [f+1, n] = [{f + 1}, {n}], got {self.tmc_replicas}")
        if not 1 <= self.tmc_replicas <= n:
            raise ConfigError("n_tmc out of range")
        nodes = [fa.node for fa in self.faults]
        if len(nodes) != len(set(nodes)):
            raise ConfigError("a node may carry at most one fault")
        if len(nodes) > f:
            raise ConfigError(f"{len(nodes)} faulty replicas exceed the budget f={f}")
        for fa in self.faults:
            if not 0 <= fa.node < n:
                raise ConfigError(f"fault on unknown replica {fa.node}")
            if fa.kind not in FAULT_KINDS:
                raise ConfigError(f"unknown fault kind {fa.kind!r}")
            if fa.kind == "byzantine":
                from .adversary import SCRIPTS

                if fa.script not in SCRIPTS:
                    raise ConfigError(f"unknown adversary script {fa.script!r}")
                if fa.mode not in ("partial", "full"):
                    raise ConfigError(f"unknown Byzantine mode {fa.mode!r}")
                if (
                    fa.mode == "full"
                    and self.variant is ProtocolVariant.SACZYZZYVA
                    and fa.node < self.tmc_replicas
                ):
                    raise ConfigError("a fully Byzantine replica cannot hold a trusted counter")
        for p in self.partitions:
            flat = [x for g in p.groups for x in g]
            if len(flat) != len(set(flat)):
                raise ConfigError("partition groups must be disjoint")
            if p.end < p.start:
                raise ConfigError("partition ends before it starts")
        if self.checkpoint_interval < 1 or self.window < 1:
            raise ConfigError("checkpoint interval and window must be positive")
        if self.workload.clients < 0 or self.workload.requests < 0:
            raise ConfigError("workload sizes must be non-negative")
        if self.signature_scheme not in ("test", "ed25519"):
            raise ConfigError(f"unknown signature scheme {self.signature_scheme!r}")

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ScenarioConfig:
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            if "delay" in data:
                data["delay"] = DelayModel(**data["delay"])
            if "workload" in data:
                data["workload"] = Workload(**data["workload"])
            data["faults"] = [Fault(**fa) for fa in data.get("faults", [])]
            data["partitions"] = [Partition(**p) for p in data.get("partitions", [])]
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def replace(self, **changes: Any) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)
