"""Transcript invariant checks.

Every check reads only transcript records, so it works the same on a live
:class:`~saczyzzyva.simnet.Transcript` and on one loaded back from JSONL.
Records written by faulty replicas are ignored: the properties are about
correct replicas and clients.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Iterator

from ..messages import GENESIS_HISTORY

GENESIS_HEX = GENESIS_HISTORY.hex()


@dataclass(frozen=True)
class Violation:
    invariant: str
    index: int
    detail: str

    def __str__(self) -> str:
        return f"[{self.invariant}] record {self.index}: {self.detail}"


class _View:
    """Indexed access to one transcript."""

    def __init__(self, records: list[dict[str, Any]]):
        self.records = records
        self.config = records[0] if records and records[0]["type"] == "config" else {}
        self.faulty = set(self.config.get("faulty", []))
        self.variant = self.config.get("scenario", {}).get("variant", "saczyzzyva")
        self.by_type: dict[str, list[tuple[int, dict]]] = defaultdict(list)
        for i, r in enumerate(records):
            self.by_type[r["type"]].append((i, r))
        # chain links of every history a correct replica built
        self.prev: dict[str, str] = {}
        for _, r in self.by_type["execute"]:
            if self.correct(r["node"]):
                self.prev[r["digest"]] = r["prev"]

    def correct(self, node: Any) -> bool:
        return not (isinstance(node, int) and node in self.faulty)

    def ancestors(self, digest: str, length: int) -> list[str] | None:
        """Digests at lengths ``0..length`` of the history ending in ``digest``."""
        out = [digest]
        d = digest
        for _ in range(length):
            d = self.prev.get(d)
            if d is None:
                return None
            out.append(d)
        if out[-1] != GENESIS_HEX:
            return None
        out.reverse()
        return out


Check = Callable[[_View], Iterator[Violation]]
INVARIANTS: dict[str, Check] = {}


def invariant(name: str) -> Callable[[Check], Check]:
    def register(fn: Check) -> Check:
        INVARIANTS[name] = fn
        return fn

    return register


@invariant("prefix_safety")
def _prefix_safety(v: _View) -> Iterator[Violation]:
    done = v.by_type["complete"]
    if not done:
        return
    top_i, top = max(done, key=lambda ir: (ir[1]["length"], -ir[0]))
    chain = v.ancestors(top["digest"], top["length"])
    if chain is None:
        yield Violation("prefix_safety", top_i, "completed history is not one any correct replica executed")
        return
    for i, c in done:
        if c["length"] > len(chain) - 1 or chain[c["length"]] != c["digest"]:
            yield Violation(
                "prefix_safety",
                i,
                f"{c['client']}#{c['rid']} completed with a history that is not a prefix of "
                f"{top['client']}#{top['rid']}'s",
            )


@invariant("view_change_inclusion")
def _inclusion(v: _View) -> Iterator[Violation]:
    done = v.by_type["complete"]
    for i, inst in v.by_type["install"]:
        if not v.correct(inst["node"]):
            continue
        chain = None
        for _, c in done:
            # completions inside the installed view itself come after its start state
            if c["t"] >= inst["t"] or c["view"] >= inst["view"]:
                continue
            if chain is None:
                chain = v.ancestors(inst["digest"], inst["length"]) or []
            if c["length"] >= len(chain) or chain[c["length"]] != c["digest"]:
                yield Violation(
                    "view_change_inclusion",
                    i,
                    f"replica {inst['node']} installed view {inst['view']} without "
                    f"{c['client']}#{c['rid']}, completed at t={c['t']}",
                )


@invariant("intra_view_uniqueness")
def _uniqueness(v: _View) -> Iterator[Violation]:
    if v.variant != "saczyzzyva":
        return
    seen: dict[tuple[int, int], tuple[str, int]] = {}
    for i, r in v.by_type["execute"]:
        if not v.correct(r["node"]):
            continue
        key = (r["view"], r["counter"])
        if key in seen and seen[key][0] != r["request"]:
            yield Violation(
                "intra_view_uniqueness",
                i,
                f"view {key[0]} counter {key[1]} bound to two requests (first at record {seen[key][1]})",
            )
        seen.setdefault(key, (r["request"], i))


@invariant("initial_view_consistency")
def _initial_view(v: _View) -> Iterator[Violation]:
    start: dict[int, tuple[tuple, int]] = {}
    for i, r in v.by_type["install"]:
        if not v.correct(r["node"]):
            continue
        state = (r["length"], r["digest"], r["counter_pk"])
        if r["view"] in start and start[r["view"]][0] != state:
            yield Violation(
                "initial_view_consistency",
                i,
                f"replica {r['node']} installed view {r['view']} from a different starting state",
            )
        start.setdefault(r["view"], (state, i))


@invariant("counter_consecutiveness")
def _consecutive(v: _View) -> Iterator[Violation]:
    events = sorted(v.by_type["install"] + v.by_type["transfer"] + v.by_type["execute"], key=lambda ir: ir[0])
    expect: dict[Any, tuple[int, int]] = defaultdict(lambda: (0, 1))
    for i, r in events:
        node = r["node"]
        if not v.correct(node):
            continue
        if r["type"] == "install":
            expect[node] = (r["view"], 1)
        elif r["type"] == "transfer":
            expect[node] = (r["view"], r["counter"] + 1)
        elif r["mode"] == "exec":
            view, nxt = expect[node]
            if (r["view"], r["counter"]) != (view, nxt):
                yield Violation(
                    "counter_consecutiveness",
                    i,
                    f"replica {node} executed ({r['view']}, {r['counter']}), expected ({view}, {nxt})",
                )
            expect[node] = (r["view"], r["counter"] + 1)


@invariant("quorum_thresholds")
def _thresholds(v: _View) -> Iterator[Violation]:
    completion = v.config.get("completion", 0)
    commit = v.config.get("commit_quorum", 0)
    for i, c in v.by_type["complete"]:
        need = commit if c["fallback"] else completion
        if c["support"] < need:
            yield Violation(
                "quorum_thresholds", i, f"{c['client']}#{c['rid']} completed with {c['support']} < {need} replies"
            )


@invariant("non_equivocation")
def _non_equivocation(v: _View) -> Iterator[Violation]:
    if v.variant != "saczyzzyva":
        return
    bound: dict[tuple[str, int], tuple[str, int]] = {}
    for i, r in v.by_type["msg"]:
        if r["kind"] != "ORDER-REQUEST" or r.get("cpk") is None:
            continue
        key = (r["cpk"], r["counter"])
        if key in bound and bound[key][0] != r["req"]:
            yield Violation(
                "non_equivocation", i, f"counter {key[1]} of instance {key[0]} certifies two requests"
            )
        bound.setdefault(key, (r["req"], i))
    issued: dict[tuple[str, int], str] = {}
    for i, r in v.by_type["issue"]:
        key = (r["pk"], r["counter"])
        if key in issued and issued[key] != r["digest"]:
            yield Violation("non_equivocation", i, f"trusted counter issued value {key[1]} twice")
        issued.setdefault(key, r["digest"])


@invariant("phase_discipline")
def _phase(v: _View) -> Iterator[Violation]:
    for i, r in v.by_type["execute"]:
        if v.correct(r["node"]) and r["mode"] == "exec" and r["phase"] != "active":
            yield Violation("phase_discipline", i, f"replica {r['node']} executed while changing views")
    for i, r in v.by_type["msg"]:
        if r["kind"] == "REPLY" and v.correct(r["src"]) and r.get("phase") == "view-changing":
            yield Violation("phase_discipline", i, f"replica {r['src']} replied while changing views")


@invariant("liveness")
def _liveness(v: _View) -> Iterator[Violation]:
    end = v.by_type["end"]
    if not end:
        return
    i, r = end[-1]
    want = v.config.get("requests", 0)
    for client, got in sorted(r["completed"].items()):
        if got < want:
            yield Violation("liveness", i, f"client {client} completed {got} of {want} requests")


@invariant("synchrony")
def _synchrony(v: _View) -> Iterator[Violation]:
    gst = v.config.get("gst", 0)
    bound = v.config.get("bound")
    if bound is None:
        return
    for i, r in v.by_type["msg"]:
        if r["t"] < gst or "at" not in r or r.get("held") or r.get("extra") or r["src"] == r["dst"]:
            continue
        if not (v.correct(r["src"]) and v.correct(r["dst"])):
            continue
        if r["at"] - r["t"] > bound:
            yield Violation("synchrony", i, f"message took {r['at'] - r['t']} > {bound} after GST")


def check_invariants(transcript: Any, only: list[str] | None = None) -> list[Violation]:
    """Evaluate the registered invariants; violations carry record indices."""
    records = transcript.records if hasattr(transcript, "records") else list(transcript)
    view = _View(records)
    out: list[Violation] = []
    for name, fn in INVARIANTS.items():
        if only is None or name in only:
            out.extend(fn(view))
    return out
