from collections import defaultdict

import pytest

from saczyzzyva.harness import check_invariants, run_scenario
from saczyzzyva.scenario import ConfigError, DelayModel, Fault, ScenarioConfig, Workload
from saczyzzyva.simnet import Simulator, Transcript, partition, run


def cfg(**kw):
    kw.setdefault("workload", Workload(clients=1, requests=10))
    return ScenarioConfig(**kw)


@pytest.mark.parametrize("variant,f,n", [("saczyzzyva", 1, 4), ("zyzzyva", 1, 4), ("zyzzyva5", 1, 6), ("saczyzzyva", 2, 7)])
def test_fault_free_messages_per_request(variant, f, n):
    t = run(cfg(variant=variant, f=f))
    counts = t.messages_by_request()
    assert len(counts) == 10
    # request to the primary, an order-request to each replica, a reply from each
    assert set(counts.values()) == {2 * n + 1}


def test_runs_are_deterministic(tmp_path):
    c = cfg(delay=DelayModel(jitter=7), seed=5, faults=[Fault(node=2, kind="crash", at=50)])
    a, b = run(c), run(c)
    assert a.to_jsonl() == b.to_jsonl()
    a.write(tmp_path / "t.jsonl")
    assert Transcript.load(tmp_path / "t.jsonl").records == a.records
    other = run(cfg(delay=DelayModel(jitter=7), seed=6, faults=[Fault(node=2, kind="crash", at=50)]))
    assert other.to_jsonl() != a.to_jsonl()


def test_fault_budget_enforced():
    with pytest.raises(ConfigError):
        Simulator(cfg(faults=[Fault(node=1, kind="crash"), Fault(node=2, kind="crash")]))
    with pytest.raises(ConfigError):
        Simulator(cfg(n_tmc=1))
    with pytest.raises(ConfigError):
        Simulator(cfg(faults=[Fault(node=0, kind="byzantine", script="fuzz", mode="full")]))


def conflicting_orders(t):
    seen = defaultdict(set)
    for r in t.of_type("msg"):
        if r["kind"] == "ORDER-REQUEST" and r.get("cpk"):
            seen[(r["cpk"], r["counter"])].add(r["req"])
    return [k for k, v in seen.items() if len(v) > 1]


def equivocating(variant):
    return cfg(
        variant=variant,
        faults=[Fault(node=0, kind="byzantine", script="equivocate")],
        workload=Workload(clients=2, requests=8),
        settle=400,
    )


def test_baseline_primary_can_equivocate():
    t = run(equivocating("zyzzyva"))
    assert conflicting_orders(t)


def test_trusted_counter_prevents_equivocation():
    result = run_scenario(equivocating("saczyzzyva"))
    assert conflicting_orders(result.transcript) == []
    assert result.violations == []


@pytest.mark.parametrize("script", ["fuzz", "equivocate", "counter_burn", "selective_order", "stale_new_view", "split_confirm", "omit_view_change", "drop_all"])
def test_adversary_scripts_stay_within_capabilities(script):
    # the simulator raises if a script forges anything; invariants must also hold
    for node in (0, 2):
        for variant in ("saczyzzyva", "zyzzyva"):
            c = cfg(variant=variant, faults=[Fault(node=node, kind="byzantine", script=script)], settle=400, seed=node)
            assert run_scenario(c).violations == [], (script, node, variant)


def test_partition_holds_messages_until_heal():
    base = cfg(workload=Workload(clients=1, requests=5))
    c = partition(base, [[3], [0, 1, 2, "c0"]], 0, 300)
    t = run(c)
    crossing = [r for r in t.of_type("msg") if r["dst"] == 3 and r["t"] < 300 and r["src"] != 3]
    assert crossing and all(r["at"] >= 300 for r in crossing)
    assert check_invariants(t) == []


def test_bound_respected_after_gst():
    c = cfg(delay=DelayModel(base=10, jitter=5, gst=200, async_extra=100, bound=15), workload=Workload(clients=2, requests=20))
    t = run(c)
    late = [r for r in t.of_type("msg") if r["t"] >= 200 and "at" in r and r["src"] != r["dst"] and not r.get("held")]
    assert late and all(r["at"] - r["t"] <= 15 for r in late)
    early = [r["at"] - r["t"] for r in t.of_type("msg") if r["t"] < 200 and "at" in r]
    assert max(early) > 15
    assert check_invariants(t, only=["synchrony"]) == []


def test_crashed_replica_sends_nothing():
    t = run(cfg(faults=[Fault(node=3, kind="crash", at=0)]))
    assert not [r for r in t.of_type("msg") if r["src"] == 3]
    assert len(t.of_type("complete")) == 10
