"""Acceptance criteria 1-9, each at its stated tolerance."""

import time
from functools import lru_cache
from pathlib import Path

import pytest

from saczyzzyva.feasibility import HybridSystem, brute_force_feasibility, is_feasible
from saczyzzyva.harness import run_scenario
from saczyzzyva.harness.campaigns import fuzz_config, view_change_config
from saczyzzyva.harness.config import load_config
from saczyzzyva.scenario import Fault, ScenarioConfig, Workload
from saczyzzyva.simnet import Simulator
from saczyzzyva.variants import thresholds

from conftest import VERDICTS

pytestmark = pytest.mark.acceptance

REQUESTS = 50
SAFETY = {"prefix_safety", "non_equivocation", "view_change_inclusion", "initial_view_consistency"}
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def verdict(n, ok, detail):
    VERDICTS[n] = (bool(ok), detail)
    assert ok, detail


def timed(cfg):
    start = time.perf_counter()
    r = run_scenario(cfg)
    return r, time.perf_counter() - start


def silent_backups(variant, f):
    n = thresholds(variant, f).n
    return ScenarioConfig(
        variant=variant,
        f=f,
        faults=[Fault(node=i, kind="crash", at=0) for i in range(n - f, n)],
        workload=Workload(clients=1, requests=REQUESTS),
        name=f"silent-{variant}-f{f}",
    )


# each run set is computed once and shared with the liveness criterion


@lru_cache(maxsize=None)
def resilience_runs():
    return [timed(silent_backups(v, f)) for f in (1, 2, 3) for v in ("saczyzzyva", "zyzzyva", "zyzzyva5")]


@lru_cache(maxsize=None)
def fault_free_runs():
    return {
        v: run_scenario(ScenarioConfig(variant=v, f=1, workload=Workload(clients=1, requests=REQUESTS), name=f"ff-{v}"))
        for v in ("saczyzzyva", "zyzzyva")
    }


@lru_cache(maxsize=None)
def slow_runs():
    template = load_config(CONFIGS / "slow_backup.toml")
    runs = {v: run_scenario(template.replace(variant=v, name=f"slow-{v}")) for v in ("saczyzzyva", "zyzzyva")}
    return template, runs


@lru_cache(maxsize=None)
def fuzz_runs():
    start = time.perf_counter()
    runs = [run_scenario(fuzz_config(seed)) for seed in range(200)]
    return runs, time.perf_counter() - start


@lru_cache(maxsize=None)
def view_change_runs():
    return [run_scenario(view_change_config(seed)) for seed in range(50)]


def test_criterion_1_resilience():
    problems = []
    for r, took in resilience_runs():
        m = r.metrics
        want_fallbacks = REQUESTS if r.config.variant.value == "zyzzyva" else 0
        if m.completed != REQUESTS or m.fallbacks != want_fallbacks or m.view_changes != 0 or took >= 10:
            problems.append(
                f"{r.config.name}: {m.completed} done, {m.fallbacks} fallbacks, {m.view_changes} view changes, {took:.1f}s"
            )
    worst = max(took for _, took in resilience_runs())
    verdict(1, not problems, "; ".join(problems) or f"all 9 scenarios exact, slowest {worst:.1f}s")


def test_criterion_2_fault_free_equivalence():
    runs = fault_free_runs()
    sac = runs["saczyzzyva"].transcript.messages_by_request()
    zyz = runs["zyzzyva"].transcript.messages_by_request()
    n = 4
    ok = len(sac) == REQUESTS and sac == zyz and set(sac.values()) == {2 * n + 1}
    verdict(2, ok, f"per-request messages SAC {sorted(set(sac.values()))}, Zyzzyva {sorted(set(zyz.values()))}, expected {2 * n + 1}")


def test_criterion_3_extra_round_cost():
    template, runs = slow_runs()
    latencies = {
        v: {(c["client"], c["rid"]): c["latency"] for c in r.transcript.of_type("complete")} for v, r in runs.items()
    }
    need = template.client_wait + 2 * template.delay.base
    gaps = [latencies["zyzzyva"][k] - latencies["saczyzzyva"][k] for k in latencies["saczyzzyva"]]
    ok = len(gaps) == REQUESTS and min(gaps) >= need
    verdict(3, ok, f"latency gap min {min(gaps)} max {max(gaps)} over {len(gaps)} requests, need >= {need}")


def test_criterion_4_safety_under_fuzzing():
    runs, took = fuzz_runs()
    scripts = {fa.script for r in runs for fa in r.config.faults}
    bad = [
        f"seed {r.config.seed}: {v}"
        for r in runs
        for v in r.violations
        if v.invariant in ("prefix_safety", "non_equivocation")
    ]
    ok = not bad and took < 300
    verdict(4, ok, f"{len(bad)} safety violations in 200 runs ({len(scripts)} scripts), {took:.0f}s" + ("; " + bad[0] if bad else ""))


def test_criterion_5_view_change_inclusion():
    runs = view_change_runs()
    few_views = [r.config.seed for r in runs if r.metrics.view_changes < 2]
    bad = [
        f"seed {r.config.seed}: {v}"
        for r in runs
        for v in r.violations
        if v.invariant in ("view_change_inclusion", "prefix_safety")
    ]
    ok = not bad and not few_views
    verdict(5, ok, f"{len(bad)} inclusion violations, {len(few_views)} runs with fewer than 2 view changes")


def test_criterion_6_liveness():
    runs = (
        [r for r, _ in resilience_runs()]
        + list(fault_free_runs().values())
        + list(slow_runs()[1].values())
        + fuzz_runs()[0]
        + view_change_runs()
    )
    stuck = [(r.config.name, v) for r in runs for v in r.violations if v.invariant == "liveness"]
    detail = f"{len(runs)} runs checked, {len({name for name, _ in stuck})} with incomplete requests"
    if stuck:
        detail += "; " + "; ".join(f"{name}: {v}" for name, v in stuck[:3])
    verdict(6, not stuck, detail)


def test_criterion_7_feasibility_equivalence():
    start = time.perf_counter()
    mismatches = []
    total = 0
    for n in range(0, 10):
        for b in range(n + 1):
            for f in range(n + 1):
                s = HybridSystem(n, b, f)
                total += 1
                if is_feasible(s) != brute_force_feasibility(s).feasible:
                    mismatches.append(s)
    took = time.perf_counter() - start
    verdict(7, not mismatches and took < 60, f"{total} systems, {len(mismatches)} mismatches, {took:.1f}s")


def test_criterion_8_checkpoint_gc():
    cfg = ScenarioConfig(f=1, checkpoint_interval=10, workload=Workload(clients=1, requests=25))
    sim = Simulator(cfg)
    sim.run()
    stable = [r.stable_count for r in sim.replicas]
    leftover = [
        (r.id, key) for r in sim.replicas for key in r.order_log if key[1] <= r.stable_anchor.counter
    ] + [(r.id, c) for r in sim.replicas for c in r.buffer]
    ok = stable == [2] * 4 and all(r.stable_anchor.counter == 20 for r in sim.replicas) and not leftover
    verdict(8, ok, f"stable checkpoints per replica {stable}, {len(leftover)} order-requests retained at or below them")


def test_criterion_9_mutation_detection():
    found = None
    flagged = 0
    for seed in range(200):
        cfg = fuzz_config(seed)
        cfg.completion_override = cfg.f + 1
        r = run_scenario(cfg)
        unsafe = [v for v in r.violations if v.invariant in SAFETY]
        if r.violations:
            flagged += 1
        if unsafe and found is None:
            found = (seed, unsafe[0])
    ok = found is not None
    verdict(
        9,
        ok,
        f"{flagged} of 200 mutant runs flagged; first safety violation "
        + (f"at seed {found[0]}: {found[1]}" if found else "never"),
    )
