"""Seeded scenario generators for fuzzing and forced view changes."""

from __future__ import annotations

import random

from ..adversary import SCRIPTS
from ..scenario import DelayModel, Fault, Partition, ScenarioConfig, Workload
from ..variants import ProtocolVariant

TARGETED = [
    "equivocate",
    "counter_burn",
    "selective_order",
    "stale_new_view",
    "split_confirm",
    "omit_view_change",
    "drop_selective",
]


def fuzz_config(
    seed: int,
    variant: ProtocolVariant | str = ProtocolVariant.SACZYZZYVA,
    f: int | None = None,
    requests: int = 12,
    clients: int = 2,
    completion_override: int | None = None,
) -> ScenarioConfig:
    """A run with ``f`` Byzantine replicas driven by randomly chosen scripts.

    The network is asynchronous (random extra delays) until a random GST and
    synchronous afterwards.
    """
    rng = random.Random(f"fuzz/{seed}")
    variant = ProtocolVariant.parse(variant)
    if f is None:
        f = 2 if rng.random() < 0.2 else 1
    n = 5 * f + 1 if variant is ProtocolVariant.ZYZZYVA5 else 3 * f + 1
    n_tmc = rng.choice([n, n, f + 1, rng.randint(f + 1, n)])
    candidates = list(range(n))
    byz = set(rng.sample(candidates, f))
    if rng.random() < 0.5 and 0 not in byz:
        byz.pop()
        byz.add(0)
    faults = []
    for node in sorted(byz):
        script = rng.choice(["fuzz", "fuzz", "fuzz", *TARGETED])
        has_tmc = variant is ProtocolVariant.SACZYZZYVA and node < n_tmc
        faults.append(Fault(node=node, kind="byzantine", script=script, mode="partial" if has_tmc else "full"))
    gst = rng.randint(0, 1500)
    delay = DelayModel(base=10, jitter=rng.randint(0, 10), gst=gst, async_extra=rng.choice([0, 20, 100]))
    assert all(fa.script in SCRIPTS for fa in faults)
    return ScenarioConfig(
        variant=variant,
        f=f,
        n_tmc=n_tmc,
        delay=delay,
        faults=faults,
        workload=Workload(clients=clients, requests=requests, op="incr x"),
        time_limit=400_000,
        settle=600,
        seed=seed,
        completion_override=completion_override,
        name=f"fuzz-{seed}",
    )


def view_change_config(seed: int, requests: int = 40, clients: int = 2) -> ScenarioConfig:
    """A run that forces at least two view changes in the middle of the workload.

    Even seeds: f = 2 and the primaries of views 0 and 1 crash one after the
    other. Odd seeds: f = 1, primary 0 crashes, then primary 1 is cut off by a
    partition that heals before GST.
    """
    rng = random.Random(f"view-change/{seed}")
    jitter = rng.randint(0, 8)
    first = rng.randint(100, 300)
    if seed % 2 == 0:
        second = first + rng.randint(250, 450)
        return ScenarioConfig(
            f=2,
            faults=[Fault(node=0, kind="crash", at=first), Fault(node=1, kind="crash", at=second)],
            delay=DelayModel(jitter=jitter),
            workload=Workload(clients=clients, requests=requests, op="incr x"),
            settle=600,
            seed=seed,
            name=f"view-change-{seed}",
        )
    cut = first + rng.randint(250, 450)
    heal = cut + rng.randint(300, 800)
    return ScenarioConfig(
        f=1,
        faults=[Fault(node=0, kind="crash", at=first)],
        partitions=[Partition(groups=[[1], [0, 2, 3, "c0", "c1"]], start=cut, end=heal)],
        delay=DelayModel(jitter=jitter, gst=heal),
        workload=Workload(clients=clients, requests=requests, op="incr x"),
        settle=600,
        seed=seed,
        name=f"view-change-{seed}",
    )
