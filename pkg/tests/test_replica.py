import itertools
import random

from saczyzzyva.app import KeyValueStore
from saczyzzyva.messages import (
    GENESIS_HISTORY,
    CheckpointMsg,
    FillHoleMsg,
    GenesisCertificate,
    MisbehaviorProofMsg,
    NewViewMsg,
    OrderRequestMsg,
    ReplyMsg,
    ReqViewChangeMsg,
    RequestMsg,
    ViewChangeMsg,
    chain,
    signed,
)
from saczyzzyva.replica import Phase, compute_new_view_state, self_attestation
from saczyzzyva import tmc

from conftest import Cluster, pump


def order(c, reqs, primary=0):
    """Feed requests to the primary and return its order-requests in counter order."""
    out = []
    for r in reqs:
        c.replicas[primary].on_message(r.client, r)
        out += [m for dst, m in c.envs[primary].take() if isinstance(m, OrderRequestMsg) and dst == 0]
    return out


def test_primary_binds_next_counter_and_broadcasts():
    c = Cluster()
    order(c, [c.request("c0", i) for i in range(1, 5)])
    assert c.replicas[0].orderer.counter_value == 4
    c.replicas[0].on_message("c1", c.request("c1", 1))
    sent = c.sent(0, OrderRequestMsg)
    assert sorted(dst for dst, _ in sent) == list(range(c.genesis.n))
    assert {m.counter for _, m in sent} == {5}


def test_duplicate_requests_use_one_counter_value_each():
    c = Cluster()
    rng = random.Random(7)
    schedule = [c.request(cl, i) for cl in ("c0", "c1") for i in range(1, 6)]
    # every request arrives up to three times, interleaved with others
    deliveries = [r for r in schedule for _ in range(rng.randint(1, 3))]
    rng.shuffle(deliveries)
    deliveries.sort(key=lambda r: (r.client, r.request_id))
    for r in deliveries:
        c.replicas[0].on_message(r.client, r)
    assert c.replicas[0].orderer.counter_value == 10


def test_backups_execute_in_counter_order_whatever_the_arrival_order():
    base = Cluster()
    orqs = order(base, [base.request("c0", i, b"incr x") for i in range(1, 8)])
    for perm in itertools.permutations([4, 5, 6]):
        c = Cluster()
        r = c.replicas[1]
        for o in orqs[:3]:
            r.on_message(0, o)
        for i in perm:
            r.on_message(0, orqs[i])
        assert r.last_executed == 3
        asked = {m.index for _, m in c.sent(1, FillHoleMsg)}
        assert 4 in asked and asked <= {4, 5, 6}
        r.on_message(0, orqs[3])
        assert r.last_executed == 7
        assert [e.counter for e in r.history.entries] == list(range(1, 8))
        assert r.buffer == {}


def test_fill_hole_answered_from_log():
    c = Cluster()
    orqs = order(c, [c.request("c0", i) for i in range(1, 4)])
    for o in orqs:
        c.replicas[2].on_message(0, o)
    c.clear()
    c.replicas[2].on_message(1, FillHoleMsg(0, 2))
    assert c.sent(2, OrderRequestMsg) == [(1, orqs[1])]
    c.clear()
    c.replicas[2].on_message(1, FillHoleMsg(0, 9))
    assert c.sent(2, OrderRequestMsg) == []


def test_fill_hole_broadcast_then_accusation():
    c = Cluster()
    orqs = order(c, [c.request("c0", i) for i in range(1, 4)])
    r = c.replicas[1]
    r.on_message(0, orqs[0])
    r.on_message(0, orqs[2])
    assert c.sent(1, FillHoleMsg) == [(0, FillHoleMsg(0, 2))]
    c.clear()
    r.on_timer("holes")
    assert sorted(dst for dst, _ in c.sent(1, FillHoleMsg)) == [0, 2, 3]
    assert c.sent(1, ReqViewChangeMsg) == []
    c.clear()
    r.on_timer("holes")
    assert len(c.sent(1, ReqViewChangeMsg)) == c.genesis.n


def accuse(c, who, view=0):
    return signed(ReqViewChangeMsg(view, who), c.replicas[who].keys.secret)


def test_accusation_threshold():
    c = Cluster()
    r = c.replicas[2]
    r.on_message(0, accuse(c, 0))
    r.on_message(0, accuse(c, 0))
    assert r.phase is Phase.ACTIVE
    r.on_message(1, accuse(c, 1))
    assert r.phase is Phase.VIEW_CHANGING and r.current_view == 1
    (_, vc), *_ = c.sent(2, ViewChangeMsg)
    assert {e.replica_id for e in vc.evidence} == {0, 1}


def test_new_primary_waits_for_quorum_of_view_changes():
    c = Cluster()
    f = c.genesis.f
    for i in range(4):
        c.replicas[i].on_message(0, accuse(c, 0))
        c.replicas[i].on_message(1, accuse(c, 1))
    vcs = [m for i in range(4) for dst, m in c.sent(i, ViewChangeMsg) if dst == 1]
    c.clear()
    primary = c.replicas[1]
    for vc in vcs[: 2 * f]:
        primary.on_message(vc.replica_id, vc)
    assert c.sent(1, NewViewMsg) == []
    primary.on_message(vcs[2 * f].replica_id, vcs[2 * f])
    assert len(c.sent(1, NewViewMsg)) == c.genesis.n


def test_full_view_change_installs_everywhere():
    c = Cluster()
    orqs = order(c, [c.request("c0", i, b"incr x") for i in range(1, 4)])
    for i in range(1, 4):
        for o in orqs:
            c.replicas[i].on_message(0, o)
    c.clear()
    for i in range(4):
        c.replicas[i].request_view_change()
    pump(c)
    for r in c.replicas:
        assert (r.current_view, r.phase) == (1, Phase.ACTIVE)
        assert len(r.history) == 3


def vc_from(c, replica, executed, view=1):
    acc = (accuse(c, 0), accuse(c, 1))
    base = GenesisCertificate(c.genesis.genesis_counter_pk)
    return signed(ViewChangeMsg(view, replica, base, tuple(executed), acc), c.replicas[replica].keys.secret)


def new_view(c, vcs, view=1):
    p = c.genesis.primary(view)
    if c.genesis.uses_tmc:
        _, att = tmc.init(c.replicas[p].tmc)
    else:
        att = self_attestation(c.replicas[p].keys)
    return signed(NewViewMsg(view, att, tuple(vcs)), c.replicas[p].keys.secret)


def test_new_view_state_takes_longest_certified_run():
    c = Cluster()
    orqs = order(c, [c.request("c0", i) for i in range(1, 6)])
    nv = new_view(c, [vc_from(c, 1, orqs), vc_from(c, 2, orqs[:3]), vc_from(c, 3, [])])
    start, ext = compute_new_view_state(nv, c.genesis)
    assert (start.view, start.counter, start.history_length) == (0, 0, 0)
    assert [o.counter for o in ext] == [1, 2, 3, 4, 5]
    nv = new_view(c, [vc_from(c, i, []) for i in (1, 2, 3)])
    start, ext = compute_new_view_state(nv, c.genesis)
    assert ext == [] and start.history_digest == GENESIS_HISTORY


def test_baseline_new_view_state_needs_inclusion_support():
    c = Cluster(variant="zyzzyva")
    orqs = order(c, [c.request("c0", i) for i in range(1, 6)])
    nv = new_view(c, [vc_from(c, 1, orqs), vc_from(c, 2, orqs[:3]), vc_from(c, 3, [])])
    _, ext = compute_new_view_state(nv, c.genesis)
    # f+1 = 2 messages carry counters 1..3
    assert [o.counter for o in ext] == [1, 2, 3]


def test_install_rolls_back_to_new_view_history():
    c = Cluster()
    ops = [b"incr x", b"put y a", b"incr x", b"put y b", b"incr x"]
    orqs = order(c, [c.request("c0", i, op) for i, op in enumerate(ops, 1)])
    r = c.replicas[3]
    for o in orqs:
        r.on_message(0, o)
    assert len(r.history) == 5
    c.clear()
    nv = new_view(c, [vc_from(c, i, orqs[:3]) for i in (0, 1, 2)])
    for other in c.replicas:
        other.on_message(1, nv)
    pump(c, drop=lambda src, dst, msg: isinstance(msg, (OrderRequestMsg, RequestMsg)))
    assert (r.current_view, r.phase) == (1, Phase.ACTIVE)
    oracle = KeyValueStore()
    for op in ops[:3]:
        oracle.execute(op)
    assert len(r.history) == 3
    assert r.history.head == chain(GENESIS_HISTORY, orqs[:3])
    assert r.app.data == oracle.data
    assert r.client_ids == {"c0": 3}


def test_checkpoints_become_stable_with_quorum():
    c = Cluster()
    orqs = order(c, [c.request(cl, i) for i in range(1, 11) for cl in ("c0", "c1")])
    assert len(orqs) == 20
    for i in range(1, 4):
        for o in orqs:
            c.replicas[i].on_message(0, o)
    cps = {i: [m for dst, m in c.sent(i, CheckpointMsg) if dst == 0] for i in range(1, 4)}
    assert [m.last_request_number for m in cps[1]] == [10, 20]
    r = c.replicas[0]
    c.clear()
    # the primary itself has not executed; 2f checkpoints are not enough
    r.on_message(1, cps[1][0])
    r.on_message(2, cps[2][0])
    assert r.stable_anchor is None
    r.on_message(3, cps[3][0])
    assert r.stable_anchor.counter == 10
    for i in (1, 2, 3):
        r.on_message(i, cps[i][1])
    assert r.stable_anchor.counter == 20 and r.stable_count == 2


def test_equivocation_is_proved_and_accused():
    c = Cluster(variant="zyzzyva")
    key = c.replicas[0].keys.secret
    seq = c.replicas[0].orderer
    a, b = c.request("c0", 1), c.request("c1", 1)
    first = signed(OrderRequestMsg(0, seq.certify(1, a.digest), a), key)
    second = signed(OrderRequestMsg(0, seq.certify(1, b.digest), b), key)
    r = c.replicas[1]
    r.on_message(0, first)
    r.on_message(0, second)
    proofs = c.sent(1, MisbehaviorProofMsg)
    assert len(proofs) == c.genesis.n
    assert len(c.sent(1, ReqViewChangeMsg)) == c.genesis.n
    assert r.env.logged("primary_suspected")[0]["reason"] == "equivocation"
    c.clear()
    other = c.replicas[2]
    other.on_message(1, proofs[0][1])
    assert len(c.sent(2, ReqViewChangeMsg)) == c.genesis.n


def test_replies_carry_history():
    c = Cluster()
    orqs = order(c, [c.request("c0", 1, b"incr x")])
    c.replicas[1].on_message(0, orqs[0])
    ((dst, reply),) = c.sent(1, ReplyMsg)
    assert dst == "c0" and reply.response == b"1"
    assert (reply.history_length, reply.history_digest) == (1, chain(GENESIS_HISTORY, orqs))


def test_restore_matches_replay_for_random_prefixes():
    ops = [b"incr x", b"incr y", b"put x 7", b"get x", b"incr x", b"put z q", b"incr y"]
    rng = random.Random(11)
    for trial in range(30):
        c = Cluster(checkpoint_interval=4)
        picked = [rng.choice(ops) for _ in range(rng.randint(1, 8))]
        orqs = order(c, [c.request("c0", i, op) for i, op in enumerate(picked, 1)])
        assert len(orqs) == len(picked)
        r = c.replicas[2]
        for o in orqs:
            r.on_message(0, o)
        keep = rng.randint(0, len(picked))
        r._restore(keep)
        oracle = KeyValueStore()
        for op in picked[:keep]:
            oracle.execute(op)
        assert r.app.data == oracle.data, trial
        assert len(r.history) == keep
