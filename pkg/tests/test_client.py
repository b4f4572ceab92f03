from saczyzzyva.client import MAX_BACKOFF, Client
from saczyzzyva.messages import (
    GENESIS_HISTORY,
    CommitMsg,
    LocalCommitMsg,
    OrderRequestMsg,
    ReplyMsg,
    RequestMsg,
    chain_step,
    signed,
)
from saczyzzyva.node import RecordingEnv

from conftest import Cluster


def setup(variant="saczyzzyva"):
    c = Cluster(variant=variant)
    client = Client("c0", c.genesis, c.sim.clients["c0"].keys, timeout=40)
    env = RecordingEnv()
    client.start(env)
    return c, client, env


def ordered(c, req):
    c.replicas[0].on_message(req.client, req)
    (_, orq), *_ = c.sent(0, OrderRequestMsg)
    c.clear()
    return orq


def reply(c, orq, i, response=b"1", digest=None):
    d = digest or chain_step(GENESIS_HISTORY, orq.view, orq.counter, orq.request.digest)
    return signed(ReplyMsg(orq, response, 1, d, i), c.replicas[i].keys.secret)


def test_request_ids_increase_and_go_to_primary():
    c, client, env = setup()
    p1 = client.submit(b"incr x")
    assert p1.request.request_id == 1
    assert env.sent == [(0, p1.request)]
    client.pending = None
    assert client.submit(b"incr x").request.request_id == 2


def test_completes_on_matching_quorum():
    c, client, env = setup()
    p = client.submit(b"incr x")
    orq = ordered(c, p.request)
    assert client.on_reply(reply(c, orq, 0)) is None
    assert client.on_reply(reply(c, orq, 1)) is None
    done = client.on_reply(reply(c, orq, 2))
    assert done is not None and done.support == 3 and done.response == b"1"
    assert env.logged("complete")[0]["rid"] == 1


def test_divergent_reply_does_not_count():
    c, client, env = setup()
    p = client.submit(b"incr x")
    orq = ordered(c, p.request)
    client.on_reply(reply(c, orq, 0))
    client.on_reply(reply(c, orq, 1))
    assert client.on_reply(reply(c, orq, 2, response=b"2")) is None
    assert client.pending.completed is None


def test_duplicate_reply_counted_once():
    c, client, env = setup()
    p = client.submit(b"incr x")
    orq = ordered(c, p.request)
    r0 = reply(c, orq, 0)
    for _ in range(3):
        client.on_reply(r0)
    assert client.on_reply(reply(c, orq, 1)) is None
    assert client.pending.completed is None


def test_forged_reply_ignored():
    c, client, env = setup()
    p = client.submit(b"incr x")
    orq = ordered(c, p.request)
    fake = signed(ReplyMsg(orq, b"1", 1, b"\x00" * 32, 2), c.replicas[1].keys.secret)
    client.on_reply(reply(c, orq, 0))
    client.on_reply(reply(c, orq, 1))
    assert client.on_reply(fake) is None


def test_retry_broadcasts_and_backs_off():
    c, client, env = setup()
    p = client.submit(b"incr x")
    env.take()
    gaps = []
    for _ in range(5):
        before = env.now
        env.now = env.timers["retry"]
        gaps.append(env.now - before)
        client.on_timer("retry")
        sent = env.take()
        assert sorted(dst for dst, _ in sent) == list(range(c.genesis.n))
        assert all(m is p.request for _, m in sent)
    assert gaps == [40, 80, 160, 320, 40 * MAX_BACKOFF]


def test_zyzzyva_commit_phase():
    c, client, env = setup("zyzzyva")
    p = client.submit(b"incr x")
    orq = ordered(c, p.request)
    for i in range(3):
        client.on_reply(reply(c, orq, i))
    assert "fallback" in env.timers and "retry" not in env.timers
    env.take()
    client.on_timer("fallback")
    commits = env.take()
    assert sorted(dst for dst, _ in commits) == list(range(4))
    commit = commits[0][1]
    assert isinstance(commit, CommitMsg) and len(commit.certificate.replies) == 3
    ref = commit.certificate.replies[0]
    for i in range(3):
        ack = signed(LocalCommitMsg(0, "c0", 1, ref.history_length, ref.history_digest, i), c.replicas[i].keys.secret)
        client.on_message(i, ack)
    assert client.done[0][1].fallback is True and client.done[0][1].support == 3


def test_zyzzyva_needs_all_replies_for_fast_path():
    c, client, env = setup("zyzzyva")
    p = client.submit(b"incr x")
    orq = ordered(c, p.request)
    for i in range(3):
        assert client.on_reply(reply(c, orq, i)) is None
    assert client.on_reply(reply(c, orq, 3)).support == 4


def test_stale_reply_for_other_request_ignored():
    c, client, env = setup()
    client.submit(b"incr x")
    other = signed(RequestMsg(b"incr x", "c1", 1), c.sim.clients["c1"].keys.secret)
    orq = ordered(c, other)
    for i in range(3):
        assert client.on_reply(reply(c, orq, i)) is None
