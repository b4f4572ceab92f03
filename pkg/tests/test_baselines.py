import pytest

from saczyzzyva.baselines import ProtocolVariant, thresholds, variant_thresholds
from saczyzzyva.baselines import zyzzyva_client_fallback
from saczyzzyva.messages import CommitMsg

from test_client import ordered, reply, setup


@pytest.mark.parametrize(
    "variant,f,expected",
    [
        (ProtocolVariant.ZYZZYVA5, 1, (6, 5, False)),
        (ProtocolVariant.SACZYZZYVA, 1, (4, 3, False)),
        (ProtocolVariant.ZYZZYVA, 0, (1, 1, False)),
        (ProtocolVariant.ZYZZYVA, 1, (4, 4, True)),
        (ProtocolVariant.SACZYZZYVA, 3, (10, 7, False)),
        (ProtocolVariant.ZYZZYVA5, 2, (11, 9, False)),
    ],
)
def test_variant_thresholds(variant, f, expected):
    assert variant_thresholds(variant, f) == expected


@pytest.mark.parametrize("f", range(0, 6))
def test_threshold_relations(f):
    for v in ProtocolVariant:
        n, completion, _ = variant_thresholds(v, f)
        t = thresholds(v, f, n)
        assert t.completion == completion <= n
        # any two completion quorums share a correct replica
        assert 2 * completion - n >= f + 1 or f == 0
        assert t.quorum == 2 * f + 1 or v is ProtocolVariant.ZYZZYVA5


def test_inclusion_thresholds():
    assert thresholds(ProtocolVariant.SACZYZZYVA, 1, 4).inclusion == 1
    assert thresholds(ProtocolVariant.ZYZZYVA, 1, 4).inclusion == 2
    assert thresholds(ProtocolVariant.ZYZZYVA5, 1, 6).inclusion == 3


def test_fallback_without_commit_quorum_rebroadcasts_request():
    c, client, env = setup("zyzzyva")
    p = client.submit(b"incr x")
    orq = ordered(c, p.request)
    client.on_reply(reply(c, orq, 0))
    client.on_reply(reply(c, orq, 1))
    actions = zyzzyva_client_fallback(client, p)
    assert actions == [(i, p.request) for i in range(4)]


def test_fallback_with_commit_quorum_sends_commit():
    c, client, env = setup("zyzzyva")
    p = client.submit(b"incr x")
    orq = ordered(c, p.request)
    for i in (3, 1, 2):
        client.on_reply(reply(c, orq, i))
    actions = zyzzyva_client_fallback(client, p)
    assert [dst for dst, _ in actions] == [0, 1, 2, 3]
    commit = actions[0][1]
    assert isinstance(commit, CommitMsg)
    assert [r.replica_id for r in commit.certificate.replies] == [1, 2, 3]
    # a second firing re-sends the same commit
    assert zyzzyva_client_fallback(client, p)[0][1] is commit
