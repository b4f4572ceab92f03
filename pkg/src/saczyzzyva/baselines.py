"""Zyzzyva and Zyzzyva5 baselines.

Both reuse :class:`~saczyzzyva.replica.Replica` and
:class:`~saczyzzyva.client.Client`. The differences are all in the genesis
thresholds (see :mod:`saczyzzyva.variants`) and in two places:

* the primary orders with primary-signed sequence numbers
  (:class:`~saczyzzyva.tmc.SignedSequencer`) instead of a trusted counter;
* a Zyzzyva client that times out holding a commit quorum, but not all, of
  matching replies runs the commit phase below.
"""

from __future__ import annotations

from typing import Any

from .client import Client, PendingRequest, commit_certificate
from .messages import CommitCertificate, CommitMsg, signed
from .variants import ProtocolVariant, Thresholds, thresholds, variant_thresholds

__all__ = [
    "CommitCertificate",
    "ProtocolVariant",
    "Thresholds",
    "thresholds",
    "variant_thresholds",
    "zyzzyva_client_fallback",
]


def zyzzyva_client_fallback(client: Client, pending: PendingRequest) -> list[tuple[Any, Any]]:
    """Messages a Zyzzyva client sends when its fallback timer fires.

    With at least a commit quorum of matching replies the client broadcasts a
    commit certificate and then waits for that many LOCAL-COMMIT acks. With
    fewer it re-broadcasts the request instead.
    """
    n = client.genesis.n
    cert = commit_certificate(pending, client.genesis.limits.commit_quorum)
    if cert is None:
        return [(dst, pending.request) for dst in range(n)]
    current = pending.commit
    if current is None or current.certificate.replies[0].match_key != cert.replies[0].match_key:
        # replies from a later view supersede a certificate nobody acks any more
        pending.commit = signed(CommitMsg(client.name, cert), client.keys.secret)
        pending.acks.clear()
    return [(dst, pending.commit) for dst in range(n)]
