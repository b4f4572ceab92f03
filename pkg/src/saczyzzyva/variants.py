"""Protocol variants and the thresholds each one derives from ``f``."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class ProtocolVariant(str, enum.Enum):
    SACZYZZYVA = "saczyzzyva"
    ZYZZYVA = "zyzzyva"
    ZYZZYVA5 = "zyzzyva5"

    @classmethod
    def parse(cls, value: str | ProtocolVariant) -> ProtocolVariant:
        if isinstance(value, ProtocolVariant):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown protocol variant {value!r}") from None


@dataclass(frozen=True)
class Thresholds:
    f: int
    n: int
    completion: int
    fallback: bool
    # view-change, view-confirm and checkpoint quorums
    quorum: int
    # REQ-VIEW-CHANGE accusations needed before a replica commits to a view-change
    accuse: int
    # copies of an order-request among the VIEW-CHANGE messages needed to keep it
    inclusion: int
    # matching replies after which a Zyzzyva client may start its commit phase
    commit_quorum: int


def variant_thresholds(variant: ProtocolVariant | str, f: int) -> tuple[int, int, bool]:
    """``(n, completion threshold, fallback enabled)`` for a variant tolerating ``f`` faults."""
    t = thresholds(variant, f)
    return t.n, t.completion, t.fallback


def thresholds(variant: ProtocolVariant | str, f: int, n: int | None = None) -> Thresholds:
    if f < 0:
        raise ValueError("f must be non-negative")
    variant = ProtocolVariant.parse(variant)
    if variant is ProtocolVariant.ZYZZYVA5:
        return Thresholds(
            f=f,
            n=n if n is not None else 5 * f + 1,
            completion=4 * f + 1,
            fallback=False,
            quorum=4 * f + 1,
            accuse=f + 1,
            inclusion=2 * f + 1,
            commit_quorum=4 * f + 1,
        )
    base_n = 3 * f + 1
    if variant is ProtocolVariant.ZYZZYVA:
        return Thresholds(
            f=f,
            n=n if n is not None else base_n,
            completion=3 * f + 1,
            # with f = 0 the fallback quorum equals the full quorum, so it never triggers
            fallback=f > 0,
            quorum=2 * f + 1,
            accuse=f + 1,
            inclusion=f + 1,
            commit_quorum=2 * f + 1,
        )
    return Thresholds(
        f=f,
        n=n if n is not None else base_n,
        completion=2 * f + 1,
        fallback=False,
        quorum=2 * f + 1,
        accuse=f + 1,
        inclusion=1,
        commit_quorum=2 * f + 1,
    )
