"""Which (n, b, f) hybrid systems admit a safe and live replication protocol.

``n`` parties, ``b`` of which fail fully-Byzantine when they fail (the rest
fail at most partially, their trusted part only by crashing), and at most
``f`` failures overall.

:func:`is_feasible` is the closed form. :func:`brute_force_feasibility` is an
independent oracle over threshold quorum systems: every set of at least
``n - f`` parties must be able to make progress on its own, so a protocol is
doomed exactly when two such quora can meet only in parties that may all fail
fully-Byzantine.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterable

import numpy as np

DEFAULT_BOUND = 12


class BoundExceeded(ValueError):
    """The brute-force search was asked about a system larger than its bound."""


@dataclass(frozen=True)
class HybridSystem:
    n: int
    b: int
    f: int

    def __post_init__(self) -> None:
        if not (0 <= self.b <= self.n and 0 <= self.f <= self.n):
            raise ValueError(f"need 0 <= b <= n and 0 <= f <= n, got {self}")


@dataclass(frozen=True)
class QuorumSystem:
    """Parties ``1..n``, which of them may fail fully-Byzantine, and the quora."""

    universe: frozenset[int]
    byzantine: frozenset[int]
    quora: tuple[frozenset[int], ...]

    @classmethod
    def threshold(cls, n: int, f: int, byzantine: Iterable[int] = ()) -> QuorumSystem:
        parties = range(1, n + 1)
        quora = tuple(
            frozenset(c) for k in range(max(0, n - f), n + 1) for c in combinations(parties, k)
        )
        return cls(frozenset(parties), frozenset(byzantine), quora)


@dataclass(frozen=True)
class Witness:
    """Two quora whose whole intersection can fail fully-Byzantine."""

    q1: frozenset[int]
    q2: frozenset[int]
    failed: frozenset[int]
    byzantine: frozenset[int]

    def __str__(self) -> str:
        def fmt(s: frozenset[int]) -> str:
            return "{" + ",".join(map(str, sorted(s))) + "}"

        return f"Q1={fmt(self.q1)} Q2={fmt(self.q2)} failed={fmt(self.failed)} byzantine={fmt(self.byzantine)}"

    def is_valid(self, system: HybridSystem) -> bool:
        n, b, f = system.n, system.b, system.f
        universe = set(range(1, n + 1))
        inter = self.q1 & self.q2
        return (
            self.q1 <= universe
            and self.q2 <= universe
            and len(self.q1) >= n - f
            and len(self.q2) >= n - f
            and len(self.byzantine) == b
            and self.byzantine <= universe
            and len(self.failed) <= f
            and inter <= self.failed
            and self.failed <= self.byzantine
        )


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    witness: Witness | None = None

    def __bool__(self) -> bool:
        return self.feasible


def is_feasible(system: HybridSystem) -> bool:
    """Closed form: enough parties overall, or enough that never fail fully-Byzantine."""
    n, b, f = system.n, system.b, system.f
    return n >= 3 * f + 1 or n - b >= 2 * f + 1


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.array([bin(int(x)).count("1") for x in a], dtype=np.int64)


@lru_cache(maxsize=None)
def _intersections(n: int, f: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Every distinct intersection of two quora, as bitmasks, with one pair realising it.

    Bit ``i - 1`` stands for party ``i``. Built from the full pairwise AND of
    the quorum list, so no structure of threshold quora is assumed.
    """
    q = np.array(
        [sum(1 << (p - 1) for p in quorum) for quorum in QuorumSystem.threshold(n, f).quora], dtype=np.int64
    )
    inter = (q[:, None] & q[None, :]).ravel()
    masks, first = np.unique(inter, return_index=True)
    i1, i2 = np.divmod(first, len(q))
    return masks, _popcount(masks), q[i1], q[i2]


def _bits(mask: int) -> frozenset[int]:
    return frozenset(i + 1 for i in range(mask.bit_length()) if mask >> i & 1)


def _witness_for(system: HybridSystem, byzantine_mask: int) -> Witness | None:
    masks, sizes, q1, q2 = _intersections(system.n, system.f)
    hit = np.nonzero(((masks & ~byzantine_mask) == 0) & (sizes <= system.f))[0]
    if len(hit) == 0:
        return None
    k = hit[0]
    inter = int(masks[k])
    return Witness(_bits(int(q1[k])), _bits(int(q2[k])), _bits(inter), _bits(byzantine_mask))


def brute_force_feasibility(
    system: HybridSystem,
    byzantine_placement: Iterable[int] | None = None,
    bound: int = DEFAULT_BOUND,
) -> FeasibilityResult:
    """Search for two quora that can intersect only in failed, fully-Byzantine parties.

    With ``byzantine_placement`` (parties numbered from 1) only that placement
    is tried; otherwise every placement of ``b`` fully-Byzantine parties is
    tried and the system is feasible only if none of them yields a witness.
    """
    if system.n > bound:
        raise BoundExceeded(f"n={system.n} exceeds the brute-force bound {bound}")
    if byzantine_placement is not None:
        placement = frozenset(byzantine_placement)
        if len(placement) != system.b or not placement <= set(range(1, system.n + 1)):
            raise ValueError("placement must name exactly b parties from 1..n")
        placements: Iterable[frozenset[int]] = [placement]
    else:
        placements = (frozenset(c) for c in combinations(range(1, system.n + 1), system.b))
    for placement in placements:
        w = _witness_for(system, sum(1 << (p - 1) for p in placement))
        if w is not None:
            return FeasibilityResult(False, w)
    return FeasibilityResult(True, None)


def contiguous_witness(system: HybridSystem) -> Witness | None:
    """Witness built from two overlapping runs of parties and a centred Byzantine block.

    ``Q1 = {1..n-f}``, ``Q2 = {f+1..n}`` and the fully-Byzantine parties are the
    ``b`` parties around the middle. Returns ``None`` when this particular
    construction does not produce a valid witness.
    """
    n, b, f = system.n, system.b, system.f
    q1 = frozenset(range(1, n - f + 1))
    q2 = frozenset(range(f + 1, n + 1))
    lo = n // 2 - b // 2 + 1
    byz = frozenset(range(lo, lo + b))
    w = Witness(q1, q2, q1 & q2, byz)
    return w if w.is_valid(system) else None


def max_tolerance(n: int, b: int, feasible=None) -> int:
    """Largest f for which ``(n, b, f)`` is feasible (-1 if none is)."""
    check = feasible or (lambda s: is_feasible(s))
    best = -1
    for f in range(n + 1):
        if check(HybridSystem(n, b, f)):
            best = f
    return best


def region_table(max_n: int, brute_force: bool = False) -> list[tuple[int, int, int]]:
    """``(n, b, max f)`` for ``1 <= n <= max_n`` and ``0 <= b <= n``."""
    check = (lambda s: brute_force_feasibility(s).feasible) if brute_force else None
    return [(n, b, max_tolerance(n, b, check)) for n in range(1, max_n + 1) for b in range(n + 1)]


def region_csv(max_n: int, brute_force: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "b", "max_f"])
    w.writerows(region_table(max_n, brute_force))
    return buf.getvalue()
