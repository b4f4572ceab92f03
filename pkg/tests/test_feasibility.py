import pytest
from hypothesis import given
from hypothesis import strategies as st

from saczyzzyva.feasibility import (
    BoundExceeded,
    HybridSystem,
    brute_force_feasibility,
    contiguous_witness,
    is_feasible,
    max_tolerance,
    region_csv,
    region_table,
)


@pytest.mark.parametrize(
    "n,b,f,expected",
    [(4, 4, 1, True), (3, 1, 1, False), (3, 0, 1, True), (3, 3, 1, False), (7, 7, 2, True), (6, 2, 2, False), (6, 1, 2, True)],
)
def test_examples(n, b, f, expected):
    s = HybridSystem(n, b, f)
    assert is_feasible(s) is expected
    result = brute_force_feasibility(s)
    assert result.feasible is expected
    if not expected:
        assert result.witness.is_valid(s)


def test_witness_for_three_parties():
    s = HybridSystem(3, 3, 1)
    w = brute_force_feasibility(s).witness
    assert len(w.q1) == len(w.q2) == 2
    assert len(w.q1 & w.q2) == 1 and w.failed == w.q1 & w.q2


systems = st.integers(1, 9).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(0, n))
)


@given(systems)
def test_monotone(nbf):
    n, b, f = nbf
    if not is_feasible(HybridSystem(n, b, f)):
        return
    assert is_feasible(HybridSystem(n + 1, b, f))
    if b > 0:
        assert is_feasible(HybridSystem(n, b - 1, f))
    if f > 0:
        assert is_feasible(HybridSystem(n, b, f - 1))


def test_closed_form_agrees_with_brute_force_up_to_nine():
    for n in range(1, 10):
        for b in range(n + 1):
            for f in range(n + 1):
                s = HybridSystem(n, b, f)
                assert is_feasible(s) == brute_force_feasibility(s).feasible, s


def test_contiguous_witness_cross_check():
    # a second, constructive route to infeasibility, checked against the closed form
    for n in range(1, 10):
        for b in range(n + 1):
            for f in range(n + 1):
                s = HybridSystem(n, b, f)
                w = contiguous_witness(s)
                if w is not None:
                    assert not is_feasible(s)
                if not is_feasible(s):
                    assert brute_force_feasibility(s).witness.is_valid(s)


def test_region_rows():
    rows = {(n, b): f for n, b, f in region_table(9)}
    assert rows[(4, 0)] == 1
    assert rows[(3, 0)] == 1
    assert rows[(2, 2)] == 0
    assert rows[(1, 0)] == 0
    assert rows[(10 - 1, 9)] == 2
    assert region_table(6) == region_table(6, brute_force=True)
    lines = region_csv(2).splitlines()
    assert lines[0] == "n,b,max_f"
    assert len(lines) == 1 + 2 + 3


def test_max_tolerance_formula():
    for n in range(1, 30):
        for b in range(n + 1):
            assert max_tolerance(n, b) == max((n - 1) // 3, (n - b - 1) // 2)


def test_bound():
    with pytest.raises(BoundExceeded):
        brute_force_feasibility(HybridSystem(13, 0, 1))
    with pytest.raises(ValueError):
        HybridSystem(3, 4, 1)


def test_fixed_placement():
    s = HybridSystem(5, 2, 2)
    assert not brute_force_feasibility(s, byzantine_placement=[1, 2]).feasible
    with pytest.raises(ValueError):
        brute_force_feasibility(s, byzantine_placement=[1])


def test_empty_system():
    # no parties means no quorum can make progress; both routes agree
    s = HybridSystem(0, 0, 0)
    assert is_feasible(s) is False
    assert brute_force_feasibility(s).feasible is False
