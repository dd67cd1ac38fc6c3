import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbl.combinatorics import (
    MAX_PARAMETERS,
    anje_exponent,
    anje_exponent_exact,
    build_layout,
    enumerate_subsets,
    partition_count,
    subset_space_size,
    tuple_ranks,
    value_tuple_from_index,
    value_tuple_index,
)


def test_enumerate_small():
    cat = enumerate_subsets(4, 2)
    assert cat.subsets == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
    assert [cat.rank[s] for s in cat.subsets] == list(range(6))
    assert enumerate_subsets(3, 3).subsets == ((0, 1, 2),)


def test_enumerate_ten_choose_three():
    cat = enumerate_subsets(10, 3)
    assert len(cat) == 120
    assert cat.rank[(7, 8, 9)] == 119


@pytest.mark.parametrize("a,n", [(3, 0), (3, 4), (1, 2)])
def test_enumerate_rejects(a, n):
    with pytest.raises(ValueError):
        enumerate_subsets(a, n)


@given(st.integers(1, 9).flatmap(lambda a: st.tuples(st.just(a), st.integers(1, a))))
def test_enumeration_is_sorted_bijection(an):
    a, n = an
    cat = enumerate_subsets(a, n)
    assert len(cat) == math.comb(a, n)
    assert list(cat.subsets) == sorted(cat.subsets)
    assert [cat.rank[s] for s in cat.subsets] == list(range(len(cat)))


def test_value_tuple_index_examples():
    cards = (2, 7, 3)
    assert value_tuple_index((0, 2), [1, 0, 2], cards) == 5
    assert value_tuple_index((0, 2), [0, 5, 0], cards) == 0
    with pytest.raises(ValueError):
        value_tuple_index((0, 2), [2, 0, 0], cards)


def test_value_tuple_round_trip_exhaustive():
    cards = (3, 4, 2, 5)
    for n in (1, 2, 3):
        for subset in itertools.combinations(range(4), n):
            s = subset_space_size(subset, cards)
            assert s <= 1000
            for r in range(s):
                vals = value_tuple_from_index(subset, r, cards)
                full = [vals.get(i, 0) for i in range(4)]
                assert value_tuple_index(subset, full, cards) == r


def test_tuple_ranks_matches_scalar(rng):
    cards = (3, 2, 4)
    X = np.stack([rng.integers(0, k, 20) for k in cards], axis=1)
    cat = enumerate_subsets(3, 2)
    R = tuple_ranks(X, cat, cards)
    for i in range(20):
        for j, s in enumerate(cat.subsets):
            assert R[i, j] == value_tuple_index(s, X[i], cards)


@pytest.mark.parametrize("a,n,expected", [(4, 2, Fraction(1, 3)), (5, 2, Fraction(1, 4)), (7, 1, Fraction(1))])
def test_exponent_examples(a, n, expected):
    assert anje_exponent_exact(a, n) == expected
    assert anje_exponent(a, n) == pytest.approx(float(expected), rel=1e-15)


def test_exponent_matches_factorial_form_and_is_overflow_safe():
    for a in range(1, 12):
        for n in range(1, a + 1):
            direct = Fraction(math.factorial(n - 1) * math.factorial(a - n), math.factorial(a - 1))
            assert anje_exponent_exact(a, n) == direct
            assert anje_exponent(a, n) == float(direct)
    assert 0 < anje_exponent(400, 3) < 1e-4


@pytest.mark.parametrize("a,n,p", [(4, 2, 3), (6, 2, 5), (9, 1, 1)])
def test_partition_count(a, n, p):
    assert partition_count(a, n) == p


def test_partition_identities():
    for a in range(1, 13):
        for n in range(1, a + 1):
            assert anje_exponent_exact(a, n) == Fraction(1, partition_count(a, n))
            if a % n == 0:
                assert partition_count(a, n) * (a // n) == math.comb(a, n)


def test_layout_closed_forms():
    assert build_layout(enumerate_subsets(2, 1), (2, 3), 2).total_len == 12
    assert build_layout(enumerate_subsets(4, 2), (2, 2, 2, 2), 3).total_len == 75


@given(st.lists(st.integers(1, 4), min_size=1, max_size=5), st.data())
@settings(max_examples=60)
def test_layout_offsets_disjoint_and_covering(cards, data):
    a = len(cards)
    n = data.draw(st.integers(1, a))
    C = data.draw(st.integers(2, 4))
    lay = build_layout(enumerate_subsets(a, n), cards, C)
    covered = np.zeros(lay.total_len, dtype=int)
    covered[:C] += 1
    for c in range(C):
        for j in range(len(lay.catalog)):
            start = lay.offset(c, j)
            covered[start:start + lay.block_sizes[j]] += 1
    assert (covered == 1).all()
    assert lay.total_len == C * (1 + sum(subset_space_size(s, cards) for s in lay.catalog.subsets))
    offs = lay.offsets().ravel()
    assert (np.diff(offs) > 0).all()


def test_layout_guard():
    with pytest.raises(ValueError, match="2\\^40"):
        build_layout(enumerate_subsets(3, 3), (2**14, 2**14, 2**14), 2)
    assert MAX_PARAMETERS == 2**40
