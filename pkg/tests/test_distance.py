from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bifrost.core import SymbolString
from bifrost.distance import (
    damerau_levenshtein,
    hamming,
    swap_change_alignment,
    swap_change_distance,
)
from bifrost.errors import DistanceBudgetExceeded, LengthMismatchError
from oracles import bfs_swap_change


def S(values, q=8):
    return SymbolString(np.array(values, dtype=np.uint32), q)


def test_hamming_examples():
    assert hamming(S([1, 0, 1, 0]), S([1, 0, 0, 1])) == 2
    x = S([5, 6, 7])
    assert hamming(x, x) == 0


def test_hamming_all_length4_pairs_alphabet4():
    strings = list(product(range(4), repeat=4))
    for a in strings:
        sa = S(a)
        for b in strings:
            assert hamming(sa, S(b)) == sum(x != y for x, y in zip(a, b))


def test_swap_change_examples():
    assert swap_change_distance(S([2, 1]), S([1, 2])) == 1
    x = S([3, 1, 4, 1, 5])
    assert swap_change_distance(x, x) == 0


def test_damerau_levenshtein_examples():
    assert damerau_levenshtein(S([2, 1]), S([1, 2])) == 1
    assert damerau_levenshtein(S([1, 2, 3]), S([])) == 3
    # needs an edit between the transposed symbols: 2 with all four ops, 3 under OSA
    assert damerau_levenshtein(S([0, 1, 2]), S([2, 1, 0])) == 2
    assert damerau_levenshtein(S([1, 0]), S([0, 2, 1])) == 2


def test_swap_change_matches_bfs_up_to_length5_alphabet4():
    for n in range(6):
        strings = list(product(range(4), repeat=n))
        wrapped = [S(x) for x in strings]
        for a, sa in zip(strings, wrapped):
            dist = bfs_swap_change(a, 4)
            for b, sb in zip(strings, wrapped):
                assert swap_change_distance(sa, sb) == dist[b], (a, b)


def test_length_and_width_mismatch():
    with pytest.raises(LengthMismatchError):
        hamming(S([1]), S([1, 2]))
    with pytest.raises(LengthMismatchError):
        swap_change_distance(S([1]), S([1, 2]))
    with pytest.raises(LengthMismatchError):
        hamming(S([1], 8), S([1], 4))


def test_cutoff_reports_bound_plus_one():
    a, b = S([0, 1, 2, 3, 4, 5]), S([5, 4, 3, 2, 1, 0])
    full = swap_change_distance(a, b)
    assert full == bfs_swap_change(a.tolist(), 6)[tuple(b.tolist())] == 5
    assert swap_change_distance(a, b, cutoff=3) == 4
    assert swap_change_distance(a, b, cutoff=full) == full
    d, path = swap_change_alignment(a, b, cutoff=2)
    assert (d, path) == (3, None)


def test_alignment_path_realises_distance():
    rng = np.random.default_rng(9)
    for _ in range(100):
        a = rng.integers(0, 4, 12)
        b = a.copy()
        for p in rng.integers(0, 11, 4):
            b[p], b[p + 1] = b[p + 1], b[p]
        b[rng.integers(12)] = rng.integers(4)
        d, path = swap_change_alignment(a, b)
        inv = sum(1 for i in range(12) for j in range(i + 1, 12) if path[i] > path[j])
        assert inv + int(np.count_nonzero(a[path] != b)) == d


def test_uncapped_search_on_long_dissimilar_strings_hits_budget():
    rng = np.random.default_rng(1)
    a, b = rng.integers(0, 256, 200), rng.integers(0, 256, 200)
    with pytest.raises(DistanceBudgetExceeded):
        swap_change_distance(a, b, max_states=10_000)
    assert swap_change_distance(a, b, cutoff=8) == 9


equal_triples = st.integers(0, 6).flatmap(
    lambda n: st.tuples(*(st.lists(st.integers(0, 3), min_size=n, max_size=n) for _ in range(3)))
)


@settings(max_examples=300, deadline=None)
@given(equal_triples)
def test_metric_properties(triple):
    a, b, c = (S(x) for x in triple)
    for f in (hamming, swap_change_distance):
        assert f(a, b) == f(b, a)
        assert f(a, c) <= f(a, b) + f(b, c)
        assert (f(a, b) == 0) == (a == b)
    assert damerau_levenshtein(a, b) <= swap_change_distance(a, b) <= hamming(a, b)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 3), max_size=8), st.lists(st.integers(0, 3), max_size=8))
def test_damerau_levenshtein_bounds(a, b):
    d = damerau_levenshtein(S(a), S(b))
    assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))
    assert d == damerau_levenshtein(S(b), S(a))
