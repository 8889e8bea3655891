from __future__ import annotations

import itertools

import pytest

from dtvertex.partitions import (
    EMPTY, CutoffBelowMinimum, LeggedBoxConfig, Partition, centralizer_order, enumerate_legged,
    enumerate_legged_bfs, minimal_volume, partitions_of, transpose,
)

P = Partition.of


def test_centralizer_order():
    assert centralizer_order(P(1)) == 1
    assert centralizer_order(P(2, 1, 1)) == 4
    assert centralizer_order(P(3, 3)) == 18


def test_transpose():
    assert transpose(P(3, 1)) == P(2, 1, 1)
    assert transpose(EMPTY) == EMPTY
    assert transpose(P(2, 2)) == P(2, 2)
    for n in range(7):
        for lam in partitions_of(n):
            assert transpose(transpose(lam)) == lam and transpose(lam).size == n


def test_canonical_text_form():
    assert str(P(2, 1)) == "[2,1]" and Partition.parse("[2,1]") == P(2, 1)


def test_empty_leg_counts():
    counts = {}
    list(enumerate_legged((EMPTY,) * 3, 4, counts))
    assert [counts.get(n, 0) for n in range(5)] == [1, 1, 3, 6, 13]


def test_bare_cylinder():
    legs = (P(1), EMPTY, EMPTY)
    confs = list(enumerate_legged(legs, minimal_volume(legs)))
    assert len(confs) == 1 and not confs[0].boxes and confs[0].renormalized_volume == 0


def test_cutoff_below_minimum():
    legs = (P(1), P(1), P(1))
    with pytest.raises(CutoffBelowMinimum):
        list(enumerate_legged(legs, minimal_volume(legs) - 1))


@pytest.mark.parametrize("legs", [(P(1), P(1), EMPTY), (P(2), P(1), P(1)), (P(2, 1), EMPTY, P(1))])
def test_enumeration_matches_independent_generator(legs):
    cut = minimal_volume(legs) + 3
    counts = {}
    confs = list(enumerate_legged(legs, cut, counts))
    oracle = enumerate_legged_bfs(legs, cut)
    assert {v: len(s) for v, s in oracle.items()} == {v: c for v, c in counts.items() if c}
    assert len({c.boxes for c in confs}) == len(confs)
    assert all(c.is_valid() for c in confs)


def test_renormalized_volume_independent_of_n():
    legs = (P(2, 1), P(1), EMPTY)
    for c in enumerate_legged(legs, minimal_volume(legs) + 2):
        N = c.support() + 1
        assert c.volume_at(N) == c.volume_at(N + 3) == c.renormalized_volume


def test_s3_permutation_preserves_counts():
    legs = (P(2), P(1), EMPTY)
    base = {}
    list(enumerate_legged(legs, minimal_volume(legs) + 3, base))
    for perm in itertools.permutations(range(3)):
        new = [None] * 3
        for i in range(3):
            new[perm[i]] = legs[i]
        # an odd permutation reverses the orientation of each leg's cross-section
        sign = 1 if perm in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] else -1
        new = [l if sign == 1 else transpose(l) for l in new]
        counts = {}
        list(enumerate_legged(new, minimal_volume(new) + 3, counts))
        shift = minimal_volume(new) - minimal_volume(legs)
        assert {v - shift: c for v, c in counts.items()} == base
