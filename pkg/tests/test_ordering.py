from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svarpo.ordering import (PartialOrdering, allowed_parents, from_regulator_target,
                             from_tiers, load_prior, random_nonsupport_mask,
                             read_forbidden_csv, read_tiers_csv, write_forbidden_csv)
from svarpo.simulate import builtin_setting, generate_parameters


def test_single_tier_is_empty():
    assert len(from_tiers([1, 1, 1, 1])) == 0


def test_tiers_hand_enumeration():
    # 0-based: variable 2 (tier 2) may not be a parent of 0 or 1
    assert from_tiers([1, 1, 2]).forbidden == {(0, 2), (1, 2)}


def test_tier_three_never_parent_of_tier_one():
    P = from_tiers([1, 2, 3, 1, 3])
    m = P.mask()
    for child in (0, 3):
        for parent in (2, 4):
            assert m[child, parent]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=2, max_size=8))
def test_tiers_transitive(tiers):
    m = from_tiers(tiers).mask()
    t = np.array(tiers)
    for a in range(len(t)):
        for b in range(len(t)):
            for c in range(len(t)):
                if t[a] < t[b] < t[c]:
                    assert m[a, b] and m[a, c]


def test_regulator_target_empty_gold():
    assert len(from_regulator_target(np.zeros((4, 4)))) == 0


def test_regulator_target_single_edge():
    p = 4
    gold = np.zeros((p, p))
    gold[1, 0] = 1  # edge 0 -> 1
    want = {(0, j) for j in range(p) if j != 0} | {(i, 1) for i in range(p) if i != 1}
    assert from_regulator_target(gold).forbidden == want


def test_regulator_target_free_node():
    gold = np.zeros((3, 3))
    gold[1, 0] = gold[2, 1] = 1  # 0 -> 1 -> 2: node 1 emits and receives
    # node 0 regulator (row 0 barred), node 2 target (column 2 barred), node 1 free
    assert from_regulator_target(gold).forbidden == {(0, 1), (0, 2), (1, 2)}


def test_random_mask_extremes():
    A = np.zeros((5, 5))
    A[1, 0] = A[3, 2] = 0.5
    assert len(random_nonsupport_mask(A, 0.0, 1)) == 0
    full = random_nonsupport_mask(A, 1.0, 1).mask()
    want = (A == 0)
    np.fill_diagonal(want, False)
    np.testing.assert_array_equal(full, want)
    with pytest.raises(ValueError):
        random_nonsupport_mask(A, 1.5, 1)


def test_random_mask_count_on_s1():
    model, _, _ = generate_parameters(builtin_setting("S1"), 4)
    zeros = int(np.sum(model.A == 0)) - 100
    P = random_nonsupport_mask(model.A, 0.5, 11)
    assert len(P) == zeros // 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(0, 1))
def test_random_mask_disjoint_from_support_and_reproducible(seed, frac):
    rng = np.random.default_rng(seed % 1000)
    A = np.tril(rng.normal(size=(8, 8)) * (rng.random((8, 8)) < 0.3), -1)
    P = random_nonsupport_mask(A, frac, seed)
    assert not np.any(P.mask() & (A != 0))
    assert P == random_nonsupport_mask(A, frac, seed)


def test_allowed_parents_examples():
    assert list(allowed_parents(PartialOrdering.empty(4), 1)) == [0, 2, 3]
    assert list(PartialOrdering(4, {(1, 2)}).allowed_parents(1)) == [0, 3]
    P = PartialOrdering(3, {(0, 1), (0, 2)})
    assert P.allowed_parents(0).size == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6).flatmap(lambda p: st.tuples(
    st.just(p), st.sets(st.tuples(st.integers(0, p - 1), st.integers(0, p - 1))))))
def test_allowed_parents_partition(arg):
    p, pairs = arg
    P = PartialOrdering(p, frozenset(pairs))
    for i in range(p):
        S = set(P.allowed_parents(i).tolist())
        for j in range(p):
            assert (j in S) == ((i, j) not in P.forbidden and i != j)


def test_self_pairs_dropped_and_range_checked():
    assert PartialOrdering(3, {(1, 1)}).forbidden == frozenset()
    with pytest.raises(ValueError):
        PartialOrdering(3, {(0, 3)})


def test_prior_files(tmp_path):
    tiers = tmp_path / "tiers.csv"
    tiers.write_text("variable,tier\nx1,1\nx2,1\nx3,2\n")
    P = load_prior(tiers, "tiers", 3, ["x1", "x2", "x3"])
    assert P.forbidden == {(0, 2), (1, 2)}
    assert list(read_tiers_csv(tiers, ["x1", "x2", "x3"])) == [1, 1, 2]

    pairs = tmp_path / "pairs.csv"
    write_forbidden_csv(pairs, P)
    assert pairs.read_text().splitlines()[0] == "child,parent"
    assert read_forbidden_csv(pairs, 3) == P
    assert load_prior(pairs, "pairs", 3) == P

    gold = tmp_path / "gold.csv"
    gold.write_text("0,0,0\n1,0,0\n0,0,0\n")
    assert load_prior(gold, "gold", 3).forbidden == {(0, 1), (0, 2), (2, 1)}

    by_index = tmp_path / "tiers_idx.csv"
    by_index.write_text("variable,tier\n1,1\n2,1\n3,2\n")
    assert load_prior(by_index, "tiers", 3) == P
    with pytest.raises(ValueError):
        load_prior(by_index, "tiers", 4)
    with pytest.raises(ValueError):
        load_prior(pairs, "xml", 3)
