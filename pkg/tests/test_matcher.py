import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dentid import PyramidParams
from dentid.matcher import (
    KDTree,
    MatchPair,
    approx_knn,
    brute_force_knn,
    cross_check,
    good_matches,
    lowe_similarity,
    ratio_test,
)

from conftest import described


def unit_rows(rng, n, d=128):
    a = np.abs(rng.normal(size=(n, d)))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def naive_knn(query, train):
    """Double loop over every pair; first-seen index wins ties."""
    out = []
    for i in range(len(query)):
        b1 = b2 = math.inf
        j1 = -1
        for j in range(len(train)):
            d = float(np.sqrt(np.sum((train[j] - query[i]) ** 2)))
            if d < b1:
                b2, b1, j1 = b1, d, j
            elif d < b2:
                b2 = d
        out.append((i, j1, b1, b2))
    return out


def as_tuples(pairs):
    return [(m.query_idx, m.train_idx, m.dist_best, m.dist_second) for m in pairs]


def test_brute_force_bit_identical_to_naive():
    rng = np.random.default_rng(7)
    q, t = unit_rows(rng, 200), unit_rows(rng, 200)
    got = brute_force_knn(q, t)
    assert as_tuples(got) == naive_knn(q, t)
    for m in got:
        assert m.ratio == m.dist_best / m.dist_second


def test_brute_force_with_duplicates_and_ties():
    rng = np.random.default_rng(8)
    t = unit_rows(rng, 30)
    t[5] = t[20]
    t[9] = t[3]
    q = np.vstack([t[20], t[3], unit_rows(rng, 10)])
    got = brute_force_knn(q, t)
    assert as_tuples(got) == naive_knn(q, t)
    assert got[0].train_idx == 5 and got[0].dist_second == 0.0


def test_brute_force_self_match():
    t = unit_rows(np.random.default_rng(1), 50)
    for m in brute_force_knn(t, t):
        assert m.dist_best == 0 and m.train_idx == m.query_idx and m.ratio == 0


def test_brute_force_padded_axes():
    e0, e1 = np.zeros(128), np.zeros(128)
    e0[0] = e1[1] = 1.0
    (m,) = brute_force_knn([e0], [e0, e1])
    assert m.dist_best == 0.0 and m.dist_second == pytest.approx(math.sqrt(2))


def test_degenerate_inputs():
    t = unit_rows(np.random.default_rng(2), 3)
    assert brute_force_knn(np.zeros((0, 128)), t) == []
    assert brute_force_knn(t, np.zeros((0, 128))) == []
    assert approx_knn(t, np.zeros((0, 128))) == []
    one = brute_force_knn(t, t[:1])
    assert all(m.degenerate and m.dist_second == math.inf and m.ratio == 0 for m in one)


def _mp(q, t, ratio):
    return MatchPair(q, t, ratio, 1.0, ratio)


def test_ratio_boundary():
    kept = ratio_test([_mp(0, 0, 0.69), _mp(1, 0, 0.70), _mp(2, 0, 0.0)], 0.7)
    assert [m.query_idx for m in kept] == [0, 2]
    assert ratio_test([_mp(0, 0, 0.8), _mp(1, 1, 0.7)], 0.7) == []


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), max_size=40), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_ratio_test_subset_and_monotone(ratios, t1, t2):
    lo, hi = sorted((t1, t2))
    pairs = [_mp(i, i, r) for i, r in enumerate(ratios)]
    small, big = ratio_test(pairs, lo), ratio_test(pairs, hi)
    assert set(small) <= set(big) <= set(pairs)


def test_cross_check_examples():
    assert cross_check([_mp(0, 3, 0.1)], [_mp(3, 0, 0.1)]) == [_mp(0, 3, 0.1)]
    assert cross_check([_mp(0, 3, 0.1)], [_mp(3, 1, 0.1)]) == []


def test_cross_check_keeps_identity_matches():
    for seed in range(5):
        t = unit_rows(np.random.default_rng(seed), 60)
        kept = cross_check(brute_force_knn(t, t), brute_force_knn(t, t))
        assert [(m.query_idx, m.train_idx) for m in kept] == [(i, i) for i in range(60)]


def test_approx_unlimited_budget_is_exact():
    rng = np.random.default_rng(3)
    q, t = unit_rows(rng, 150), unit_rows(rng, 300)
    assert approx_knn(q, t, leaf_budget=math.inf) == brute_force_knn(q, t)


def test_approx_agreement_on_1000():
    rng = np.random.default_rng(0)
    q, t = unit_rows(rng, 1000), unit_rows(rng, 1000)
    exact = np.array([m.train_idx for m in brute_force_knn(q, t)])
    approx = np.array([m.train_idx for m in approx_knn(q, t, leaf_budget=200)])
    agreement = float(np.mean(exact == approx))
    assert agreement >= 0.95
    # measured 0.996 for this seed
    assert agreement >= 0.99


def test_kdtree_structure():
    data = unit_rows(np.random.default_rng(4), 100, 16)
    tree = KDTree(data, leaf_size=4)
    assert sorted(tree.perm.tolist()) == list(range(100))
    sizes = [hi - lo for d, lo, hi in zip(tree._dim, tree._lo, tree._hi) if d == -1]
    assert sum(sizes) == 100 and max(sizes) <= 4
    # identical points never split forever
    assert KDTree(np.ones((10, 4)), leaf_size=2).n_leaves == 1


def test_lowe_self_similarity():
    for seed in range(3):
        _, d = described(seed)
        s = lowe_similarity(d, d)
        assert s.value == 1.0 and s.good_matches == len(d)


def test_lowe_empty_side():
    _, d = described(0)
    assert lowe_similarity(d, np.zeros((0, 128))).value == 0.0
    s = lowe_similarity(np.zeros((0, 128)), np.zeros((0, 128)))
    assert s.value == 0.0 and s.degenerate


def test_lowe_symmetric_under_cross_check():
    for a, b in [(0, 1), (2, 5), (3, 4)]:
        da, db = described(a)[1], described(b)[1]
        assert lowe_similarity(da, db).value == lowe_similarity(db, da).value
    rng = np.random.default_rng(5)
    x, y = unit_rows(rng, 80), unit_rows(rng, 120)
    assert lowe_similarity(x, y).value == lowe_similarity(y, x).value


def test_random_unit_vectors_score_low():
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        worst = max(worst, lowe_similarity(unit_rows(rng, 100), unit_rows(rng, 100)).value)
    assert worst <= 0.1


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31))
def test_score_in_unit_interval(n, seed):
    rng = np.random.default_rng(seed)
    a, b = unit_rows(rng, n), unit_rows(rng, max(1, n // 2))
    for p in (PyramidParams(), PyramidParams(cross_check=False), PyramidParams(root_kernel=False)):
        s = lowe_similarity(a, b, p)
        assert 0.0 <= s.value <= 1.0
        assert s.denom == max(len(a), len(b))


def test_good_matches_respect_ratio():
    da, db = described(0)[1], described(1)[1]
    for m in good_matches(da, db, PyramidParams(cross_check=False)):
        assert m.ratio < 0.7


def test_approx_matcher_mode_agrees_on_images():
    da, db = described(0)[1], described(0)[1]
    assert lowe_similarity(da, db, PyramidParams(matcher="approx")).value == 1.0
