import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brute import BruteStats, ancestors, random_rows, random_stratum, random_tree
from sda.model import NotAStratum, arr_size, compute_stats, density, is_dense, split_extract
from sda.versions import VersionTree


def rc_tree():
    t = VersionTree()
    return t, t.clone(0)


def test_two_version_example():
    t, c = rc_tree()
    keys, vers = np.array([1, 1, 2]), np.array([c, 0, 0])
    s = compute_stats(keys, vers, {0, c}, t)
    assert s.live[0] == 2 and s.live[c] == 2
    assert s.lead[c] == 1 and s.lead[0] == 2
    assert s.lead_below[0] == 3


def test_singleton():
    t = VersionTree()
    s = compute_stats(np.array([9]), np.array([0]), {0}, t)
    assert s.lead[0] == s.live[0] == s.lead_below[0] == 1


def test_untouched_child_sees_parent():
    t, c = rc_tree()
    s = compute_stats(np.array([1, 2, 3]), np.array([0, 0, 0]), {0, c}, t)
    assert s.lead[c] == 0 and s.live[c] == s.live[0] == 3


def test_unsorted_rejected():
    t, c = rc_tree()
    with pytest.raises(ValueError):
        compute_stats(np.array([2, 1]), np.array([0, 0]), {0}, t)
    with pytest.raises(ValueError):
        compute_stats(np.array([1, 1]), np.array([0, c]), {0, c}, t)
    with pytest.raises(ValueError):
        compute_stats(np.array([1]), np.array([0]), set(), t)


def test_density_examples():
    t = VersionTree()
    s = compute_stats(np.array([1, 2]), np.array([0, 0]), {0}, t)
    assert density(s, 0, 3) == Fraction(2, 3) and is_dense(s, 0, 3)
    s1 = compute_stats(np.array([1]), np.array([0]), {0}, t)
    assert density(s1, 0, 4) == Fraction(1, 4) and not is_dense(s1, 0, 4)
    with pytest.raises(ValueError):
        density(s1, 0, 0)


def test_split_extract_examples():
    t, c = rc_tree()
    keys, vers = np.array([5, 5]), np.array([c, 0])
    assert split_extract(keys, vers, {c}, t).tolist() == [0]
    assert split_extract(keys, vers, {0, c}, t).tolist() == [0, 1]
    other = t.clone(0)
    assert split_extract(np.array([5]), np.array([c]), {other}, t).tolist() == []
    with pytest.raises(ValueError):
        split_extract(keys, vers, set(), t)


def test_arr_size_examples():
    t, c = rc_tree()
    keys, vers = np.array([5, 5]), np.array([c, 0])
    s = compute_stats(keys, vers, {0, c}, t)
    assert arr_size(s, {0, c}) == 2
    assert arr_size(s, {c}) == 2 >= len(split_extract(keys, vers, {c}, t))
    d = t.clone(0)
    s2 = compute_stats(np.array([1, 5, 5, 6]), np.array([d, c, 0, d]), {0, c, d}, t)
    assert arr_size(s2, {c, d}) == s2.live[0] + s2.lead_below[c] + s2.lead_below[d]
    g = t.clone(c)
    with pytest.raises(NotAStratum):
        arr_size(s2, {g, d})


def _instance(seed):
    rng = random.Random(seed)
    t = random_tree(rng, rng.randint(1, 20))
    V = random_stratum(rng, t)
    keys, vers = random_rows(rng, t, V, rng.randint(1, 200), rng.choice([3, 20, 1000]))
    return rng, t, V, keys, vers


@pytest.mark.parametrize("seed", range(40))
def test_stats_match_brute(seed):
    rng, t, V, keys, vers = _instance(seed)
    s = compute_stats(keys, vers, V, t)
    b = BruteStats(t, keys, vers, V)
    for v in range(len(t)):
        assert s.live[v] == b.live(v)
    for v in V:
        assert s.lead[v] == b.lead(v)
        assert s.lead_below[v] == b.lead_below(v)
        assert s.lam_t[v] == b.lam_t(v)
    # live(v) is the keys written at v plus the parent's live entries not overwritten at v
    for v in V:
        p = t.parent[v]
        own = {int(keys[i]) for i in range(len(keys)) if vers[i] == v}
        inherited = {int(keys[i]) for i in b.rows_at(p)} if p != -1 else set()
        assert b.live(v) == len(own) + len(inherited - own)
    W = rng.sample(sorted(V), rng.randint(1, len(V)))
    assert set(s.split_idx(W).tolist()) == b.split(W)


@pytest.mark.parametrize("seed", range(40))
def test_split_extract_properties(seed):
    rng, t, V, keys, vers = _instance(seed + 100)
    W = rng.sample(sorted(V), rng.randint(1, len(V)))
    idx = split_extract(keys, vers, W, t)
    assert np.all(np.diff(idx) > 0)
    again = split_extract(keys[idx], vers[idx], W, t)
    assert again.tolist() == list(range(len(idx)))
    # the size bound needs every row to sit in W or above the stratum's parent
    orphans = BruteStats(t, keys, vers, W).orphans()
    parents = {t.parent[o] for o in orphans}
    if len(parents) == 1:
        p = parents.pop()
        above = set(ancestors(t, p)) if p != -1 else set()
        keep = np.array([int(x) in W or int(x) in above for x in vers])
        if keep.any():
            k2, v2 = keys[keep], vers[keep]
            s2 = compute_stats(k2, v2, V, t)
            assert len(split_extract(k2, v2, W, t)) <= arr_size(s2, W)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_density_monotone_down_the_tree(seed):
    rng, t, V, keys, vers = _instance(seed)
    s = compute_stats(keys, vers, V, t)
    n = len(keys)
    for v in range(len(t)):
        if is_dense(s, v, n):
            for w in range(len(t)):
                if v in ancestors(t, w):
                    assert is_dense(s, w, n)
