import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from recsplit import search as S
from recsplit.hashing import mix64, random_mhcs, remap
from recsplit.tree import NodeSplit, shape_for, split_node


def _leaf_values(keys, value, m, rotation, salt=0):
    out = []
    if rotation:
        r = value % m
        base = value - r
    for hi, lo in keys:
        if rotation:
            v = remap(mix64(int(lo) + base + salt), m)
            out.append((v + r) % m if int(hi) & 1 else v)
        else:
            out.append(remap(mix64(int(lo) + value + salt), m))
    return out


def _is_bijection(keys, value, m, rotation):
    return sorted(_leaf_values(keys, value, m, rotation)) == list(range(m))


def test_single_key_needs_seed_zero():
    keys = random_mhcs(1, 0)
    assert S.find_bijection_bruteforce(keys).stored_value == 0
    assert S.find_bijection_rotation(keys).stored_value == 0


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_bruteforce_result_verifies(backend):
    keys = random_mhcs(3, 11)
    res = S.find_bijection_bruteforce(keys, backend=backend)
    assert _is_bijection(keys, res.stored_value, 3, False)


@given(st.integers(0, 2**32), st.integers(1, 5), st.sampled_from([1, 3, 8]))
def test_bruteforce_minimal(seed, m, width):
    keys = random_mhcs(m, seed)
    v = S.find_bijection_bruteforce(keys, width).stored_value
    assert _is_bijection(keys, v, m, False)
    assert not any(_is_bijection(keys, x, m, False) for x in range(v))


@given(st.integers(0, 2**32), st.integers(1, 5), st.sampled_from([1, 2, 8]))
def test_rotation_minimal_and_permutation(seed, m, width):
    keys = random_mhcs(m, seed)
    v = S.find_bijection_rotation(keys, width).stored_value
    assert _is_bijection(keys, v, m, True)
    # no smaller (base, r) pair works
    for x in range(v):
        assert not _is_bijection(keys, x, m, True)


def test_rotation_constructed_example():
    # A hashes to {0,1}, B hashes to {0,1}: rotating b by 2 fills the holes of a
    a, b = 0b0011, 0b0011
    assert [r for r in range(4) if a | S._rot_np(4, r, np.array([b], dtype=np.uint64))[0] == 0b1111] == [2]


def test_bruteforce_mean_trials_m8():
    m, leaves = 8, 2000
    seeds = [S.find_bijection_bruteforce(random_mhcs(m, 1000 + i)).stored_value + 1 for i in range(leaves)]
    expected = m**m / math.factorial(m)
    assert abs(np.mean(seeds) / expected - 1) < 0.05


def test_rotation_reduces_base_seed_trials():
    m, leaves = 8, 3000
    base_seeds = [S.find_bijection_rotation(random_mhcs(m, 5000 + i)).stored_value // m + 1
                  for i in range(leaves)]
    expected = m**m / math.factorial(m) / 7.453125
    assert abs(np.mean(base_seeds) / expected - 1) < 0.10


def test_lookup_table_examples():
    table, period = S.normalize_rotation_lookup(4)
    assert table[0] == 0 and table[0b1111] == 0
    assert table[0b0110] == 3
    assert period[0b0101] == 2 and period[0b0001] == 4 and period[0] == 1


@pytest.mark.parametrize("m", [2, 5, 8, 11])
def test_lut_matches_plain_rotation(m):
    lut = S.normalize_rotation_lookup(m)
    for i in range(1000 if m <= 8 else 200):
        keys = random_mhcs(m, 70_000 + i)
        assert (S.find_bijection_rotation_lut(keys, lut).stored_value
                == S.find_bijection_rotation(keys).stored_value)


def test_lut_size_limit():
    with pytest.raises(ValueError):
        S.normalize_rotation_lookup(17)


@pytest.mark.parametrize("kind", ["bruteforce", "rotation", "splitting"])
def test_batched_equals_scalar(kind):
    shape = shape_for(8)
    for i in range(1000):
        if kind == "splitting":
            s = 9 + i % 40
            keys = random_mhcs(s, i)
            node = split_node(s, shape)
            a = S.find_splitting(keys.copy(), node, 1).stored_value
            b = S.find_splitting(keys.copy(), node, 8).stored_value
        else:
            keys = random_mhcs(1 + i % 8, i)
            f = S.find_bijection_bruteforce if kind == "bruteforce" else S.find_bijection_rotation
            a, b = f(keys, 1).stored_value, f(keys, 8).stored_value
        assert a == b


def test_batched_trial_accounting():
    keys = random_mhcs(6, 3)
    res = S.find_bijection_rotation(keys, batch_width=8)
    passes = res.stored_value // 6 // 8 + 1
    assert res.trials == passes * 8 * 6
    res = S.find_bijection_bruteforce(keys, batch_width=4)
    assert res.trials == (res.stored_value // 4 + 1) * 4 * 6


def test_batched_rotation_checks_every_lane():
    # the minimal combined value wins even when a later lane needs a smaller rotation
    for i in range(300):
        keys = random_mhcs(7, 900 + i)
        scalar = S.find_bijection_rotation(keys, 1).stored_value
        assert S.find_bijection_rotation(keys, 8).stored_value == scalar


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_backends_agree(backend):
    for i in range(40):
        keys = random_mhcs(1 + i % 8, 40 + i)
        for f in (S.find_bijection_bruteforce, S.find_bijection_rotation):
            for w in (1, 8):
                assert f(keys, w, backend=backend) == f(keys, w, backend="numba")


def _parts(keys, seed, s, unit, salt=0):
    return [remap(mix64(int(lo) + seed + salt), s) // unit for _, lo in keys]


@pytest.mark.parametrize("s, parts, expected", [(2, (1, 1), 2.0), (4, (2, 2), 1 / 0.375)])
def test_splitting_mean_trials(s, parts, expected):
    split = NodeSplit(s, 2, parts, 1, parts[0])
    trials = [S.find_splitting(random_mhcs(s, 20_000 + i), split).stored_value + 1 for i in range(10_000)]
    assert abs(np.mean(trials) / expected - 1) < 0.05


@given(st.integers(0, 2**32), st.sampled_from([9, 16, 20, 33, 70, 100, 250]), st.sampled_from([1, 8]))
def test_splitting_reorders_and_is_minimal(seed, s, width):
    shape = shape_for(8)
    node = split_node(s, shape)
    keys = random_mhcs(s, seed)
    before = keys.copy()
    res = S.find_splitting(keys, node, width, salt=99)
    p = _parts(keys, res.stored_value, s, node.unit, 99)
    assert p == sorted(p)
    assert [p.count(i) for i in range(node.fanout)] == list(node.parts)
    assert sorted(map(tuple, keys.tolist())) == sorted(map(tuple, before.tolist()))
    if s <= 20:
        for x in range(res.stored_value):
            q = _parts(before, x, s, node.unit, 99)
            assert [q.count(i) for i in range(node.fanout)] != list(node.parts)


def test_packed_counters_reject_carry_aliasing():
    # a fanout-9 split uses both accumulators; results must still verify exactly
    shape = shape_for(24)
    node = split_node(216, shape)
    assert node.fanout == 9
    keys = random_mhcs(216, 4)
    res = S.find_splitting(keys, node)
    p = _parts(keys, res.stored_value, 216, node.unit)
    assert [p.count(i) for i in range(9)] == list(node.parts)


def test_seed_cap_signals_duplicates():
    keys = np.array([[1, 2], [1, 2]], dtype=np.uint64)
    with pytest.raises(S.SeedCapExceeded):
        S.find_bijection_bruteforce(keys, cap=10_000)
    with pytest.raises(S.SeedCapExceeded):
        S.find_bijection_rotation(np.array([[2, 2], [2, 2]], dtype=np.uint64), cap=10_000)


def test_stats_sink():
    stats = S.SearchStats()
    S.find_bijection_bruteforce(random_mhcs(5, 1), stats=stats)
    S.find_bijection_rotation(random_mhcs(5, 2), stats=stats)
    assert stats.nodes == {"bruteforce": 1, "rotation": 1}
    assert stats.total_evaluations > 0
