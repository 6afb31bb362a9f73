import math
from fractions import Fraction

import numpy as np
import pytest

from recsplit import analysis as A
from recsplit.hashing import random_mhcs


@pytest.mark.parametrize("d, phi", [(1, 1), (2, 1), (9, 6), (12, 4), (97, 96)])
def test_totient(d, phi):
    assert A.euler_totient(d) == phi
    assert phi == sum(1 for j in range(1, d + 1) if math.gcd(d, j) == 1)


def test_necklace_examples():
    assert A.necklace_count(4, 2) == 2
    assert A.necklace_count(6, 3) == 4
    assert A.necklace_count(7, 0) == 1
    assert A.necklace_count(7, 7) == 1


def test_necklaces_match_enumeration_small():
    for m in range(1, 9):
        for b in range(m + 1):
            assert A.necklace_count(m, b) == A.necklace_count_bruteforce(m, b)


@pytest.mark.parametrize("m, value", [(2, Fraction(3, 2)), (3, Fraction(5, 2)), (4, Fraction(13, 4)),
                                      (5, Fraction(19, 4)), (8, Fraction(477, 64))])
def test_rotation_factor_exact(m, value):
    assert A.expected_rotation_factor_exact(m) == value


def test_rotation_factor_m16():
    assert A.expected_rotation_factor(16) == pytest.approx(15.9297, abs=5e-5)


def test_rotation_factor_trend():
    vals = [A.expected_rotation_factor(m) for m in range(5, 27)]
    assert all(1 <= v <= m for v, m in zip(vals, range(5, 27)))
    # the gap to m shrinks overall; small wiggles come from gcd structure
    gaps = [m - v for v, m in zip(vals, range(5, 27))]
    assert gaps[-1] < gaps[0]
    assert A.expected_rotation_factor(1) == 1


def test_rotation_stats_coprime_gain_is_m():
    st = A.rotation_stats(8, 5)
    assert st.coprime and st.necklaces == 7
    assert st.p_rotation == pytest.approx(8 * st.p_bijection)
    assert not A.rotation_stats(8, 4).coprime


def test_lemma_small_run():
    est = A.lemma_monte_carlo(8, 3, num_seeds=200_000, rng_seed=5)
    assert est.ratio >= 8 - 4 * est.sigma
    assert est.p_rotation > est.p_bijection > 0


def test_shockhash_single_key_always_succeeds():
    ok, choices, cells = A.shockhash_try_seed(random_mhcs(1, 0), 1, 0)
    assert ok and cells == [0]


def test_shockhash_placement_is_bijection():
    from recsplit.hashing import mix64, remap

    keys = random_mhcs(8, 3)
    found = 0
    for seed in range(200):
        ok, choices, cells = A.shockhash_try_seed(keys, 8, seed)
        if not ok:
            continue
        found += 1
        assert sorted(cells) == list(range(8))
        for (hi, lo), c, cell in zip(keys, choices, cells):
            assert remap(mix64(int(lo) + 2 * seed + c), 8) == cell
    assert found > 10


def _orientable(keys, m, seed):
    # a placement exists iff no component of the cell graph has more keys than cells
    from recsplit.hashing import mix64, remap

    parent = list(range(m))
    edges = [0] * m

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for lo in keys[:, 1].tolist():
        a = find(remap(mix64(lo + 2 * seed), m))
        b = find(remap(mix64(lo + 2 * seed + 1), m))
        if a != b:
            parent[a] = b
            edges[b] += edges[a]
        edges[b] += 1
    cells = {}
    for v in range(m):
        cells[find(v)] = cells.get(find(v), 0) + 1
    return all(edges[r] <= c for r, c in cells.items())


def test_shockhash_success_matches_orientability_oracle():
    rng = np.random.default_rng(7)
    for _ in range(60):
        m = int(rng.integers(2, 13))
        keys = random_mhcs(m, rng)
        for seed in range(40):
            assert A.shockhash_try_seed(keys, m, seed)[0] == _orientable(keys, m, seed)


def test_shockhash_probability_decays():
    p6, _ = A.shockhash_success_probability(6, 20_000, 1)
    p10, _ = A.shockhash_success_probability(10, 20_000, 1)
    assert 0 < p10 < p6 < 1


def test_bruteforce_relative_is_one():
    r = A.simulate_leaf_strategies(5, "bruteforce", 50, 0)
    assert r.relative_evals == 1.0 and r.samples == 50


def test_rotation_cheaper_than_bruteforce():
    r = A.simulate_leaf_strategies(6, "rotation", 500, 0)
    assert 0.2 < r.relative_evals < 0.6


def test_unknown_strategy():
    with pytest.raises(ValueError):
        A.simulate_leaf_strategies(4, "magic", 10)
