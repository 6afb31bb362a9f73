"""Rotation-fitting combinatorics and the leaf-search evaluation lab.

Necklaces (rotation classes of m-bit strings with a fixed number of ones)
explain why rotation fitting raises the per-base-seed success probability by
roughly a factor m.  The lab measures hash evaluations per leaf for brute
force, rotation fitting and a ShockHash-style cuckoo search.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, List

import numpy as np

from ._accel import njit
from .bits import low_mask_nb, rot_nb
from .hashing import mix64_nb, random_mhcs, remap_nb
from .search import SEED_CAP, bruteforce_nb, rotation_nb

STRATEGIES = ("bruteforce", "rotation", "shockhash")


# -- combinatorics -----------------------------------------------------------

def euler_totient(d: int) -> int:
    if d < 1:
        raise ValueError("totient is defined for d >= 1")
    result, n, p = d, d, 2
    while p * p <= n:
        if n % p == 0:
            while n % p == 0:
                n //= p
            result -= result // p
        p += 1
    if n > 1:
        result -= result // n
    return result


def necklace_count(m: int, b: int) -> int:
    """Rotation classes of m-bit strings with exactly ``b`` ones."""
    if m < 1 or not 0 <= b <= m:
        raise ValueError("need m >= 1 and 0 <= b <= m")
    g = math.gcd(m - b, b)  # gcd(0, m) = m covers the all-zero / all-one strings
    total = sum(euler_totient(d) * math.comb(m // d, b // d) for d in range(1, g + 1) if g % d == 0)
    assert total % m == 0
    return total // m


def necklace_count_bruteforce(m: int, b: int) -> int:
    """Reference count by canonicalising every string (feasible for m <= ~16)."""
    mask = (1 << m) - 1
    seen = set()
    for v in range(1 << m):
        if v.bit_count() != b:
            continue
        seen.add(min(((v << i) | (v >> (m - i))) & mask for i in range(m)))
    return len(seen)


def rotation_gain(m: int, b: int) -> Fraction:
    """P(R)/P(B) for a leaf with ``b`` keys in set B: C(m, b) / necklaces."""
    return Fraction(math.comb(m, b), necklace_count(m, b))


@lru_cache(maxsize=None)
def expected_rotation_factor_exact(m: int) -> Fraction:
    if m < 1:
        raise ValueError("m must be >= 1")
    return sum((Fraction(math.comb(m, b), 2**m) * rotation_gain(m, b) for b in range(m + 1)),
               Fraction(0))


def expected_rotation_factor(m: int) -> float:
    """Expected success-probability gain of rotation fitting, over a binomial A/B split."""
    return float(expected_rotation_factor_exact(m))


@dataclass(frozen=True)
class RotationStats:
    m: int
    a: int
    b: int
    necklaces: int
    p_bijection: float
    p_rotation: float
    expected_factor: float

    @property
    def coprime(self) -> bool:
        return math.gcd(self.a, self.b) == 1


def rotation_stats(m: int, b: int) -> RotationStats:
    pb = math.factorial(m) / m**m
    return RotationStats(m, m - b, b, necklace_count(m, b), pb, pb * float(rotation_gain(m, b)),
                         expected_rotation_factor(m))


# -- Monte-Carlo of the coprime lemma ----------------------------------------

@njit(nogil=True)
def _count_bij_rot(lows, bbits, num_seeds):
    m = lows.shape[0]
    um = np.uint64(m)
    full = low_mask_nb(m)
    nb = 0
    nr = 0
    for seed in range(num_seeds):
        a = np.uint64(0)
        b = np.uint64(0)
        for k in range(m):
            bit = np.uint64(1) << remap_nb(mix64_nb(lows[k] + np.uint64(seed)), um)
            if bbits[k]:
                b |= bit
            else:
                a |= bit
        if a | b == full and (a & b) == 0:
            nb += 1
        for r in range(m):
            if a | rot_nb(m, r, b) == full:
                nr += 1
                break
    return nb, nr


@dataclass(frozen=True)
class LemmaEstimate:
    m: int
    a: int
    b: int
    seeds: int
    p_bijection: float
    p_rotation: float
    ratio: float
    sigma: float


def lemma_monte_carlo(m: int = 8, a: int = 3, num_seeds: int = 10**6, rng_seed: int = 0,
                      key_sets: int = 100) -> LemmaEstimate:
    """Estimate P(B) and P(R) for a fixed A/B split of sizes (a, m - a).

    Seeds are spread over ``key_sets`` random key sets.  The ratio's standard
    error uses the delta method with the events nested (bijection implies a
    valid rotation).
    """
    if not 0 <= a <= m:
        raise ValueError("need 0 <= a <= m")
    rng = np.random.default_rng(rng_seed)
    bbits = np.array([0] * a + [1] * (m - a), dtype=np.uint8)
    per = -(-num_seeds // key_sets)
    nb = nr = total = 0
    for _ in range(key_sets):
        lows = random_mhcs(m, rng)[:, 1].copy()
        x, y = _count_bij_rot(lows, bbits, per)
        nb, nr, total = nb + x, nr + y, total + per
    pb, pr = nb / total, nr / total
    if nb == 0:
        return LemmaEstimate(m, a, m - a, total, pb, pr, math.inf, math.inf)
    ratio = pr / pb
    rel_var = (1 - pb) / (total * pb) - (1 - pr) / (total * pr)
    return LemmaEstimate(m, a, m - a, total, pb, pr, ratio, ratio * math.sqrt(max(rel_var, 0.0)))


# -- ShockHash-style cuckoo leaf search --------------------------------------

@njit(inline="always")
def _cells(low, seed, um):
    c0 = np.int64(remap_nb(mix64_nb(low + np.uint64(2 * seed)), um))
    c1 = np.int64(remap_nb(mix64_nb(low + np.uint64(2 * seed + 1)), um))
    return c0, c1


@njit(nogil=True)
def _cuckoo_insert_all(lows, seed, table, choice):
    """Insert every key; returns False once an insertion exceeds m*m evictions."""
    m = lows.shape[0]
    um = np.uint64(m)
    table[:] = -1
    cap = m * m
    for i in range(m):
        key = i
        c0, c1 = _cells(lows[key], seed, um)
        side = 0
        pos = c0
        evictions = 0
        while True:
            occupant = table[pos]
            table[pos] = key
            choice[key] = side
            if occupant < 0:
                break
            evictions += 1
            if evictions > cap:
                return False
            key = occupant
            o0, o1 = _cells(lows[key], seed, um)
            # move the evicted key to its other cell
            side = 1 - choice[key]
            pos = o1 if side == 1 else o0
    return True


def shockhash_try_seed(keys, m: int, seed: int):
    """Try one seed pair ``(2*seed, 2*seed+1)``.

    Returns ``(success, choices, cells)`` where ``choices[i]`` says which of its
    two candidate cells key ``i`` occupies and ``cells[i]`` is that cell.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    lows = np.ascontiguousarray(keys[:, 1] if keys.ndim == 2 else keys)
    if len(lows) != m or m < 1:
        raise ValueError("need exactly m >= 1 keys")
    table = np.empty(m, dtype=np.int64)
    choice = np.zeros(m, dtype=np.int8)
    ok = _cuckoo_insert_all(lows, seed, table, choice)
    if not ok:
        return False, None, None
    cells = np.empty(m, dtype=np.int64)
    cells[table] = np.arange(m)
    return True, [int(c) for c in choice], [int(c) for c in cells]


@njit(nogil=True)
def _shockhash_search(lows, cap):
    m = lows.shape[0]
    table = np.empty(m, dtype=np.int64)
    choice = np.zeros(m, dtype=np.int8)
    for seed in range(cap):
        if _cuckoo_insert_all(lows, seed, table, choice):
            return seed, (seed + 1) * 2 * m
    return -1, cap * 2 * m


@njit(nogil=True)
def _shockhash_count(lows, start, num_seeds):
    m = lows.shape[0]
    table = np.empty(m, dtype=np.int64)
    choice = np.zeros(m, dtype=np.int8)
    hits = 0
    for seed in range(start, start + num_seeds):
        if _cuckoo_insert_all(lows, seed, table, choice):
            hits += 1
    return hits


def shockhash_success_probability(m: int, num_seeds: int = 10**5, rng_seed: int = 0,
                                  key_sets: int = 100):
    """Fraction of seeds whose cuckoo insertion succeeds; returns ``(p, stderr)``."""
    rng = np.random.default_rng(rng_seed)
    per = -(-num_seeds // key_sets)
    hits = 0
    for _ in range(key_sets):
        hits += _shockhash_count(random_mhcs(m, rng)[:, 1].copy(), 0, per)
    total = per * key_sets
    p = hits / total
    return p, math.sqrt(p * (1 - p) / total)


# -- evaluation lab ----------------------------------------------------------

@dataclass(frozen=True)
class LeafSimResult:
    m: int
    strategy: str
    mean_evals: float
    relative_evals: float
    samples: int


def _leaf_keys(m: int, rng_seed: int, task: int) -> np.ndarray:
    return random_mhcs(m, np.random.SeedSequence([rng_seed, task]))


def _mean_evals(m: int, strategy: str, num_leaves: int, rng_seed: int) -> float:
    total = 0
    for task in range(num_leaves):
        keys = _leaf_keys(m, rng_seed, task)
        lows = np.ascontiguousarray(keys[:, 1])
        if strategy == "bruteforce":
            v, e = bruteforce_nb(lows, np.uint64(0), SEED_CAP, 1)
        elif strategy == "rotation":
            bbits = (keys[:, 0] & np.uint64(1)).astype(np.uint8)
            v, e = rotation_nb(lows, bbits, np.uint64(0), SEED_CAP, 1)
        elif strategy == "shockhash":
            v, e = _shockhash_search(lows, SEED_CAP)
        else:
            raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
        if v < 0:
            raise RuntimeError("seed cap exceeded in simulation")
        total += e
    return total / num_leaves


def simulate_leaf_strategies(m: int, strategy: str, num_leaves: int = 2000, rng_seed: int = 0,
                             baseline: float = None) -> LeafSimResult:
    """Mean hash evaluations per leaf, and the ratio to simulated brute force.

    Both strategies see the same key sets (leaf ``i`` is drawn from
    ``SeedSequence([rng_seed, i])``).  Pass ``baseline`` to reuse a brute-force
    mean across strategies.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    mean = _mean_evals(m, strategy, num_leaves, rng_seed)
    if strategy == "bruteforce":
        return LeafSimResult(m, strategy, mean, 1.0, num_leaves)
    if baseline is None:
        baseline = _mean_evals(m, "bruteforce", num_leaves, rng_seed)
    return LeafSimResult(m, strategy, mean, mean / baseline, num_leaves)


def evaluation_rows(m_values: Iterable[int], strategies=STRATEGIES, num_leaves: int = 2000,
                    rng_seed: int = 0) -> List[LeafSimResult]:
    rows = []
    for m in m_values:
        base = _mean_evals(m, "bruteforce", num_leaves, rng_seed)
        for strategy in strategies:
            rows.append(simulate_leaf_strategies(m, strategy, num_leaves, rng_seed, baseline=base))
    return rows
