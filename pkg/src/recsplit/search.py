"""Seed search kernels for leaf bijections and node splittings.

Every kernel takes the low MHC words of a node's keys (plus the A/B bits for
rotation fitting) and returns ``(stored_value, hash_evaluations)``; a value of
-1 means the seed cap was hit.  The hash for seed ``x`` is
``mix64(low + x + salt)``.

Evaluation accounting:
  * scalar brute force stops at the first collision and counts what it hashed;
  * rotation fitting and splittings hash every key for every tried seed;
  * batched mode hashes every key in every lane, ``width * size`` per pass.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from ._accel import njit, resolve_backend
from .bits import low_mask_nb, rot_nb
from .hashing import as_mhc_array, mix64_nb, mix64_np, remap_nb

SEED_CAP = 1 << 32
MAX_LUT_LEAF = 16

_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_U8 = np.uint64(8)


class SeedCapExceeded(RuntimeError):
    """No valid seed below the cap; almost always caused by duplicate keys."""


@dataclass(frozen=True)
class SeedResult:
    stored_value: int
    trials: int  # hash evaluations
    order: Optional[Tuple[int, ...]] = None  # permutation applied by a splitting search


@dataclass
class SearchStats:
    """Accumulates evaluation counts per kernel kind."""

    evaluations: dict = field(default_factory=dict)
    nodes: dict = field(default_factory=dict)

    def record(self, kind: str, result: SeedResult):
        self.evaluations[kind] = self.evaluations.get(kind, 0) + result.trials
        self.nodes[kind] = self.nodes.get(kind, 0) + 1

    @property
    def total_evaluations(self) -> int:
        return sum(self.evaluations.values())


# -- numba kernels -----------------------------------------------------------

@njit(nogil=True)
def bruteforce_nb(lows, salt, cap, width):
    m = lows.shape[0]
    um = np.uint64(m)
    full = low_mask_nb(m)
    evals = 0
    if width <= 1:
        for seed in range(cap):
            x = np.uint64(seed) + salt
            mask = _ZERO
            ok = True
            for k in range(m):
                evals += 1
                bit = _ONE << remap_nb(mix64_nb(lows[k] + x), um)
                if mask & bit:
                    ok = False
                    break
                mask |= bit
            if ok:
                return seed, evals
        return -1, evals
    masks = np.empty(width, dtype=np.uint64)
    base = 0
    while base < cap:
        masks[:] = _ZERO
        for k in range(m):
            y = lows[k] + salt + np.uint64(base)
            for j in range(width):
                masks[j] |= _ONE << remap_nb(mix64_nb(y + np.uint64(j)), um)
        evals += m * width
        for j in range(width):
            if masks[j] == full and base + j < cap:
                return base + j, evals
        base += width
    return -1, evals


@njit(inline="always")
def _ab_masks(lows, bbits, x, um):
    a = _ZERO
    b = _ZERO
    for k in range(lows.shape[0]):
        bit = _ONE << remap_nb(mix64_nb(lows[k] + x), um)
        if bbits[k]:
            b |= bit
        else:
            a |= bit
    return a, b


@njit(nogil=True)
def rotation_nb(lows, bbits, salt, cap, width):
    m = lows.shape[0]
    um = np.uint64(m)
    full = low_mask_nb(m)
    evals = 0
    amask = np.empty(max(width, 1), dtype=np.uint64)
    bmask = np.empty(max(width, 1), dtype=np.uint64)
    width = max(width, 1)
    base = 0  # index of the first base seed of this pass
    while base * m < cap:
        for j in range(width):
            amask[j], bmask[j] = _ab_masks(lows, bbits, np.uint64((base + j) * m) + salt, um)
        evals += m * width
        # all rotations of all lanes; lanes ascend so the first hit is minimal
        for j in range(width):
            for r in range(m):
                if amask[j] | rot_nb(m, r, bmask[j]) == full:
                    v = (base + j) * m + r
                    return (v, evals) if v < cap else (-1, evals)
        base += width
    return -1, evals


@njit(nogil=True)
def rotation_lut_nb(lows, bbits, salt, cap, width, table, period):
    m = lows.shape[0]
    um = np.uint64(m)
    full = low_mask_nb(m)
    evals = 0
    width = max(width, 1)
    amask = np.empty(width, dtype=np.uint64)
    bmask = np.empty(width, dtype=np.uint64)
    base = 0
    while base * m < cap:
        for j in range(width):
            amask[j], bmask[j] = _ab_masks(lows, bbits, np.uint64((base + j) * m) + salt, um)
        evals += m * width
        for j in range(width):
            a = amask[j]
            b = bmask[j]
            c = full ^ a
            r = (np.int64(table[b]) - np.int64(table[c])) % m
            r = r % np.int64(period[b])
            if a | rot_nb(m, r, b) == full:
                v = (base + j) * m + r
                return (v, evals) if v < cap else (-1, evals)
        base += width
    return -1, evals


@njit(inline="always")
def _part_index(low, x, us, unit):
    return np.int64(remap_nb(mix64_nb(low + x), us)) // unit


@njit(inline="always")
def _split_exact(lows, x, unit, fanout, counts):
    s = lows.shape[0]
    us = np.uint64(s)
    counts[:] = 0
    for k in range(s):
        counts[_part_index(lows[k], x, us, unit)] += 1
    for p in range(fanout - 1):
        if counts[p] != unit:
            return False
    return True


@njit(nogil=True)
def splitting_nb(lows, salt, unit, fanout, cap, width):
    """Smallest seed sending ``unit`` keys to each of the first ``fanout - 1`` parts.

    Fanout 2 uses a single left counter.  Wider splits pack 8-bit counters
    into two 64-bit accumulators (parts 0-7 and 8-15); the packed compare can
    be fooled by a carry out of an overflowing byte, so hits are re-checked
    exactly.
    """
    s = lows.shape[0]
    us = np.uint64(s)
    width = max(width, 1)
    evals = 0
    counts = np.zeros(16, dtype=np.int64)
    if fanout == 2:
        left = np.zeros(width, dtype=np.int64)
        base = 0
        while base < cap:
            left[:] = 0
            for k in range(s):
                y = lows[k] + salt + np.uint64(base)
                for j in range(width):
                    if _part_index(y, np.uint64(j), us, unit) == 0:
                        left[j] += 1
            evals += s * width
            for j in range(width):
                if left[j] == unit and base + j < cap:
                    return base + j, evals
            base += width
        return -1, evals
    t0 = _ZERO
    t1 = _ZERO
    for p in range(fanout):
        c = np.uint64(unit if p < fanout - 1 else s - unit * (fanout - 1))
        if p < 8:
            t0 += c << (_U8 * np.uint64(p))
        else:
            t1 += c << (_U8 * np.uint64(p - 8))
    acc0 = np.zeros(width, dtype=np.uint64)
    acc1 = np.zeros(width, dtype=np.uint64)
    base = 0
    while base < cap:
        acc0[:] = _ZERO
        acc1[:] = _ZERO
        for k in range(s):
            y = lows[k] + salt + np.uint64(base)
            for j in range(width):
                p = _part_index(y, np.uint64(j), us, unit)
                if p < 8:
                    acc0[j] += _ONE << (_U8 * np.uint64(p))
                else:
                    acc1[j] += _ONE << (_U8 * np.uint64(p - 8))
        evals += s * width
        for j in range(width):
            if acc0[j] == t0 and acc1[j] == t1 and base + j < cap:
                if _split_exact(lows, np.uint64(base + j) + salt, unit, fanout, counts):
                    return base + j, evals
        base += width
    return -1, evals


@njit(nogil=True)
def reorder_split_nb(lows, highs, seed, salt, unit, fanout):
    """Stable in-place reorder of a node's keys into part order."""
    s = lows.shape[0]
    us = np.uint64(s)
    x = np.uint64(seed) + salt
    parts = np.empty(s, dtype=np.int64)
    starts = np.zeros(fanout + 1, dtype=np.int64)
    for k in range(s):
        p = _part_index(lows[k], x, us, unit)
        parts[k] = p
        starts[p + 1] += 1
    for p in range(fanout):
        starts[p + 1] += starts[p]
    tl = lows.copy()
    th = highs.copy()
    for k in range(s):
        d = starts[parts[k]]
        starts[parts[k]] += 1
        lows[d] = tl[k]
        highs[d] = th[k]


# -- numpy kernels -----------------------------------------------------------
# Seeds are examined in growing chunks; the first hit in chunk order is the
# same seed the scalar loop would find, and evaluation counts are rebuilt to
# match the numba kernels exactly.

def _chunks(cap: int, width: int, first: int = 64, limit: int = 1 << 14):
    """Yield ``(start, count)`` covering ``[0, cap)`` in multiples of ``width``."""
    width = max(width, 1)
    size = max(width, first - first % width)
    start = 0
    while start < cap:
        n = min(size, cap - start)
        yield start, n
        start += n
        size = min(limit - limit % width or width, size * 2)


def _hash_block(lows: np.ndarray, seeds: np.ndarray, salt: int, m: int) -> np.ndarray:
    """Remapped hashes, shape (len(seeds), len(lows))."""
    x = lows[None, :] + (seeds.astype(np.uint64)[:, None] + np.uint64(salt))
    h = mix64_np(x)
    return ((h >> np.uint64(32)) * np.uint64(m)) >> np.uint64(32)


def _full_mask_int(m: int) -> int:
    return (1 << m) - 1


def _batched_evals(hit: int, per_seed: int, width: int) -> int:
    return (hit // width + 1) * width * per_seed


def bruteforce_np(lows, salt, cap, width):
    m = len(lows)
    full = np.uint64(_full_mask_int(m))
    evals = 0
    for start, count in _chunks(cap, width):
        seeds = np.arange(start, start + count, dtype=np.int64)
        v = _hash_block(lows, seeds, salt, m)
        bits = np.uint64(1) << v
        masks = np.bitwise_or.reduce(bits, axis=1)
        hits = np.flatnonzero(masks == full)
        if width > 1:
            if len(hits):
                return int(seeds[hits[0]]), _batched_evals(int(seeds[hits[0]]), m, width)
            continue
        # scalar: evaluations up to and including the first collision
        prefix = np.bitwise_or.accumulate(bits, axis=1)
        coll = np.zeros(bits.shape, dtype=bool)
        coll[:, 1:] = (prefix[:, :-1] & bits[:, 1:]) != 0
        first = np.where(coll.any(axis=1), coll.argmax(axis=1) + 1, m)
        if len(hits):
            h = int(hits[0])
            return int(seeds[h]), evals + int(first[: h + 1].sum())
        evals += int(first.sum())
    return -1, evals


def _ab_masks_np(v: np.ndarray, bbits: np.ndarray):
    bits = np.uint64(1) << v
    bsel = bbits.astype(bool)
    a = np.bitwise_or.reduce(np.where(bsel[None, :], np.uint64(0), bits), axis=1)
    b = np.bitwise_or.reduce(np.where(bsel[None, :], bits, np.uint64(0)), axis=1)
    return a, b


def _rot_np(m: int, r: int, x: np.ndarray) -> np.ndarray:
    if r == 0:
        return x
    mask = np.uint64(_full_mask_int(m))
    return ((x << np.uint64(r)) | (x >> np.uint64(m - r))) & mask


def rotation_np(lows, bbits, salt, cap, width, table=None, period=None):
    m = len(lows)
    full = np.uint64(_full_mask_int(m))
    width = max(width, 1)
    nbase = -(-cap // m)
    for start, count in _chunks(nbase, width):
        idx = np.arange(start, start + count, dtype=np.int64)
        a, b = _ab_masks_np(_hash_block(lows, idx * m, salt, m), bbits)
        if table is None:
            ok = np.stack([(a | _rot_np(m, r, b)) == full for r in range(m)], axis=1)
            rows = np.flatnonzero(ok.any(axis=1))
            if not len(rows):
                continue
            j = int(rows[0])
            r = int(ok[j].argmax())
        else:
            c = full ^ a
            r_all = (table[b].astype(np.int64) - table[c].astype(np.int64)) % m
            r_all = r_all % period[b].astype(np.int64)
            ru = r_all.astype(np.uint64)
            rotated = ((b << ru) | (b >> (np.uint64(m) - ru))) & full
            ok = (a | rotated) == full
            rows = np.flatnonzero(ok)
            if not len(rows):
                continue
            j = int(rows[0])
            r = int(r_all[j])
        base = int(idx[j])
        v = base * m + r
        if v >= cap:
            return -1, (nbase if width == 1 else -(-nbase // width) * width) * m
        return v, (base + 1) * m if width == 1 else _batched_evals(base, m, width)
    return -1, (nbase if width == 1 else -(-nbase // width) * width) * m


def splitting_np(lows, salt, unit, fanout, cap, width):
    s = len(lows)
    width = max(width, 1)
    target = np.full(fanout, unit, dtype=np.int64)
    target[-1] = s - unit * (fanout - 1)
    for start, count in _chunks(cap, width, first=max(64, (1 << 14) // max(s, 1))):
        seeds = np.arange(start, start + count, dtype=np.int64)
        parts = (_hash_block(lows, seeds, salt, s).astype(np.int64)) // unit
        if fanout == 2:
            ok = (parts == 0).sum(axis=1) == unit
        else:
            counts = (parts[:, :, None] == np.arange(fanout)[None, None, :]).sum(axis=1)
            ok = (counts == target[None, :]).all(axis=1)
        hits = np.flatnonzero(ok)
        if len(hits):
            seed = int(seeds[hits[0]])
            return seed, (seed + 1) * s if width == 1 else _batched_evals(seed, s, width)
    return -1, (cap if width == 1 else -(-cap // width) * width) * s


def reorder_split_np(lows, highs, seed, salt, unit):
    parts = (_hash_block(lows, np.array([seed]), salt, len(lows))[0].astype(np.int64)) // unit
    order = np.argsort(parts, kind="stable")
    lows[:] = lows[order]
    highs[:] = highs[order]
    return order


# -- public API --------------------------------------------------------------

@lru_cache(maxsize=None)
def normalize_rotation_lookup(m: int):
    """Cached, read-only tables for the lookup variant of rotation fitting.

    ``table[v]`` is the left-rotation count that makes ``v`` minimal among its
    rotations (smallest count on ties); ``period[v]`` is the smallest positive
    rotation mapping ``v`` onto itself.
    """
    if not 1 <= m <= MAX_LUT_LEAF:
        raise ValueError(f"lookup tables need 1 <= m <= {MAX_LUT_LEAF}")
    v = np.arange(1 << m, dtype=np.uint64)
    rots = np.stack([_rot_np(m, r, v) for r in range(m)])
    table = rots.argmin(axis=0).astype(np.int8)
    period = np.full(1 << m, m, dtype=np.int8)
    for p in range(m - 1, 0, -1):
        period[rots[p] == v] = p
    table.flags.writeable = False
    period.flags.writeable = False
    return table, period


def _prepare(keys, size_range=(1, 64)):
    arr = as_mhc_array(keys)
    m = len(arr)
    lo, hi = size_range
    if not lo <= m <= hi:
        raise ValueError(f"node size {m} outside [{lo}, {hi}]")
    return arr, np.ascontiguousarray(arr[:, 1]), np.ascontiguousarray(arr[:, 0] & np.uint64(1)).astype(np.uint8)


def _finish(value, evals, stats, kind, order=None) -> SeedResult:
    if value < 0:
        raise SeedCapExceeded(f"no valid seed below {SEED_CAP}; duplicate keys?")
    res = SeedResult(int(value), int(evals), order)
    if stats is not None:
        stats.record(kind, res)
    return res


def find_bijection_bruteforce(keys, batch_width: int = 1, salt: int = 0, backend=None,
                              stats: Optional[SearchStats] = None, cap: int = SEED_CAP) -> SeedResult:
    _, lows, _ = _prepare(keys)
    if resolve_backend(backend) == "numba":
        v, e = bruteforce_nb(lows, np.uint64(salt), cap, batch_width)
    else:
        v, e = bruteforce_np(lows, salt, cap, batch_width)
    return _finish(v, e, stats, "bruteforce")


def find_bijection_rotation(keys, batch_width: int = 1, salt: int = 0, backend=None,
                            stats: Optional[SearchStats] = None, cap: int = SEED_CAP) -> SeedResult:
    _, lows, bbits = _prepare(keys)
    if resolve_backend(backend) == "numba":
        v, e = rotation_nb(lows, bbits, np.uint64(salt), cap, batch_width)
    else:
        v, e = rotation_np(lows, bbits, salt, cap, batch_width)
    return _finish(v, e, stats, "rotation")


def find_bijection_rotation_lut(keys, table=None, batch_width: int = 1, salt: int = 0, backend=None,
                                stats: Optional[SearchStats] = None, cap: int = SEED_CAP) -> SeedResult:
    _, lows, bbits = _prepare(keys, (1, MAX_LUT_LEAF))
    m = len(lows)
    table, period = table if table is not None else normalize_rotation_lookup(m)
    if len(table) != 1 << m:
        raise ValueError("lookup table does not match the leaf size")
    if resolve_backend(backend) == "numba":
        v, e = rotation_lut_nb(lows, bbits, np.uint64(salt), cap, batch_width, table, period)
    else:
        v, e = rotation_np(lows, bbits, salt, cap, batch_width, table, period)
    return _finish(v, e, stats, "rotation")


def find_splitting(keys, split, batch_width: int = 1, salt: int = 0, backend=None,
                   stats: Optional[SearchStats] = None, cap: int = SEED_CAP) -> SeedResult:
    """Seed for a splitting node (any object with ``size``, ``fanout`` and ``unit``).

    When ``keys`` is an ``(s, 2)`` uint64 array it is reordered in place into
    part order; the applied permutation is returned in ``order`` either way.
    """
    arr = keys if isinstance(keys, np.ndarray) and keys.dtype == np.uint64 else as_mhc_array(keys)
    s, fanout, unit = len(arr), int(split.fanout), int(split.unit)
    if s < 2 or s != split.size:
        raise ValueError("key count must equal the split size and be >= 2")
    if fanout > 16:
        raise ValueError("fanout above 16 is not supported")
    lows = np.ascontiguousarray(arr[:, 1])
    if resolve_backend(backend) == "numba":
        v, e = splitting_nb(lows, np.uint64(salt), unit, fanout, cap, batch_width)
    else:
        v, e = splitting_np(lows, salt, unit, fanout, cap, batch_width)
    order = None
    if v >= 0:
        parts = (_hash_block(lows, np.array([v]), salt, s)[0].astype(np.int64)) // unit
        perm = np.argsort(parts, kind="stable")
        arr[:] = arr[perm]
        order = tuple(int(i) for i in perm)
    return _finish(v, e, stats, "splitting", order)
