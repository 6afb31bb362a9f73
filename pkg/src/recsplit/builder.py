"""Construction: bucket partition, per-bucket tree search, assembly.

Each thread owns a contiguous range of buckets and writes a local seed
stream.  A bucket's block is self-contained (its fixed parts, then its unary
parts), so concatenating the local streams in bucket order gives the same
bytes for any thread count or batch width.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import numpy as np

from ._accel import njit, resolve_backend
from .bits import BitVector
from .codes import DoubleEliasFano, GolombRiceSequence, GolombRiceWriter
from .hashing import (
    LEAF_SALT,
    SPLIT_SALTS,
    as_mhc_array,
    bucket_of_np,
    master_hash_many,
    num_buckets_for,
)
from .mphf import RecSplitMphf
from .search import (
    MAX_LUT_LEAF,
    SEED_CAP,
    SeedCapExceeded,
    bruteforce_nb,
    bruteforce_np,
    normalize_rotation_lookup,
    reorder_split_nb,
    reorder_split_np,
    rotation_lut_nb,
    rotation_nb,
    rotation_np,
    splitting_nb,
    splitting_np,
)
from .tree import shape_for, tree_layout, upper_left_size

log = logging.getLogger(__name__)

MODE_BRUTEFORCE, MODE_ROTATION, MODE_ROTATION_LUT = 0, 1, 2


class DuplicateKeyError(ValueError):
    pass


@dataclass(frozen=True)
class MphfConfig:
    leaf_size: int = 8
    bucket_size: int = 100
    rotation_fitting: bool = False
    batch_width: int = 1
    global_seed: int = 0
    use_lut: bool = False

    def __post_init__(self):
        shape_for(self.leaf_size)
        if not 1 <= self.bucket_size < 2**32:
            raise ValueError("bucket size must be in [1, 2^32)")
        if self.batch_width < 1:
            raise ValueError("batch width must be >= 1")
        if self.use_lut and not self.rotation_fitting:
            raise ValueError("the lookup-table variant needs rotation fitting")
        if self.use_lut and self.leaf_size > MAX_LUT_LEAF:
            raise ValueError(f"lookup tables support leaf sizes up to {MAX_LUT_LEAF}")

    @property
    def mode(self) -> int:
        if not self.rotation_fitting:
            return MODE_BRUTEFORCE
        return MODE_ROTATION_LUT if self.use_lut else MODE_ROTATION


@dataclass
class BucketedKeys:
    mhcs: np.ndarray    # (n, 2) uint64 sorted by (high, low), hence by bucket
    bounds: np.ndarray  # num_buckets + 1 offsets

    @property
    def num_buckets(self) -> int:
        return len(self.bounds) - 1

    def sizes(self) -> np.ndarray:
        return np.diff(self.bounds)


@dataclass
class LocalOutput:
    words: np.ndarray
    nbits: int
    offsets: np.ndarray  # bit offset of each bucket in the range, local to ``words``
    evaluations: int


def partition(keys, num_buckets: int, thread_count: int = 1) -> BucketedKeys:
    """Sort MHCs by (high, low) and cut at bucket borders.

    The bucket index is monotone in the high word, so one sort groups buckets
    and pins the order inside them.  ``thread_count`` does not change the
    result; numpy's sort is used as is.
    """
    mhcs = as_mhc_array(keys)
    order = np.lexsort((mhcs[:, 1], mhcs[:, 0]))
    sorted_ = np.ascontiguousarray(mhcs[order])
    if len(sorted_) > 1:
        same = (sorted_[1:, 0] == sorted_[:-1, 0]) & (sorted_[1:, 1] == sorted_[:-1, 1])
        if same.any():
            raise DuplicateKeyError(f"{int(same.sum())} duplicate master hash codes")
    buckets = bucket_of_np(sorted_, num_buckets)
    bounds = np.searchsorted(buckets, np.arange(num_buckets + 1), side="left").astype(np.int64)
    return BucketedKeys(sorted_, bounds)


# -- numba path --------------------------------------------------------------

@njit(inline="always")
def _split_params(s, ell, u1, u2):
    if s > u2:
        unit = min(s - 1, ((s + 2 * u2 - 1) // (2 * u2)) * u2)
        return unit, 2
    unit = ell if s <= u1 else u1
    return unit, (s + unit - 1) // unit


@njit(nogil=True)
def _ensure(words, nbits_needed):
    need = (nbits_needed + 63) // 64 + 1
    if need <= words.shape[0]:
        return words
    grown = np.zeros(max(need, 2 * words.shape[0]), dtype=np.uint64)
    grown[: words.shape[0]] = words
    return grown


@njit(nogil=True)
def build_range_nb(highs, lows, bounds, b_lo, b_hi, ell, u1, u2, leaf_tau, split_tau, node_count,
                   split_salts, leaf_salt, mode, width, table, period, cap):
    """Search and encode buckets ``[b_lo, b_hi)``.

    Returns ``(words, nbits, offsets, evaluations, status)``; status -1 means a
    node hit the seed cap.
    """
    nb = b_hi - b_lo
    offsets = np.zeros(nb, dtype=np.int64)
    words = np.zeros(1024, dtype=np.uint64)
    nbits = 0
    evals = 0
    max_size = 0
    for bk in range(b_lo, b_hi):
        max_size = max(max_size, bounds[bk + 1] - bounds[bk])
    max_nodes = node_count[max(max_size, 1)]
    values = np.empty(max_nodes, dtype=np.int64)
    taus = np.empty(max_nodes, dtype=np.int64)
    st_start = np.empty(1024, dtype=np.int64)
    st_size = np.empty(1024, dtype=np.int64)
    st_depth = np.empty(1024, dtype=np.int64)
    bbits = np.empty(ell, dtype=np.uint8)
    for bk in range(b_lo, b_hi):
        offsets[bk - b_lo] = nbits
        size = bounds[bk + 1] - bounds[bk]
        if size == 0:
            continue
        sp = 0
        st_start[0] = bounds[bk]
        st_size[0] = size
        st_depth[0] = 0
        sp = 1
        nv = 0
        while sp > 0:
            sp -= 1
            st = st_start[sp]
            s = st_size[sp]
            d = st_depth[sp]
            seg_lo = lows[st: st + s]
            if s == 1:
                continue
            if s <= ell:
                if mode == 0:
                    v, e = bruteforce_nb(seg_lo, leaf_salt, cap, width)
                else:
                    for k in range(s):
                        bbits[k] = np.uint8(highs[st + k] & np.uint64(1))
                    if mode == 1:
                        v, e = rotation_nb(seg_lo, bbits[:s], leaf_salt, cap, width)
                    else:
                        v, e = rotation_lut_nb(seg_lo, bbits[:s], leaf_salt, cap, width,
                                               table, period)
                tau = leaf_tau[s]
            else:
                unit, fanout = _split_params(s, ell, u1, u2)
                salt = split_salts[d]
                v, e = splitting_nb(seg_lo, salt, unit, fanout, cap, width)
                if v >= 0:
                    reorder_split_nb(seg_lo, highs[st: st + s], v, salt, unit, fanout)
                    # children pushed in reverse so the leftmost is searched first
                    for c in range(fanout - 1, -1, -1):
                        st_start[sp] = st + c * unit
                        st_size[sp] = unit if c < fanout - 1 else s - unit * (fanout - 1)
                        st_depth[sp] = d + 1
                        sp += 1
                tau = split_tau[s]
            evals += e
            if v < 0:
                return words, nbits, offsets, evals, -1
            values[nv] = v
            taus[nv] = tau
            nv += 1
        # encode: fixed parts, then unary parts
        need = nbits + nv
        for j in range(nv):
            need += taus[j] + (values[j] >> taus[j])
        words = _ensure(words, need)
        for j in range(nv):
            t = taus[j]
            if t:
                val = np.uint64(values[j]) & ((np.uint64(1) << np.uint64(t)) - np.uint64(1))
                w = nbits >> 6
                off = nbits & 63
                words[w] |= val << np.uint64(off)
                if off + t > 64:
                    words[w + 1] |= val >> np.uint64(64 - off)
                nbits += t
        for j in range(nv):
            nbits += values[j] >> taus[j]
            words[nbits >> 6] |= np.uint64(1) << np.uint64(nbits & 63)
            nbits += 1
    return words[: (nbits + 63) // 64].copy(), nbits, offsets, evals, 0


# -- numpy path --------------------------------------------------------------

def _build_range_np(bk: BucketedKeys, b_lo: int, b_hi: int, layout, config: MphfConfig, lut):
    shape = layout.shape
    ell, u1, u2 = shape.leaf_size, shape.unit_lower1, shape.unit_lower2
    width = config.batch_width
    mode = config.mode
    highs, lows = bk.mhcs[:, 0], bk.mhcs[:, 1]
    leaf_salt = LEAF_SALT
    w = GolombRiceWriter()
    offsets = np.zeros(b_hi - b_lo, dtype=np.int64)
    evals = 0
    for b in range(b_lo, b_hi):
        offsets[b - b_lo] = w.length
        start, end = int(bk.bounds[b]), int(bk.bounds[b + 1])
        if end == start:
            continue
        values, taus = [], []
        stack = [(start, end - start, 0)]
        while stack:
            st, s, d = stack.pop()
            seg_lo = lows[st: st + s]
            if s == 1:
                continue
            if s <= ell:
                if mode == MODE_BRUTEFORCE:
                    v, e = bruteforce_np(seg_lo, leaf_salt, SEED_CAP, width)
                else:
                    bb = (highs[st: st + s] & np.uint64(1)).astype(np.uint8)
                    t, p = lut if mode == MODE_ROTATION_LUT else (None, None)
                    v, e = rotation_np(seg_lo, bb, leaf_salt, SEED_CAP, width, t, p)
                tau = int(layout.leaf_tau[s])
            else:
                if s > u2:
                    unit, fanout = upper_left_size(s, u2), 2
                else:
                    unit = ell if s <= u1 else u1
                    fanout = -(-s // unit)
                salt = int(SPLIT_SALTS[d])
                v, e = splitting_np(seg_lo, salt, unit, fanout, SEED_CAP, width)
                if v >= 0:
                    seg = bk.mhcs[st: st + s]
                    lo, hi = seg[:, 1].copy(), seg[:, 0].copy()
                    reorder_split_np(lo, hi, v, salt, unit)
                    seg[:, 1], seg[:, 0] = lo, hi
                    for c in range(fanout - 1, -1, -1):
                        stack.append((st + c * unit, unit if c < fanout - 1 else s - unit * (fanout - 1), d + 1))
                tau = int(layout.split_tau[s])
            evals += e
            if v < 0:
                raise SeedCapExceeded(f"bucket {b}: no seed below {SEED_CAP}; duplicate keys?")
            values.append(int(v))
            taus.append(tau)
        w.append_block(values, taus)
    seq = w.finish()
    return LocalOutput(seq.bits.words, seq.bits.length, offsets, evals)


# -- assembly ----------------------------------------------------------------

def concat_bits(parts) -> np.ndarray:
    """Concatenate ``(words, nbits)`` pieces into one word array."""
    total = sum(nbits for _, nbits in parts)
    out = np.zeros((total + 63) // 64 + 1, dtype=np.uint64)
    pos = 0
    for words, nbits in parts:
        if nbits == 0:
            continue
        src = words[: (nbits + 63) // 64]
        w0, off = pos >> 6, pos & 63
        if off == 0:
            out[w0: w0 + len(src)] |= src
        else:
            out[w0: w0 + len(src)] |= src << np.uint64(off)
            out[w0 + 1: w0 + 1 + len(src)] |= src >> np.uint64(64 - off)
        pos += nbits
    return out[: (total + 63) // 64], total


def _thread_ranges(num_buckets: int, threads: int):
    threads = max(1, min(threads, num_buckets))
    cuts = [num_buckets * t // threads for t in range(threads + 1)]
    return [(cuts[t], cuts[t + 1]) for t in range(threads) if cuts[t] < cuts[t + 1]]


def _to_mhcs(keys, global_seed: int) -> np.ndarray:
    if isinstance(keys, np.ndarray) and keys.ndim == 2:
        return as_mhc_array(keys)
    keys = list(keys)
    if keys and isinstance(keys[0], (bytes, bytearray, memoryview, str)):
        return master_hash_many((k.encode() if isinstance(k, str) else bytes(k) for k in keys),
                                global_seed)
    return as_mhc_array(keys)


def build(keys, config: MphfConfig = MphfConfig(), thread_count: int = 1, backend=None) -> RecSplitMphf:
    """Build an MPHF from byte-string keys or from an ``(n, 2)`` array of MHCs."""
    mhcs = _to_mhcs(keys, config.global_seed)
    n = len(mhcs)
    if n == 0:
        raise ValueError("cannot build an MPHF over an empty key set")
    backend = resolve_backend(backend)
    num_buckets = num_buckets_for(n, config.bucket_size)
    bk = partition(mhcs, num_buckets, thread_count)
    sizes = bk.sizes()
    layout = tree_layout(config.leaf_size, max(1, int(sizes.max())), config.rotation_fitting)
    lut = normalize_rotation_lookup(config.leaf_size) if config.mode == MODE_ROTATION_LUT else None
    ranges = _thread_ranges(num_buckets, thread_count)

    if backend == "numba":
        shape = layout.shape
        table, period = lut if lut is not None else (np.zeros(1, np.int8), np.ones(1, np.int8))
        highs = np.ascontiguousarray(bk.mhcs[:, 0])
        lows = np.ascontiguousarray(bk.mhcs[:, 1])

        def run(r):
            words, nbits, offsets, evals, status = build_range_nb(
                highs, lows, bk.bounds, r[0], r[1], shape.leaf_size, shape.unit_lower1,
                shape.unit_lower2, layout.leaf_tau, layout.split_tau, layout.node_count,
                SPLIT_SALTS, np.uint64(LEAF_SALT), config.mode, config.batch_width, table, period,
                SEED_CAP)
            if status < 0:
                raise SeedCapExceeded(f"no seed below {SEED_CAP} in buckets {r}; duplicate keys?")
            return LocalOutput(words, int(nbits), offsets, int(evals))
    else:
        def run(r):
            return _build_range_np(bk, r[0], r[1], layout, config, lut)

    if len(ranges) == 1:
        outputs = [run(ranges[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            outputs = list(pool.map(run, ranges))

    words, total = concat_bits([(o.words, o.nbits) for o in outputs])
    offsets = np.empty(num_buckets + 1, dtype=np.int64)
    pos = 0
    for (lo, hi), o in zip(ranges, outputs):
        offsets[lo:hi] = o.offsets + pos
        pos += o.nbits
    offsets[num_buckets] = total
    mphf = RecSplitMphf(
        config.leaf_size, config.bucket_size, config.rotation_fitting, config.global_seed, n,
        DoubleEliasFano.build(bk.bounds, offsets), GolombRiceSequence(BitVector(words, total)),
        used_lut=config.use_lut,
    )
    mphf.build_stats = {"hash_evaluations": sum(o.evaluations for o in outputs),
                        "threads": len(ranges), "backend": backend}
    log.debug("built n=%d buckets=%d bits/key=%.4f", n, num_buckets, mphf.bits_per_key())
    return mphf
