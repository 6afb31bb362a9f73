"""The queryable minimal perfect hash function and its file format.

Layout (all integers little-endian)::

    magic "RSRF" | version u8 | flags u8 | leaf_size u8 | pad u8
    bucket_size u32 | global_seed u64 | n u64
    bucket index (two flattened Elias-Fano sequences) | BitVector(seed stream)
    crc32 u32 over everything before it
"""

import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._accel import njit, resolve_backend
from .bits import BitVector, read_bits_py, select_from_py
from .codes import DoubleEliasFano, GolombRiceSequence, ef_access_nb, rice_decode_nb, scaled_nb
from .hashing import (
    LEAF_SALT,
    SPLIT_SALTS,
    as_mhc_array,
    master_hash,
    master_hash_many,
    mix64,
    mix64_nb,
    num_buckets_for,
    remap,
    remap_nb,
)
from .tree import TreeLayout, shape_for, tree_layout, upper_left_size

MAGIC = b"RSRF"
VERSION = 1
FLAG_ROTATION = 1
FLAG_LUT = 2

_HEAD = struct.Struct("<4sBBBBIQQ")


class FormatError(ValueError):
    """Corrupt, truncated or mismatched serialized MPHF."""


@dataclass
class RecSplitMphf:
    leaf_size: int
    bucket_size: int
    rotation_fitting: bool
    global_seed: int
    n: int
    index: DoubleEliasFano  # num_buckets + 1 (prefix, bit offset) pairs; last is (n, stream length)
    seeds: GolombRiceSequence
    used_lut: bool = False
    build_stats: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        self.num_buckets = num_buckets_for(self.n, self.bucket_size)
        if len(self.index) != self.num_buckets + 1:
            raise FormatError("index length does not match the bucket count")
        prefix = self.index.cum_keys()
        offsets = self.index.positions()
        if prefix[0] != 0 or prefix[-1] != self.n or offsets[0] != 0 or offsets[-1] != self.seeds.bits.length:
            raise FormatError("index endpoints inconsistent with n / stream length")
        sizes = np.diff(prefix)
        if np.any(sizes < 0):
            raise FormatError("bucket prefix sums are not monotone")
        self.max_bucket_size = int(sizes.max()) if len(sizes) else 0
        self.layout: TreeLayout = tree_layout(self.leaf_size, max(1, self.max_bucket_size),
                                              self.rotation_fitting)
        # every bucket must span at least its fixed parts plus one stop bit per value
        need = self.layout.fixed_bits[sizes] + self.layout.node_count[sizes]
        if np.any(np.diff(offsets) < need):
            raise FormatError("bucket bit spans shorter than the tree layout requires")
        self._prefix_arr = prefix
        self._offsets_arr = offsets

    # -- queries -------------------------------------------------------------

    def query(self, key_bytes: bytes) -> int:
        return self.query_mhc(master_hash(key_bytes, self.global_seed))

    def query_mhc(self, mhc) -> int:
        high, low = int(mhc[0]), int(mhc[1])
        bucket = remap(high, self.num_buckets)
        base = int(self._prefix_arr[bucket])
        size = int(self._prefix_arr[bucket + 1]) - base
        if size == 0:
            return min(base, self.n - 1)
        return base + _walk_py(self, high, low, size, int(self._offsets_arr[bucket]))

    def query_many(self, keys, backend=None) -> np.ndarray:
        """Vectorised query; ``keys`` are byte strings or an ``(n, 2)`` MHC array."""
        if isinstance(keys, np.ndarray) and keys.ndim == 2:
            mhcs = as_mhc_array(keys)
        else:
            mhcs = master_hash_many(keys, self.global_seed)
        if resolve_backend(backend) == "numpy":
            return np.array([self.query_mhc(row) for row in mhcs], dtype=np.int64)
        out = np.empty(len(mhcs), dtype=np.int64)
        L = self.layout
        ix = self.index
        bp, bo = ix.keys, ix.bits
        _query_many_nb(
            np.ascontiguousarray(mhcs[:, 0]), np.ascontiguousarray(mhcs[:, 1]), self.num_buckets, self.n,
            bp.lower.words, bp.low_width, bp.upper.words, bp.upper.select_samples,
            bo.lower.words, bo.low_width, bo.upper.words, bo.upper.select_samples,
            ix.slope, ix.min_keys, ix.min_bits,
            self.seeds.bits.words, self.leaf_size, L.shape.unit_lower1, L.shape.unit_lower2,
            L.leaf_tau, L.split_tau, L.node_count, L.fixed_bits, SPLIT_SALTS, np.uint64(LEAF_SALT),
            self.rotation_fitting, out,
        )
        return out

    __call__ = query

    # -- space ---------------------------------------------------------------

    def size_in_bits(self) -> int:
        """Seed stream plus the bucket index (with select samples); no file header."""
        return self.seeds.bits.length + self.index.size_in_bits()

    def bits_per_key(self) -> float:
        return self.size_in_bits() / self.n

    def space_breakdown(self) -> dict:
        return {
            "seeds": self.seeds.bits.length,
            "bucket_prefix": self.index.keys.size_in_bits(),
            "bucket_offsets": self.index.bits.size_in_bits(),
        }

    # -- serialization -------------------------------------------------------

    def serialize(self) -> bytes:
        flags = (FLAG_ROTATION if self.rotation_fitting else 0) | (FLAG_LUT if self.used_lut else 0)
        body = b"".join([
            _HEAD.pack(MAGIC, VERSION, flags, self.leaf_size, 0, self.bucket_size,
                       self.global_seed & (2**64 - 1), self.n),
            self.index.serialize(),
            self.seeds.bits.serialize(),
        ])
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def deserialize(cls, buf, expect_leaf_size: Optional[int] = None,
                    expect_bucket_size: Optional[int] = None) -> "RecSplitMphf":
        buf = bytes(buf)
        if len(buf) < _HEAD.size + 4:
            raise FormatError("truncated header")
        (crc,) = struct.unpack_from("<I", buf, len(buf) - 4)
        if zlib.crc32(buf[:-4]) != crc:
            raise FormatError("checksum mismatch (corrupt or truncated file)")
        magic, version, flags, leaf, _, bucket, seed, n = _HEAD.unpack_from(buf, 0)
        if magic != MAGIC:
            raise FormatError("bad magic")
        if version != VERSION:
            raise FormatError(f"unsupported format version {version}")
        if flags & ~(FLAG_ROTATION | FLAG_LUT):
            raise FormatError("unknown flag bits")
        if expect_leaf_size is not None and leaf != expect_leaf_size:
            raise FormatError(f"leaf size {leaf} in file, expected {expect_leaf_size}")
        if expect_bucket_size is not None and bucket != expect_bucket_size:
            raise FormatError(f"bucket size {bucket} in file, expected {expect_bucket_size}")
        if n < 1 or bucket < 1:
            raise FormatError("empty key set or zero bucket size")
        try:
            shape_for(leaf)
            index, off = DoubleEliasFano.deserialize(buf, _HEAD.size)
            bits, off = BitVector.deserialize(buf, off)
        except ValueError as e:
            raise FormatError(str(e)) from e
        if off != len(buf) - 4:
            raise FormatError("trailing bytes after the seed stream")
        return cls(leaf, bucket, bool(flags & FLAG_ROTATION), seed, n, index,
                   GolombRiceSequence(bits), bool(flags & FLAG_LUT))

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.serialize())

    @classmethod
    def load(cls, path, **expect) -> "RecSplitMphf":
        with open(path, "rb") as f:
            return cls.deserialize(f.read(), **expect)


def _decode_py(words, unary_start, index, fixed_pos, tau):
    end = select_from_py(words, unary_start, index + 1)
    begin = unary_start if index == 0 else select_from_py(words, unary_start, index) + 1
    return ((end - begin) << tau) | read_bits_py(words, fixed_pos, tau)


def _walk_py(f: RecSplitMphf, high: int, low: int, size: int, start: int) -> int:
    """Descend one bucket's tree; returns the rank inside the bucket."""
    L = f.layout
    ell, u1, u2 = f.leaf_size, L.shape.unit_lower1, L.shape.unit_lower2
    words = f.seeds.bits.words
    unary_start = start + int(L.fixed_bits[size])
    index, fixed_pos, acc, depth, s = 0, start, 0, 0, size
    while s > ell:
        tau = int(L.split_tau[s])
        v = _decode_py(words, unary_start, index, fixed_pos, tau)
        h = mix64(low + v + int(SPLIT_SALTS[depth]))
        if s > u2:
            unit, fanout = upper_left_size(s, u2), 2
        else:
            unit = ell if s <= u1 else u1
            fanout = -(-s // unit)
        p = remap(h, s) // unit
        index += 1 + p * int(L.node_count[unit])
        fixed_pos += tau + p * int(L.fixed_bits[unit])
        acc += p * unit
        s = unit if p < fanout - 1 else s - unit * (fanout - 1)
        depth += 1
    if s == 1:
        return acc
    v = _decode_py(words, unary_start, index, fixed_pos, int(L.leaf_tau[s]))
    if f.rotation_fitting:
        r = v % s
        x = remap(mix64(low + (v - r) + LEAF_SALT), s)
        if high & 1:
            x = (x + r) % s
    else:
        x = remap(mix64(low + v + LEAF_SALT), s)
    return acc + x


@njit(nogil=True)
def _query_many_nb(highs, lows, num_buckets, n,
                   p_lower, p_width, p_upper, p_samples,
                   o_lower, o_width, o_upper, o_samples, slope, min_keys, min_bits,
                   words, ell, u1, u2, leaf_tau, split_tau, node_count, fixed_bits,
                   split_salts, leaf_salt, rotation, out):
    nbk = np.uint64(num_buckets)
    for i in range(highs.shape[0]):
        high = highs[i]
        low = lows[i]
        bucket = np.int64(remap_nb(high, nbk))
        base = ef_access_nb(p_lower, p_width, p_upper, p_samples, bucket) + bucket * min_keys
        size = ef_access_nb(p_lower, p_width, p_upper, p_samples, bucket + 1) + (bucket + 1) * min_keys - base
        if size == 0:
            out[i] = min(base, n - 1)
            continue
        start = (ef_access_nb(o_lower, o_width, o_upper, o_samples, bucket) + bucket * min_bits
                 + scaled_nb(base, slope))
        unary_start = start + fixed_bits[size]
        index = 0
        fixed_pos = start
        acc = 0
        depth = 0
        s = size
        while s > ell:
            tau = split_tau[s]
            v = rice_decode_nb(words, unary_start, index, fixed_pos, tau)
            h = mix64_nb(low + v + split_salts[depth])
            if s > u2:
                unit = min(s - 1, ((s + 2 * u2 - 1) // (2 * u2)) * u2)
                fanout = 2
            else:
                unit = ell if s <= u1 else u1
                fanout = (s + unit - 1) // unit
            p = np.int64(remap_nb(h, np.uint64(s))) // unit
            index += 1 + p * node_count[unit]
            fixed_pos += tau + p * fixed_bits[unit]
            acc += p * unit
            s = unit if p < fanout - 1 else s - unit * (fanout - 1)
            depth += 1
        if s == 1:
            out[i] = base + acc
            continue
        v = rice_decode_nb(words, unary_start, index, fixed_pos, leaf_tau[s])
        us = np.uint64(s)
        if rotation:
            r = v % us
            x = remap_nb(mix64_nb(low + (v - r) + leaf_salt), us)
            if high & np.uint64(1):
                x = (x + r) % us
        else:
            x = remap_nb(mix64_nb(low + v + leaf_salt), us)
        out[i] = base + acc + np.int64(x)
