"""Golomb-Rice coded seed storage, Elias-Fano monotone sequences, Rice parameters.

Seeds are stored in blocks, one block per bucket: the fixed (low) parts of all
values first, then their unary (high) parts.  A value is located by its fixed
bit offset plus its index within the block's unary run; the unary run is
walked with two local select queries.
"""

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._accel import njit
from .bits import (
    BitVector,
    BitWriter,
    read_bits_nb,
    read_bits_py,
    select_from_nb,
    select_from_py,
    select_sampled_nb,
)

MAX_TAU = 62
MAX_RICE_VALUE = 1 << 62


# -- Golomb-Rice -------------------------------------------------------------

@dataclass(frozen=True)
class GolombRiceSequence:
    bits: BitVector

    def decode(self, value_index: int, fixed_offset: int, tau: int, unary_start: int) -> int:
        return rice_decode_at(self, value_index, fixed_offset, tau, unary_start)


class GolombRiceWriter:
    def __init__(self):
        self._w = BitWriter()

    @property
    def length(self) -> int:
        return self._w.length

    def append_block(self, values, taus) -> int:
        """Write one block (fixed parts, then unary parts); return its start bit."""
        if len(values) != len(taus):
            raise ValueError("values and taus must have equal length")
        start = self._w.length
        for x, tau in zip(values, taus):
            x, tau = int(x), int(tau)
            if x < 0 or x >= MAX_RICE_VALUE:
                raise ValueError(f"value {x} outside [0, 2^62)")
            if not 0 <= tau <= MAX_TAU:
                raise ValueError(f"Rice parameter {tau} outside [0, {MAX_TAU}]")
            self._w.write(x & ((1 << tau) - 1), tau)
        for x, tau in zip(values, taus):
            self._w.write_unary(int(x) >> int(tau))
        return start

    def finish(self) -> GolombRiceSequence:
        return GolombRiceSequence(self._w.to_bitvector())


def rice_encode(values, taus) -> GolombRiceSequence:
    """Encode ``values`` with per-value parameters ``taus`` as a single block at bit 0."""
    w = GolombRiceWriter()
    w.append_block(values, taus)
    return w.finish()


def rice_code_length(x: int, tau: int) -> int:
    return tau + 1 + (x >> tau)


def rice_decode_at(seq: GolombRiceSequence, value_index: int, fixed_offset: int, tau: int,
                   unary_start: int) -> int:
    """Decode one value of a block.

    ``unary_start`` is where the block's unary run begins and ``value_index``
    the value's position within the block.
    """
    words = seq.bits.words
    end = select_from_py(words, unary_start, value_index + 1)
    if end < 0 or end >= seq.bits.length:
        raise IndexError(f"value index {value_index} beyond the encoded sequence")
    begin = unary_start if value_index == 0 else select_from_py(words, unary_start, value_index) + 1
    return ((end - begin) << tau) | read_bits_py(words, fixed_offset, tau)


def rice_decode_block(seq: GolombRiceSequence, taus, start: int = 0):
    """Decode every value of the block starting at ``start``."""
    unary_start = start + sum(int(t) for t in taus)
    out = []
    fixed = start
    for j, tau in enumerate(taus):
        out.append(rice_decode_at(seq, j, fixed, int(tau), unary_start))
        fixed += int(tau)
    return out


@njit(inline="always")
def rice_decode_nb(words, unary_start, value_index, fixed_offset, tau):
    end = select_from_nb(words, unary_start, value_index + 1)
    if value_index == 0:
        begin = unary_start
    else:
        begin = select_from_nb(words, unary_start, value_index) + 1
    return (np.uint64(end - begin) << np.uint64(tau)) | read_bits_nb(words, fixed_offset, tau)


def optimal_rice_parameter(p: float) -> int:
    """Rice parameter minimising the expected code length of a geometric trial count.

    The count of failures before the first success with probability ``p`` has
    expected code length ``tau + 1 + y / (1 - y)`` with ``y = (1-p)^(2^tau)``.
    """
    if not (0.0 < p <= 1.0) or math.isnan(p):
        raise ValueError(f"success probability must be in (0, 1], got {p}")
    return _optimal_rice_parameter(float(p))


@lru_cache(maxsize=None)
def _optimal_rice_parameter(p: float) -> int:
    if p == 1.0:
        return 0
    log_q = math.log1p(-p)
    best_tau, best_len = 0, math.inf
    for tau in range(MAX_TAU + 1):
        e = (2.0**tau) * log_q
        one_minus_y = -math.expm1(e)
        y = math.exp(e)
        length = tau + 1 + y / one_minus_y
        if length < best_len:
            best_tau, best_len = tau, length
    return best_tau


def expected_rice_length(p: float, tau: int) -> float:
    if p == 1.0:
        return tau + 1.0
    e = (2.0**tau) * math.log1p(-p)
    return tau + 1 + math.exp(e) / -math.expm1(e)


# -- Elias-Fano --------------------------------------------------------------

@dataclass(frozen=True)
class EliasFanoSequence:
    lower: BitVector
    upper: BitVector
    universe: int
    count: int
    low_width: int

    def __len__(self):
        return self.count

    def __getitem__(self, i: int) -> int:
        return ef_access(self, i)

    def to_array(self) -> np.ndarray:
        return ef_decode_all(self)

    def size_in_bits(self) -> int:
        """Payload bits plus the select samples of the upper half."""
        return self.lower.length + self.upper.size_in_bits(with_index=True)

    def serialize(self) -> bytes:
        head = struct.pack("<QQB", self.count, self.universe, self.low_width)
        return head + self.lower.serialize() + self.upper.serialize()

    @classmethod
    def deserialize(cls, buf, offset: int = 0):
        if offset + 17 > len(buf):
            raise ValueError("truncated Elias-Fano header")
        count, universe, low_width = struct.unpack_from("<QQB", buf, offset)
        lower, offset = BitVector.deserialize(buf, offset + 17)
        upper, offset = BitVector.deserialize(buf, offset)
        if low_width != _low_width(universe, count):
            raise ValueError("Elias-Fano low width inconsistent with header")
        if lower.length != count * low_width:
            raise ValueError("Elias-Fano lower-bits length mismatch")
        if upper.length != ((universe >> low_width) + count if count else 0):
            raise ValueError("Elias-Fano upper-bits length mismatch")
        if upper.ones != count:
            raise ValueError("Elias-Fano upper bits hold the wrong number of ones")
        return cls(lower, upper, universe, count, low_width), offset


def _low_width(universe: int, count: int) -> int:
    if count == 0 or universe < count:
        return 0
    return (universe // count).bit_length() - 1


def ef_build(values, universe: int) -> EliasFanoSequence:
    vals = np.asarray(values, dtype=np.int64)
    k = len(vals)
    if k and (vals[0] < 0 or np.any(np.diff(vals) < 0)):
        raise ValueError("Elias-Fano input must be non-negative and non-decreasing")
    if k and vals[-1] > universe:
        raise ValueError(f"value {int(vals[-1])} exceeds universe {universe}")
    L = _low_width(universe, k)
    u = vals.astype(np.uint64)
    lower_words = np.zeros((k * L + 63) // 64, dtype=np.uint64)
    if L:
        _pack_fixed(lower_words, u & np.uint64((1 << L) - 1), L)
    upper_len = (universe >> L) + k if k else 0
    upper_words = np.zeros((upper_len + 63) // 64, dtype=np.uint64)
    pos = (u >> np.uint64(L)) + np.arange(k, dtype=np.uint64)
    np.bitwise_or.at(upper_words, (pos >> np.uint64(6)).astype(np.int64),
                     np.uint64(1) << (pos & np.uint64(63)))
    ef = EliasFanoSequence(BitVector(lower_words, k * L), BitVector(upper_words, upper_len),
                           int(universe), k, L)
    clog = max(0, math.ceil(math.log2((universe + 1) / k))) if k else 0
    assert ef.lower.length + ef.upper.length <= k * (2 + clog)
    return ef


def _pack_fixed(words: np.ndarray, vals: np.ndarray, width: int):
    starts = np.arange(len(vals), dtype=np.uint64) * np.uint64(width)
    wi = (starts >> np.uint64(6)).astype(np.int64)
    off = starts & np.uint64(63)
    np.bitwise_or.at(words, wi, vals << off)
    spill = (off + np.uint64(width)) > np.uint64(64)
    if np.any(spill):
        np.bitwise_or.at(words, wi[spill] + 1, vals[spill] >> (np.uint64(64) - off[spill]))


def ef_access(seq: EliasFanoSequence, i: int) -> int:
    if not 0 <= i < seq.count:
        raise IndexError(f"index {i} outside [0, {seq.count})")
    high = seq.upper.select1(i + 1) - i
    return (high << seq.low_width) | read_bits_py(seq.lower.words, i * seq.low_width, seq.low_width)


def ef_decode_all(seq: EliasFanoSequence) -> np.ndarray:
    if seq.count == 0:
        return np.zeros(0, dtype=np.int64)
    bits = np.unpackbits(seq.upper.words.astype("<u8").view(np.uint8), bitorder="little")
    ones = np.flatnonzero(bits[: seq.upper.length]).astype(np.int64)
    high = ones - np.arange(seq.count, dtype=np.int64)
    L = seq.low_width
    if L == 0:
        return high
    lbits = np.unpackbits(seq.lower.words.astype("<u8").view(np.uint8), bitorder="little")
    lbits = lbits[: seq.count * L].reshape(seq.count, L).astype(np.int64)
    low = (lbits << np.arange(L, dtype=np.int64)).sum(axis=1)
    return (high << L) | low


@njit(inline="always")
def ef_access_nb(lower_words, low_width, upper_words, upper_samples, i):
    high = select_sampled_nb(upper_words, upper_samples, i + 1) - i
    return (high << low_width) | np.int64(read_bits_nb(lower_words, i * low_width, low_width))


# -- bucket index ------------------------------------------------------------

_FP = 20  # fixed-point bits of the bits-per-key slope


def _scaled(cum, slope):
    """``floor(cum * slope / 2^20)`` without overflowing int64."""
    cum = np.asarray(cum, dtype=np.int64)
    return (cum >> _FP) * slope + (((cum & ((1 << _FP) - 1)) * slope) >> _FP)


@dataclass(frozen=True)
class DoubleEliasFano:
    """Bucket prefix sums and bucket bit offsets in two Elias-Fano sequences.

    Both sequences are flattened before encoding: key prefix sums lose
    ``i * min_keys`` and bit offsets lose the expected position
    ``cum * slope`` plus ``i * min_bits``, where the minima are the smallest
    per-bucket deltas.  The remainders stay non-decreasing and span a much
    smaller universe.
    """

    keys: EliasFanoSequence
    bits: EliasFanoSequence
    slope: int     # bits per key, fixed point with 20 fractional bits
    min_keys: int
    min_bits: int

    def __len__(self):
        return len(self.keys)

    @classmethod
    def build(cls, cum_keys, positions) -> "DoubleEliasFano":
        cum = np.asarray(cum_keys, dtype=np.int64)
        pos = np.asarray(positions, dtype=np.int64)
        if len(cum) != len(pos) or len(cum) < 2 or cum[0] != 0 or pos[0] != 0:
            raise ValueError("need equal-length sequences starting at 0")
        slope = (int(pos[-1]) << _FP) // int(cum[-1]) if cum[-1] else 0
        i = np.arange(len(cum), dtype=np.int64)
        min_keys = int(np.diff(cum).min())
        dev = pos - _scaled(cum, slope)
        min_bits = int(np.diff(dev).min())
        k = cum - i * min_keys
        b = dev - i * min_bits
        return cls(ef_build(k, int(k[-1])), ef_build(b, int(b[-1])), slope, min_keys, min_bits)

    def cum_keys(self) -> np.ndarray:
        i = np.arange(len(self), dtype=np.int64)
        return self.keys.to_array() + i * self.min_keys

    def positions(self) -> np.ndarray:
        i = np.arange(len(self), dtype=np.int64)
        return self.bits.to_array() + i * self.min_bits + _scaled(self.cum_keys(), self.slope)

    def get(self, i: int):
        cum = self.keys[i] + i * self.min_keys
        return cum, self.bits[i] + i * self.min_bits + int(_scaled(cum, self.slope))

    def size_in_bits(self) -> int:
        """Both sequences with their select samples; the three fixed parameters count as header."""
        return self.keys.size_in_bits() + self.bits.size_in_bits()

    def serialize(self) -> bytes:
        return (struct.pack("<Qqq", self.slope, self.min_keys, self.min_bits)
                + self.keys.serialize() + self.bits.serialize())

    @classmethod
    def deserialize(cls, buf, offset: int = 0):
        if offset + 24 > len(buf):
            raise ValueError("truncated bucket index header")
        slope, min_keys, min_bits = struct.unpack_from("<Qqq", buf, offset)
        keys, offset = EliasFanoSequence.deserialize(buf, offset + 24)
        bits, offset = EliasFanoSequence.deserialize(buf, offset)
        if len(keys) != len(bits) or len(keys) < 2:
            raise ValueError("bucket index sequences disagree in length")
        if slope >= 1 << 40 or min_keys < 0:
            raise ValueError("bucket index parameters out of range")
        return cls(keys, bits, slope, min_keys, min_bits), offset


@njit(inline="always")
def scaled_nb(cum, slope):
    return (cum >> 20) * slope + (((cum & 0xFFFFF) * slope) >> 20)
