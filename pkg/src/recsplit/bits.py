"""Bit-vector substrate: packed bits, rank/select, popcount and k-bit rotation.

Bit ``p`` lives in word ``p // 64`` at bit ``p % 64`` (LSB first).
"""

import struct

import numpy as np

from ._accel import njit

WORD_BITS = 64
SELECT_SAMPLE = 512

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_ALL = np.uint64(0xFFFFFFFFFFFFFFFF)


def popcount(x: int) -> int:
    return (x & 0xFFFFFFFFFFFFFFFF).bit_count()


def rot(k: int, i: int, x: int) -> int:
    """Rotate the ``k`` low bits of ``x`` left by ``i`` (``0 <= i < k``)."""
    if i == 0:
        return x
    return ((x << i) | (x >> (k - i))) & ((1 << k) - 1)


# -- numba kernels -----------------------------------------------------------

@njit(inline="always")
def popcount_nb(x):
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return np.int64((x * _H01) >> np.uint64(56))


@njit(inline="always")
def rot_nb(k, i, x):
    # k, i are int64; x is uint64 with no bits at or above k
    if i == 0:
        return x
    mask = _ALL if k >= 64 else (_ONE << np.uint64(k)) - _ONE
    return ((x << np.uint64(i)) | (x >> np.uint64(k - i))) & mask


@njit(inline="always")
def low_mask_nb(k):
    """Mask of the ``k`` low bits, valid for ``0 <= k <= 64``."""
    if k >= 64:
        return _ALL
    return (_ONE << np.uint64(k)) - _ONE


@njit(inline="always")
def select_in_word_nb(x, r):
    """Position of the ``r``-th (0-based) set bit of ``x``."""
    for _ in range(r):
        x &= x - _ONE
    return popcount_nb((x & (~x + _ONE)) - _ONE)


@njit
def select_from_nb(words, start, j):
    """Position of the ``j``-th (1-based) one at or after bit ``start``; -1 if absent."""
    w = start >> 6
    nwords = words.shape[0]
    if w >= nwords:
        return -1
    word = words[w] & (_ALL << np.uint64(start & 63))
    while True:
        c = popcount_nb(word)
        if c >= j:
            return (w << 6) + select_in_word_nb(word, j - 1)
        j -= c
        w += 1
        if w >= nwords:
            return -1
        word = words[w]


@njit
def select_sampled_nb(words, samples, i):
    """Position of the ``i``-th (1-based) one using every-512th-one samples."""
    k = (i - 1) // SELECT_SAMPLE
    return select_from_nb(words, samples[k], i - k * SELECT_SAMPLE)


@njit(inline="always")
def read_bits_nb(words, pos, width):
    if width == 0:
        return _ZERO
    w = pos >> 6
    off = pos & 63
    val = words[w] >> np.uint64(off)
    if off + width > 64:
        val |= words[w + 1] << np.uint64(64 - off)
    if width < 64:
        val &= (_ONE << np.uint64(width)) - _ONE
    return val


@njit(inline="always")
def write_bits_nb(words, pos, value, width):
    """OR ``width`` low bits of ``value`` into ``words`` at ``pos`` (target bits must be zero)."""
    if width == 0:
        return
    w = pos >> 6
    off = pos & 63
    words[w] |= value << np.uint64(off)
    if off + width > 64:
        words[w + 1] |= value >> np.uint64(64 - off)


@njit
def sample_ones_nb(words, nbits):
    total = 0
    for w in range(words.shape[0]):
        total += popcount_nb(words[w])
    out = np.empty((total + SELECT_SAMPLE - 1) // SELECT_SAMPLE, dtype=np.int64)
    seen = 0
    k = 0
    for w in range(words.shape[0]):
        word = words[w]
        c = popcount_nb(word)
        # next sampled rank is k * SELECT_SAMPLE + 1
        while k < out.shape[0] and seen + c >= k * SELECT_SAMPLE + 1:
            out[k] = (w << 6) + select_in_word_nb(word, k * SELECT_SAMPLE - seen)
            k += 1
        seen += c
    return out


@njit
def append_bits_nb(dst, dst_pos, src, nbits):
    """Copy ``nbits`` bits of ``src`` into the zero tail of ``dst`` starting at ``dst_pos``."""
    full = nbits >> 6
    for w in range(full):
        write_bits_nb(dst, dst_pos + (w << 6), src[w], 64)
    rest = nbits & 63
    if rest:
        write_bits_nb(dst, dst_pos + (full << 6), src[full] & ((_ONE << np.uint64(rest)) - _ONE), rest)


# -- numpy / python versions -------------------------------------------------

def _sample_ones_np(words: np.ndarray) -> np.ndarray:
    counts = np.bitwise_count(words).astype(np.int64)
    cum = np.cumsum(counts)
    total = int(cum[-1]) if len(cum) else 0
    ranks = np.arange(1, total + 1, SELECT_SAMPLE, dtype=np.int64)
    wi = np.searchsorted(cum, ranks, side="left")
    before = cum[wi] - counts[wi]
    out = np.empty(len(ranks), dtype=np.int64)
    for k, (w, r) in enumerate(zip(wi.tolist(), (ranks - before).tolist())):
        out[k] = (w << 6) + _select_in_word(int(words[w]), r - 1)
    return out


def _select_in_word(x: int, r: int) -> int:
    for _ in range(r):
        x &= x - 1
    return (x & -x).bit_length() - 1


def select_from_py(words: np.ndarray, start: int, j: int) -> int:
    w = start >> 6
    nwords = len(words)
    if w >= nwords:
        return -1
    word = int(words[w]) & ((0xFFFFFFFFFFFFFFFF << (start & 63)) & 0xFFFFFFFFFFFFFFFF)
    while True:
        c = word.bit_count()
        if c >= j:
            return (w << 6) + _select_in_word(word, j - 1)
        j -= c
        w += 1
        if w >= nwords:
            return -1
        word = int(words[w])
        if word == 0:
            # long unary runs: jump over zero words in C
            nz = np.flatnonzero(words[w:])
            if len(nz) == 0:
                return -1
            w += int(nz[0])
            word = int(words[w])


def read_bits_py(words: np.ndarray, pos: int, width: int) -> int:
    if width == 0:
        return 0
    w, off = pos >> 6, pos & 63
    val = int(words[w]) >> off
    if off + width > 64:
        val |= int(words[w + 1]) << (64 - off)
    return val & ((1 << width) - 1)


class BitWriter:
    """Append-only bit writer backed by a growable uint64 array."""

    def __init__(self, capacity_bits: int = 1024):
        self.words = np.zeros(max(1, (capacity_bits + 63) // 64), dtype=np.uint64)
        self.length = 0

    def _reserve(self, extra: int):
        need = (self.length + extra + 63) // 64 + 1
        if need > len(self.words):
            grown = np.zeros(max(need, 2 * len(self.words)), dtype=np.uint64)
            grown[: len(self.words)] = self.words
            self.words = grown

    def write(self, value: int, width: int):
        if width < 0 or width > 64:
            raise ValueError("width must be in [0, 64]")
        if width == 0:
            return
        if value >> width:
            raise ValueError(f"value {value} does not fit in {width} bits")
        self._reserve(width)
        w, off = self.length >> 6, self.length & 63
        self.words[w] |= np.uint64((value << off) & 0xFFFFFFFFFFFFFFFF)
        if off + width > 64:
            self.words[w + 1] |= np.uint64(value >> (64 - off))
        self.length += width

    def write_unary(self, q: int):
        """``q`` zeros followed by a one."""
        self._reserve(q + 1)
        self.length += q
        self.write(1, 1)

    def write_bit(self, bit: int):
        self.write(bit & 1, 1)

    def skip(self, nbits: int):
        self._reserve(nbits)
        self.length += nbits

    def to_bitvector(self) -> "BitVector":
        nwords = (self.length + 63) // 64
        return BitVector(self.words[:nwords].copy(), self.length)


class BitVector:
    """Immutable packed bit vector with rank1/select1."""

    def __init__(self, words: np.ndarray, length: int):
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if len(words) != (length + 63) // 64:
            raise ValueError("word count does not match bit length")
        if length & 63 and int(words[-1]) >> (length & 63):
            raise ValueError("padding bits beyond the length must be zero")
        self.words = words
        self.length = int(length)
        self._samples = None
        self._ones = None

    @classmethod
    def from_bits(cls, bits) -> "BitVector":
        w = BitWriter(len(bits))
        for b in bits:
            w.write_bit(int(b))
        return w.to_bitvector()

    def __len__(self):
        return self.length

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.length:
            raise IndexError(i)
        return (int(self.words[i >> 6]) >> (i & 63)) & 1

    def to_list(self):
        return [self[i] for i in range(self.length)]

    @property
    def ones(self) -> int:
        if self._ones is None:
            self._ones = int(np.bitwise_count(self.words).sum())
        return self._ones

    @property
    def select_samples(self) -> np.ndarray:
        """Position of every 512th one (ranks 1, 513, 1025, ...)."""
        if self._samples is None:
            self._samples = _sample_ones_np(self.words) if self.length else np.zeros(0, np.int64)
        return self._samples

    def rank1(self, x: int) -> int:
        """Number of ones strictly before position ``x``."""
        if not 0 <= x <= self.length:
            raise IndexError(f"rank position {x} outside [0, {self.length}]")
        full = x >> 6
        r = int(np.bitwise_count(self.words[:full]).sum())
        if x & 63:
            r += (int(self.words[full]) & ((1 << (x & 63)) - 1)).bit_count()
        return r

    def select1(self, i: int) -> int:
        """Position of the ``i``-th one (1-based)."""
        if not 1 <= i <= self.ones:
            raise IndexError(f"select rank {i} outside [1, {self.ones}]")
        k = (i - 1) // SELECT_SAMPLE
        return select_from_py(self.words, int(self.select_samples[k]), i - k * SELECT_SAMPLE)

    def read(self, pos: int, width: int) -> int:
        if pos < 0 or pos + width > self.length:
            raise IndexError("read past end of bit vector")
        return read_bits_py(self.words, pos, width)

    def size_in_bits(self, with_index: bool = False) -> int:
        extra = 64 * len(self.select_samples) if with_index else 0
        return self.length + extra

    def serialize(self) -> bytes:
        return struct.pack("<Q", self.length) + self.words.astype("<u8").tobytes()

    @classmethod
    def deserialize(cls, buf, offset: int = 0):
        """Parse a serialized vector; returns ``(vector, next_offset)``."""
        if offset + 8 > len(buf):
            raise ValueError("truncated bit vector header")
        (length,) = struct.unpack_from("<Q", buf, offset)
        nwords = (length + 63) // 64
        end = offset + 8 + 8 * nwords
        if end > len(buf):
            raise ValueError("truncated bit vector payload")
        words = np.frombuffer(buf, dtype="<u8", count=nwords, offset=offset + 8).astype(np.uint64)
        return cls(words, length), end

    def __eq__(self, other):
        return (
            isinstance(other, BitVector)
            and self.length == other.length
            and np.array_equal(self.words, other.words)
        )

    def __repr__(self):
        if self.length <= 64:
            return f"BitVector({''.join(map(str, self.to_list()))!r})"
        return f"BitVector(length={self.length}, ones={self.ones})"
