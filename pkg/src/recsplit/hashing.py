"""Master hash codes and the seeded hash family derived from them.

A key is hashed once into a 128-bit master hash code (MHC).  The high word
selects the bucket (and, via bit 0, the rotation-fitting side); the low word
feeds every seeded node hash.
"""

import hashlib
from typing import Iterable, NamedTuple

import numpy as np

from ._accel import njit

MASK64 = (1 << 64) - 1

_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_NB_C1 = np.uint64(_C1)
_NB_C2 = np.uint64(_C2)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U32 = np.uint64(32)


class MasterHashCode(NamedTuple):
    high: int
    low: int


def master_hash(key_bytes: bytes, global_seed: int = 0) -> MasterHashCode:
    """128-bit fingerprint of ``key_bytes`` (keyed BLAKE2b)."""
    digest = hashlib.blake2b(
        key_bytes, digest_size=16, key=(global_seed & MASK64).to_bytes(8, "little")
    ).digest()
    return MasterHashCode(
        int.from_bytes(digest[:8], "little"), int.from_bytes(digest[8:], "little")
    )


def master_hash_many(keys: Iterable[bytes], global_seed: int = 0) -> np.ndarray:
    """Hash many keys into an ``(n, 2)`` uint64 array of ``(high, low)`` rows."""
    seed_key = (global_seed & MASK64).to_bytes(8, "little")
    blake = hashlib.blake2b
    raw = b"".join(blake(k, digest_size=16, key=seed_key).digest() for k in keys)
    return np.frombuffer(raw, dtype="<u8").astype(np.uint64).reshape(-1, 2)


def as_mhc_array(keys) -> np.ndarray:
    """Normalise a list of MasterHashCode / pairs / (n, 2) array to uint64 (n, 2)."""
    if isinstance(keys, np.ndarray):
        arr = keys
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("MHC arrays must have shape (n, 2)")
        return arr.astype(np.uint64, copy=False)
    rows = [(int(k[0]), int(k[1])) for k in keys]
    return np.array(rows, dtype=np.uint64).reshape(-1, 2)


def random_mhcs(n: int, rng) -> np.ndarray:
    """Uniform random master hash codes, as used for synthetic benchmarks."""
    rng = np.random.default_rng(rng)
    return rng.integers(0, 2**64, size=(n, 2), dtype=np.uint64, endpoint=False)


# -- scalar reference versions (Python ints) ---------------------------------

def mix64(x: int) -> int:
    x &= MASK64
    x = ((x ^ (x >> 30)) * _C1) & MASK64
    x = ((x ^ (x >> 27)) * _C2) & MASK64
    return x ^ (x >> 31)


def remap(h: int, range_: int) -> int:
    """Map a 64-bit hash to ``[0, range_)`` by fixed-point scaling of its top 32 bits."""
    if range_ < 1:
        raise ValueError("range must be >= 1")
    return ((h >> 32) * range_) >> 32


def bucket_of(mhc: MasterHashCode, num_buckets: int) -> int:
    return remap(mhc[0], num_buckets)


def node_hash(mhc: MasterHashCode, seed: int) -> int:
    return mix64(mhc[1] + seed)


def ab_partition_bit(mhc: MasterHashCode) -> int:
    """1 puts the key in set B for rotation fitting, 0 in set A."""
    return mhc[0] & 1


def num_buckets_for(n: int, bucket_size: int) -> int:
    return max(1, -(-n // bucket_size))


# -- numba kernels -----------------------------------------------------------

@njit(inline="always")
def mix64_nb(x):
    x = (x ^ (x >> _U30)) * _NB_C1
    x = (x ^ (x >> _U27)) * _NB_C2
    return x ^ (x >> _U31)


@njit(inline="always")
def remap_nb(h, range_):
    # range_ must be a uint64
    return ((h >> _U32) * range_) >> _U32


# -- numpy versions ----------------------------------------------------------

def mix64_np(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    x = (x ^ (x >> _U30)) * _NB_C1
    x = (x ^ (x >> _U27)) * _NB_C2
    return x ^ (x >> _U31)


def remap_np(h: np.ndarray, range_: int) -> np.ndarray:
    return ((np.asarray(h, dtype=np.uint64) >> _U32) * np.uint64(range_)) >> _U32


def bucket_of_np(mhcs: np.ndarray, num_buckets: int) -> np.ndarray:
    return remap_np(mhcs[:, 0], num_buckets).astype(np.int64)


# Per-depth salts added to split seeds, and one for leaves, so that a child
# never re-uses its parent's hash values.  Part of the file format.
def _salts(count: int, state: int) -> np.ndarray:
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        out.append(mix64(state))
    return np.array(out, dtype=np.uint64)


MAX_DEPTH = 64
SPLIT_SALTS = _salts(MAX_DEPTH, 0x5EED5EED5EED5EED)
LEAF_SALT = int(_salts(1, 0x1EAF1EAF1EAF1EAF)[0])
