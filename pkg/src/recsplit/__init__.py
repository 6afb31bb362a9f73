"""RecSplit minimal perfect hashing with rotation fitting and batched seed search."""

from .builder import DuplicateKeyError, MphfConfig, build, partition
from .hashing import MasterHashCode, master_hash, master_hash_many
from .mphf import FormatError, RecSplitMphf
from .search import SeedCapExceeded, SeedResult

__all__ = [
    "DuplicateKeyError",
    "FormatError",
    "MasterHashCode",
    "MphfConfig",
    "RecSplitMphf",
    "SeedCapExceeded",
    "SeedResult",
    "build",
    "master_hash",
    "master_hash_many",
    "partition",
]
