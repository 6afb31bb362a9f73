"""Splitting-tree shape, split/bijection success probabilities and Rice schedule."""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np

from .codes import optimal_rice_parameter

MIN_LEAF_SIZE = 2
MAX_LEAF_SIZE = 24

LEAF, LOWER1, LOWER2, UPPER = 0, 1, 2, 3


@dataclass(frozen=True)
class TreeShape:
    leaf_size: int
    fanout_lower1: int
    fanout_lower2: int
    unit_lower1: int
    unit_lower2: int


@dataclass(frozen=True)
class Leaf:
    size: int


@dataclass(frozen=True)
class NodeSplit:
    size: int
    fanout: int
    parts: Tuple[int, ...]
    kind: int
    # all parts but the last have this size; for upper splits it is the left size
    unit: int

    @property
    def left_size(self) -> int:
        return self.parts[0]


def shape_for(leaf_size: int) -> TreeShape:
    if not MIN_LEAF_SIZE <= leaf_size <= MAX_LEAF_SIZE:
        raise ValueError(f"leaf size must be in [{MIN_LEAF_SIZE}, {MAX_LEAF_SIZE}], got {leaf_size}")
    # ceil(0.35 l + 0.55) and ceil(0.21 l + 0.9) in exact integer arithmetic
    f1 = max(2, -(-(35 * leaf_size + 55) // 100))
    f2 = max(2, -(-(21 * leaf_size + 90) // 100))
    u1 = f1 * leaf_size
    return TreeShape(leaf_size, f1, f2, u1, f2 * u1)


def upper_left_size(s: int, unit_lower2: int) -> int:
    return min(s - 1, -(-s // (2 * unit_lower2)) * unit_lower2)


def split_node(s: int, shape: TreeShape) -> Union[Leaf, NodeSplit]:
    if s < 1:
        raise ValueError("node size must be >= 1")
    ell = shape.leaf_size
    if s <= ell:
        return Leaf(s)
    if s > shape.unit_lower2:
        c0 = upper_left_size(s, shape.unit_lower2)
        return NodeSplit(s, 2, (c0, s - c0), UPPER, c0)
    unit, kind = (ell, LOWER1) if s <= shape.unit_lower1 else (shape.unit_lower1, LOWER2)
    f = -(-s // unit)
    parts = (unit,) * (f - 1) + (s - unit * (f - 1),)
    return NodeSplit(s, f, parts, kind, unit)


def split_success_probability(split: NodeSplit) -> float:
    """Probability that one seed sends exactly ``parts[i]`` keys to each child."""
    s = split.size
    logp = math.lgamma(s + 1)
    for c in split.parts:
        logp -= math.lgamma(c + 1)
        logp += c * math.log(c / s)
    return math.exp(logp)


def bijection_success_probability(m: int, rotation_fitting: bool = False) -> float:
    """Probability that one tried hash function (one base seed) yields a bijection."""
    if not 1 <= m <= 64:
        raise ValueError("leaf size must be in [1, 64]")
    p = math.exp(math.lgamma(m + 1) - m * math.log(m))
    if rotation_fitting and m >= 2:
        from .analysis import expected_rotation_factor

        p *= expected_rotation_factor(m)
    return min(p, 1.0)


def leaf_value_probability(m: int, rotation_fitting: bool) -> float:
    """Per-unit success probability of a stored leaf value.

    With rotation fitting only every m-th value is a base seed, so the stored
    value advances by m per tried hash function.
    """
    if rotation_fitting and m >= 2:
        return bijection_success_probability(m, True) / m
    return bijection_success_probability(m, False)


@dataclass(frozen=True)
class RiceParams:
    leaf_tau: np.ndarray   # indexed by leaf size 0..leaf_size
    split_tau: np.ndarray  # indexed by node size; zero below leaf_size + 1


@dataclass(frozen=True)
class TreeLayout:
    """Per-size tables the builder and the query walk share."""

    shape: TreeShape
    rotation_fitting: bool
    max_size: int
    rice: RiceParams
    node_count: np.ndarray  # number of stored values in a subtree of size s (size-1 leaves store none)
    fixed_bits: np.ndarray  # total fixed-part bits of a subtree of size s

    @property
    def leaf_tau(self):
        return self.rice.leaf_tau

    @property
    def split_tau(self):
        return self.rice.split_tau


def rice_schedule(leaf_size: int, max_bucket_size: int, rotation_fitting: bool = False) -> RiceParams:
    return tree_layout(leaf_size, max_bucket_size, rotation_fitting).rice


def tree_layout(leaf_size: int, max_size: int, rotation_fitting: bool) -> TreeLayout:
    # share one cached table across calls by rounding the size up
    cap = max(leaf_size, 1 << max(6, int(max_size).bit_length()))
    return _tree_layout(leaf_size, cap, bool(rotation_fitting))


@lru_cache(maxsize=64)
def _tree_layout(leaf_size: int, max_size: int, rotation_fitting: bool) -> TreeLayout:
    shape = shape_for(leaf_size)
    leaf_tau = np.zeros(leaf_size + 1, dtype=np.int64)
    for m in range(1, leaf_size + 1):
        leaf_tau[m] = optimal_rice_parameter(leaf_value_probability(m, rotation_fitting))
    split_tau = np.zeros(max_size + 1, dtype=np.int64)
    node_count = np.zeros(max_size + 1, dtype=np.int64)
    fixed_bits = np.zeros(max_size + 1, dtype=np.int64)
    for s in range(1, max_size + 1):
        node = split_node(s, shape)
        if isinstance(node, Leaf):
            # a single key has only one possible bijection; nothing is stored
            node_count[s] = 1 if s > 1 else 0
            fixed_bits[s] = leaf_tau[s] if s > 1 else 0
            continue
        tau = optimal_rice_parameter(split_success_probability(node))
        split_tau[s] = tau
        node_count[s] = 1 + sum(int(node_count[c]) for c in node.parts)
        fixed_bits[s] = tau + sum(int(fixed_bits[c]) for c in node.parts)
    for arr in (leaf_tau, split_tau, node_count, fixed_bits):
        arr.setflags(write=False)
    return TreeLayout(shape, rotation_fitting, max_size, RiceParams(leaf_tau, split_tau),
                      node_count, fixed_bits)


def tree_depth(s: int, shape: TreeShape) -> int:
    """Number of split levels above the deepest leaf of a size-``s`` tree."""
    node = split_node(s, shape)
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(c, shape) for c in set(node.parts))
