"""Compare the numba kernels with the pure-numpy fallback.

    python3 benchmarks/bench_backends.py [--leaves 200] [--n 20000]

Prints a CSV: kernel, backend, seconds, evaluations, and the speedup of numba
over numpy per kernel.  Both backends must report identical seeds and
evaluation counts; the script exits non-zero otherwise.
"""

import argparse
import sys
import time

import numpy as np

from recsplit import MphfConfig, build
from recsplit.hashing import random_mhcs
from recsplit.search import (
    SearchStats,
    find_bijection_bruteforce,
    find_bijection_rotation,
    find_bijection_rotation_lut,
    find_splitting,
)
from recsplit.tree import shape_for, split_node


def _leaf_sets(m, count, seed):
    rng = np.random.default_rng(seed)
    return [random_mhcs(m, rng) for _ in range(count)]


def _run_search(fn, sets, backend, **kw):
    stats = SearchStats()
    seeds = []
    t = time.perf_counter()
    for keys in sets:
        seeds.append(fn(keys.copy(), backend=backend, stats=stats, **kw).stored_value)
    return time.perf_counter() - t, stats.total_evaluations, seeds


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--leaves", type=int, default=200, help="leaf key sets per search kernel")
    ap.add_argument("--n", type=int, default=20000, help="keys for the end-to-end build")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    leaf_sets = _leaf_sets(8, args.leaves, args.seed)
    split = split_node(100, shape_for(8))
    split_sets = _leaf_sets(100, max(1, args.leaves // 4), args.seed + 1)
    kernels = [
        ("bruteforce m=8", lambda b: _run_search(find_bijection_bruteforce, leaf_sets, b)),
        ("bruteforce m=8 batch 8", lambda b: _run_search(find_bijection_bruteforce, leaf_sets, b,
                                                          batch_width=8)),
        ("rotation m=8", lambda b: _run_search(find_bijection_rotation, leaf_sets, b)),
        ("rotation lut m=8", lambda b: _run_search(find_bijection_rotation_lut, leaf_sets, b)),
        ("split s=100", lambda b: _run_search(lambda k, **kw: find_splitting(k, split, **kw),
                                              split_sets, b)),
    ]

    keys = random_mhcs(args.n, args.seed + 2)
    config = MphfConfig(8, 100, rotation_fitting=True)

    def _build(backend):
        t = time.perf_counter()
        f = build(keys, config, backend=backend)
        return time.perf_counter() - t, f.build_stats["hash_evaluations"], f.serialize()

    kernels.append((f"build n={args.n} l=8 b=100 rotation", _build))

    # compile the numba kernels outside the timed region
    _run_search(find_bijection_bruteforce, leaf_sets[:1], "numba")
    _run_search(find_bijection_bruteforce, leaf_sets[:1], "numba", batch_width=8)
    _run_search(find_bijection_rotation, leaf_sets[:1], "numba")
    _run_search(find_bijection_rotation_lut, leaf_sets[:1], "numba")
    _run_search(lambda k, **kw: find_splitting(k, split, **kw), split_sets[:1], "numba")
    build(keys[:500], config, backend="numba")

    print("kernel,backend,seconds,evaluations,numba_speedup")
    mismatch = False
    for name, run in kernels:
        tn, en, on = run("numba")
        tp, ep, op = run("numpy")
        if en != ep or on != op:
            mismatch = True
            print(f"# {name}: backends disagree", file=sys.stderr)
        print(f"{name},numba,{tn:.4f},{en},")
        print(f"{name},numpy,{tp:.4f},{ep},{tp / tn:.1f}")
    return 1 if mismatch else 0


if __name__ == "__main__":
    sys.exit(main())
