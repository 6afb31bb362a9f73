import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from recsplit import DuplicateKeyError, FormatError, MphfConfig, RecSplitMphf, build, partition
from recsplit.hashing import bucket_of_np, random_mhcs

CONFIGS = [MphfConfig(5, 5), MphfConfig(8, 100), MphfConfig(8, 100, True), MphfConfig(12, 9, True),
           MphfConfig(6, 2000, True, use_lut=True), MphfConfig(2, 1)]


def _is_perm(values, n):
    return np.array_equal(np.sort(values), np.arange(n))


def test_single_key():
    f = build([b"only"], MphfConfig(5, 5))
    assert f.query(b"only") == 0
    assert f.seeds.bits.length == 0  # a one-key leaf stores nothing


@pytest.mark.parametrize("config", CONFIGS, ids=lambda c: f"l{c.leaf_size}b{c.bucket_size}r{int(c.rotation_fitting)}")
def test_permutation(config):
    keys = random_mhcs(20_000, 1)
    f = build(keys, config)
    q = f.query_many(keys)
    assert _is_perm(q, len(keys))
    some = keys[:200]
    assert [f.query_mhc(k) for k in some] == q[:200].tolist()


@given(st.sets(st.binary(min_size=0, max_size=12), min_size=1, max_size=300),
       st.sampled_from([(5, 5), (8, 100), (3, 7)]), st.booleans())
def test_permutation_property(keys, shape, rotation):
    keys = sorted(keys)
    f = build(keys, MphfConfig(shape[0], shape[1], rotation))
    assert _is_perm(np.array([f.query(k) for k in keys]), len(keys))
    assert _is_perm(f.query_many(keys), len(keys))


def test_string_and_bytes_keys_agree():
    a = build(["x", "y", "z"], MphfConfig(5, 5))
    b = build([b"x", b"y", b"z"], MphfConfig(5, 5))
    assert a.serialize() == b.serialize()


def test_out_of_set_keys_stay_in_range():
    keys = random_mhcs(5000, 2)
    f = build(keys, MphfConfig(8, 100))
    q = f.query_many(random_mhcs(5000, 3))
    assert q.min() >= 0 and q.max() < 5000


def test_roundtrip_identical_answers(tmp_path):
    keys = random_mhcs(10_000, 4)
    f = build(keys, MphfConfig(8, 100, True))
    g = RecSplitMphf.deserialize(f.serialize())
    probes = np.concatenate([keys, random_mhcs(10_000, 5)])
    assert np.array_equal(f.query_many(probes), g.query_many(probes))
    assert g.serialize() == f.serialize()
    path = tmp_path / "m.rsrf"
    f.save(path)
    assert RecSplitMphf.load(path).serialize() == f.serialize()


def test_deserialize_rejects_damage():
    buf = build(random_mhcs(2000, 6), MphfConfig(5, 5)).serialize()
    with pytest.raises(FormatError):
        RecSplitMphf.deserialize(buf[:-1])
    with pytest.raises(FormatError):
        RecSplitMphf.deserialize(buf[:10])
    flipped = bytearray(buf)
    flipped[len(buf) // 2] ^= 0x10
    with pytest.raises(FormatError):
        RecSplitMphf.deserialize(bytes(flipped))
    with pytest.raises(FormatError):
        RecSplitMphf.deserialize(b"XXXX" + buf[4:])
    with pytest.raises(FormatError):
        RecSplitMphf.deserialize(buf, expect_leaf_size=8)
    with pytest.raises(FormatError):
        RecSplitMphf.deserialize(buf, expect_bucket_size=100)


def test_determinism_across_threads_and_batches():
    keys = random_mhcs(30_000, 7)
    for config in (MphfConfig(5, 5), MphfConfig(8, 100, True)):
        ref = build(keys, config).serialize()
        for threads, width in ((3, 1), (8, 8), (1, 5)):
            c = MphfConfig(config.leaf_size, config.bucket_size, config.rotation_fitting, width)
            assert build(keys, c, thread_count=threads).serialize() == ref


def test_numpy_backend_builds_identical_bytes():
    keys = random_mhcs(2000, 8)
    for config in (MphfConfig(5, 5), MphfConfig(8, 100, True), MphfConfig(6, 50, True, use_lut=True)):
        a = build(keys, config, backend="numba")
        b = build(keys, config, backend="numpy", thread_count=2)
        assert a.serialize() == b.serialize()
        assert np.array_equal(b.query_many(keys[:100], backend="numpy"), a.query_many(keys[:100]))


def test_partition_segments():
    keys = random_mhcs(10_000, 9)
    bk = partition(keys, 100)
    assert bk.bounds[0] == 0 and bk.bounds[-1] == 10_000
    assert np.all(np.diff(bk.bounds) >= 0)
    b = bucket_of_np(bk.mhcs, 100)
    for i in (0, 37, 99):
        seg = b[bk.bounds[i]: bk.bounds[i + 1]]
        assert np.all(seg == i)
    assert np.array_equal(partition(keys, 100, 8).mhcs, bk.mhcs)


def test_partition_two_keys_one_bucket():
    bk = partition(np.array([[5, 1], [6, 2]], dtype=np.uint64), 1)
    assert bk.sizes().tolist() == [2]


def test_duplicates_and_empty_input_rejected():
    with pytest.raises(DuplicateKeyError):
        build([b"a", b"b", b"a"])
    with pytest.raises(ValueError):
        build([])


def test_config_validation():
    with pytest.raises(ValueError):
        MphfConfig(25, 10)
    with pytest.raises(ValueError):
        MphfConfig(8, 100, use_lut=True)
    with pytest.raises(ValueError):
        MphfConfig(20, 100, True, use_lut=True)


def test_space_accounting():
    keys = random_mhcs(50_000, 10)
    f = build(keys, MphfConfig(8, 100))
    parts = f.space_breakdown()
    assert f.size_in_bits() == sum(parts.values())
    assert 1.7 < f.bits_per_key() < 1.95
