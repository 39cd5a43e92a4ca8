import numpy as np
import pytest

from diffpace.channel import ScenarioSpec
from diffpace.datasets import (ChannelDataset, load_dataset, save_dataset,
                               train_test_split)
from diffpace.errors import MissingArtifactError
from diffpace.geometry import ArrayConfig

CFG = ArrayConfig(n_t=8, n_r=4, k_t=2, k_r=2, l_t=2, l_r=2,
                  tx_subarray_shape=(2, 2), rx_subarray_shape=(2, 1))


def make_dataset(n=16, seed=0):
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal((n, 4, 8)) + 1j * rng.standard_normal((n, 4, 8))
    return ChannelDataset(array=CFG, scenario=ScenarioSpec(), master_seed=seed,
                          samples=samples)


def test_roundtrip_lossless(tmp_path):
    ds = make_dataset()
    path = tmp_path / "ds.bin"
    save_dataset(path, ds)
    back = load_dataset(path)
    np.testing.assert_array_equal(back.samples, ds.samples)
    assert back.array == ds.array
    assert back.scenario == ds.scenario
    assert back.master_seed == ds.master_seed


def test_write_is_deterministic(tmp_path):
    ds = make_dataset()
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_dataset(p1, ds)
    save_dataset(p2, ds)
    assert p1.read_bytes() == p2.read_bytes()


def test_header_layout(tmp_path):
    ds = make_dataset(n=3)
    path = tmp_path / "ds.bin"
    save_dataset(path, ds)
    raw = path.read_bytes()
    assert raw[:4] == b"DPCD"
    version = int.from_bytes(raw[4:8], "little")
    header_len = int.from_bytes(raw[8:12], "little")
    assert version == 1
    import json
    header = json.loads(raw[12:12 + header_len])
    assert header["samples"] == 3
    assert header["array"]["n_t"] == 8
    payload = raw[12 + header_len:]
    assert len(payload) == 3 * 4 * 8 * 2 * 8  # samples * n_r * n_t * (re,im) * float64


def test_missing_file_raises():
    with pytest.raises(MissingArtifactError):
        load_dataset("/nonexistent/dataset.bin")


def test_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_dataset(path)


def test_truncated_payload_detected(tmp_path):
    ds = make_dataset(n=2)
    path = tmp_path / "ds.bin"
    save_dataset(path, ds)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(ValueError):
        load_dataset(path)


def test_split_deterministic_and_disjoint():
    ds = make_dataset(n=20)
    tr1, te1 = train_test_split(ds, 0.9, split_seed=5)
    tr2, te2 = train_test_split(ds, 0.9, split_seed=5)
    np.testing.assert_array_equal(tr1, tr2)
    np.testing.assert_array_equal(te1, te2)
    assert tr1.shape[0] == 18 and te1.shape[0] == 2
    # all original samples accounted for exactly once
    joined = np.concatenate([tr1, te1]).reshape(20, -1)
    original = ds.samples.reshape(20, -1)
    matched = set()
    for row in joined:
        hits = np.where((original == row).all(axis=1))[0]
        assert hits.size == 1
        matched.add(int(hits[0]))
    assert matched == set(range(20))
