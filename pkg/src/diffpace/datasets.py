"""Channel dataset files.

Byte layout (little-endian throughout):

====================  =========================================================
bytes 0..3            magic ``b"DPCD"``
bytes 4..7            format version, uint32 (currently 1)
bytes 8..11           header length ``n``, uint32
bytes 12..12+n        header, UTF-8 JSON with sorted keys: ``array`` (the
                      :class:`~diffpace.geometry.ArrayConfig` fields),
                      ``scenario`` (the :class:`~diffpace.channel.ScenarioSpec`
                      fields), ``master_seed`` and ``samples``
remaining bytes       ``samples`` beamspace matrices, each ``n_r * n_t``
                      complex entries stored row-major as interleaved
                      real/imag float64 pairs
====================  =========================================================

Writing and reading round-trip losslessly: the payload is the raw float64
image of the complex matrices.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ScenarioSpec
from .errors import MissingArtifactError
from .geometry import ArrayConfig

MAGIC = b"DPCD"
VERSION = 1


@dataclass(frozen=True)
class ChannelDataset:
    """In-memory dataset: beamspace samples plus generation provenance."""

    array: ArrayConfig
    scenario: ScenarioSpec
    master_seed: int
    samples: np.ndarray  # (n, n_r, n_t) complex128

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


def _array_to_dict(cfg: ArrayConfig) -> dict:
    return {
        "n_t": cfg.n_t, "n_r": cfg.n_r, "k_t": cfg.k_t, "k_r": cfg.k_r,
        "l_t": cfg.l_t, "l_r": cfg.l_r,
        "tx_subarray_shape": list(cfg.tx_subarray_shape),
        "rx_subarray_shape": list(cfg.rx_subarray_shape),
    }


def _array_from_dict(d: dict) -> ArrayConfig:
    return ArrayConfig(
        n_t=d["n_t"], n_r=d["n_r"], k_t=d["k_t"], k_r=d["k_r"],
        l_t=d["l_t"], l_r=d["l_r"],
        tx_subarray_shape=tuple(d["tx_subarray_shape"]),
        rx_subarray_shape=tuple(d["rx_subarray_shape"]),
    )


def save_dataset(path: str | Path, dataset: ChannelDataset) -> None:
    samples = np.ascontiguousarray(dataset.samples, dtype=np.complex128)
    n, n_r, n_t = samples.shape
    if (n_r, n_t) != (dataset.array.n_r, dataset.array.n_t):
        raise ValueError("sample dimensions do not match the array config")
    header = json.dumps(
        {
            "array": _array_to_dict(dataset.array),
            "scenario": dataset.scenario.to_dict(),
            "master_seed": dataset.master_seed,
            "samples": n,
        },
        sort_keys=True,
    ).encode("utf-8")
    payload = samples.view(np.float64)  # interleaved re/im, row-major
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(header)))
        f.write(header)
        f.write(payload.astype("<f8", copy=False).tobytes())


def load_dataset(path: str | Path) -> ChannelDataset:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"dataset file not found: {path}")
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path} is not a channel dataset file")
        version, header_len = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ValueError(f"unsupported dataset format version {version}")
        header = json.loads(f.read(header_len).decode("utf-8"))
        raw = np.frombuffer(f.read(), dtype="<f8")
    array = _array_from_dict(header["array"])
    n = header["samples"]
    expected = n * array.n_r * array.n_t * 2
    if raw.size != expected:
        raise ValueError(f"{path}: payload has {raw.size} doubles, expected {expected}")
    samples = raw.astype(np.float64).view(np.complex128).reshape(n, array.n_r, array.n_t)
    return ChannelDataset(
        array=array,
        scenario=ScenarioSpec.from_dict(header["scenario"]),
        master_seed=header["master_seed"],
        samples=samples,
    )


def train_test_split(dataset: ChannelDataset, train_fraction: float,
                     split_seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled split of the samples into train and test sets."""
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must lie in (0, 1)")
    n = dataset.n_samples
    perm = np.random.default_rng(split_seed).permutation(n)
    n_train = int(round(train_fraction * n))
    return dataset.samples[perm[:n_train]], dataset.samples[perm[n_train:]]
