"""Denoiser checkpoint files.

Byte layout (little-endian):

====================  =========================================================
bytes 0..3            magic ``b"DPCK"``
bytes 4..7            format version, uint32 (currently 1)
bytes 8..11           header length ``n``, uint32
bytes 12..12+n        header, UTF-8 JSON with sorted keys: ``arch`` (the
                      :class:`~diffpace.network.ArchDescriptor` fields),
                      ``norm_scale``, ``sigma_min``, ``sigma_max``, ``seed``,
                      ``epoch``, ``ema_rate`` and ``params`` (ordered list of
                      ``[name, shape]`` pairs)
remaining bytes       the live parameters followed by the EMA parameters,
                      each a flat float64 array in ``params`` order
====================  =========================================================

Loading validates the architecture descriptor and the parameter table and
fails loudly on any mismatch.
"""

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError, MissingArtifactError
from .network import ArchDescriptor, DenoiserModel, DenoiserNet

MAGIC = b"DPCK"
VERSION = 1


def _param_table(net: DenoiserNet) -> list[tuple[str, tuple[int, ...]]]:
    return [(name, tuple(p.shape)) for name, p in net.named_parameters()]


def _flat_params(net: DenoiserNet) -> np.ndarray:
    with torch.no_grad():
        return np.concatenate([p.numpy().ravel() for _, p in net.named_parameters()])


def _load_flat(net: DenoiserNet, flat: np.ndarray) -> None:
    offset = 0
    with torch.no_grad():
        for _, p in net.named_parameters():
            n = p.numel()
            p.copy_(torch.from_numpy(flat[offset:offset + n].reshape(tuple(p.shape))))
            offset += n


def save_checkpoint(path: str | Path, model: DenoiserModel) -> None:
    header = json.dumps(
        {
            "arch": model.arch.to_dict(),
            "norm_scale": model.norm_scale,
            "sigma_min": model.sigma_min,
            "sigma_max": model.sigma_max,
            "seed": model.seed,
            "epoch": model.epoch,
            "ema_rate": model.ema_rate,
            "params": [[name, list(shape)] for name, shape in _param_table(model.net)],
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(header)))
        f.write(header)
        f.write(_flat_params(model.net).astype("<f8").tobytes())
        f.write(_flat_params(model.ema).astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> DenoiserModel:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"checkpoint file not found: {path}")
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError(f"{path} is not a denoiser checkpoint")
        version, header_len = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        header = json.loads(f.read(header_len).decode("utf-8"))
        flat = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)

    arch = ArchDescriptor.from_dict(header["arch"])
    net = DenoiserNet(arch)
    expected = _param_table(net)
    stored = [(name, tuple(shape)) for name, shape in header["params"]]
    if stored != expected:
        raise CheckpointError(
            f"{path}: stored parameter table does not match architecture "
            f"{arch} (incompatible checkpoint)")
    n_params = sum(int(np.prod(shape)) for _, shape in expected)
    if flat.size != 2 * n_params:
        raise CheckpointError(
            f"{path}: payload holds {flat.size} doubles, expected {2 * n_params}")
    ema = DenoiserNet(arch)
    _load_flat(net, flat[:n_params])
    _load_flat(ema, flat[n_params:])
    for p in ema.parameters():
        p.requires_grad_(False)
    return DenoiserModel(
        arch=arch, net=net, ema=ema,
        ema_rate=header["ema_rate"], norm_scale=header["norm_scale"],
        sigma_min=header["sigma_min"], sigma_max=header["sigma_max"],
        seed=header["seed"], epoch=header["epoch"],
    )
