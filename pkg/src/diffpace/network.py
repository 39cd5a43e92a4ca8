"""Lightweight convolutional denoiser with noise-level conditioning.

The network maps a 2-channel real grid (real/imag of the beamspace matrix)
plus a noise level to a denoised grid of the same shape.  The noise level is
sinusoidally encoded, passed through two linear maps, and modulates every
encoder convolution with a per-channel scale and shift; four plain
convolutions decode, and a residual connection adds the input back, so with
the final layer zero-initialised the network is the identity at init.

Everything runs in float64 and all parameter initialisation draws come from
an explicit numpy generator, which keeps training bitwise reproducible.
"""

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

SIGMA_HEADROOM = 1.1  # the denoiser accepts sigma up to sigma_max * headroom


@dataclass(frozen=True)
class ArchDescriptor:
    """Structural hyper-parameters; two checkpoints match iff these match."""

    grid_shape: tuple[int, int]  # (n_r, n_t)
    hidden: int = 32
    kernel: int = 3
    embed_dim: int = 64
    pe_dim: int = 32
    depth: int = 4  # conv layers in the encoder and in the decoder

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid_shape"] = list(d["grid_shape"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchDescriptor":
        d = dict(d)
        d["grid_shape"] = tuple(d["grid_shape"])
        return cls(**d)

    def parameter_count(self) -> int:
        """Closed-form count, layer by layer (kept in sync with the module)."""
        w, k, e = self.hidden, self.kernel, self.embed_dim
        trunk = (self.pe_dim * e + e) + (e * e + e)
        films = self.depth * (e * 2 * w + 2 * w)
        enc = (2 * w * k * k + w) + (self.depth - 1) * (w * w * k * k + w)
        dec = (self.depth - 1) * (w * w * k * k + w) + (w * 2 * k * k + 2)
        return trunk + films + enc + dec


class _NoiseEmbedding(nn.Module):
    """Sinusoidal encoding of log(sigma) followed by two linear maps."""

    def __init__(self, pe_dim: int, embed_dim: int):
        super().__init__()
        half = pe_dim // 2
        freqs = torch.from_numpy(np.geomspace(0.2, 20.0, half))
        self.register_buffer("freqs", freqs)
        self.lin1 = nn.Linear(pe_dim, embed_dim)
        self.lin2 = nn.Linear(embed_dim, embed_dim)

    def forward(self, sigma: torch.Tensor) -> torch.Tensor:
        u = torch.log(torch.clamp(sigma, min=1e-12))[:, None] * self.freqs[None, :]
        pe = torch.cat([torch.sin(u), torch.cos(u)], dim=1)
        return self.lin2(torch.nn.functional.silu(self.lin1(pe)))


class DenoiserNet(nn.Module):
    """Encoder/decoder CNN with per-layer noise modulation and a residual path."""

    def __init__(self, arch: ArchDescriptor):
        super().__init__()
        self.arch = arch
        w, k, d = arch.hidden, arch.kernel, arch.depth
        pad = k // 2
        self.embed = _NoiseEmbedding(arch.pe_dim, arch.embed_dim)
        self.encoder = nn.ModuleList(
            [nn.Conv2d(2 if i == 0 else w, w, k, padding=pad) for i in range(d)])
        self.films = nn.ModuleList(
            [nn.Linear(arch.embed_dim, 2 * w) for _ in range(d)])
        self.decoder = nn.ModuleList(
            [nn.Conv2d(w, w if i < d - 1 else 2, k, padding=pad) for i in range(d)])
        self.double()

    def forward(self, x: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
        e = self.embed(sigma)
        h = x
        for conv, film in zip(self.encoder, self.films):
            h = conv(h)
            scale, shift = film(e).chunk(2, dim=1)
            h = h * (1.0 + scale[:, :, None, None]) + shift[:, :, None, None]
            h = torch.nn.functional.silu(h)
        for i, conv in enumerate(self.decoder):
            h = conv(h)
            if i < len(self.decoder) - 1:
                h = torch.nn.functional.silu(h)
        return x + h


def init_parameters(net: DenoiserNet, rng: np.random.Generator) -> None:
    """Seeded init: LeCun-normal weights, zero biases, zero final layer."""
    for module in net.modules():
        if isinstance(module, (nn.Conv2d, nn.Linear)):
            fan_in = module.weight.shape[1:].numel()
            std = 1.0 / math.sqrt(fan_in)
            w = rng.normal(0.0, std, size=tuple(module.weight.shape))
            with torch.no_grad():
                module.weight.copy_(torch.from_numpy(w))
                module.bias.zero_()
    with torch.no_grad():
        net.decoder[-1].weight.zero_()
        net.decoder[-1].bias.zero_()


@dataclass
class DenoiserModel:
    """Trained denoiser: live parameters, their EMA shadow, and metadata.

    ``norm_scale`` is the per-component RMS the training data was divided by;
    ``sigma_min``/``sigma_max`` bound the noise levels seen in training, in
    normalised units.
    """

    arch: ArchDescriptor
    net: DenoiserNet
    ema: DenoiserNet
    ema_rate: float
    norm_scale: float
    sigma_min: float
    sigma_max: float
    seed: int
    epoch: int = 0

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.net.parameters())


def new_model(arch: ArchDescriptor, rng: np.random.Generator, ema_rate: float = 0.999,
              norm_scale: float = 1.0, sigma_min: float = 0.01,
              sigma_max: float = 2.0, seed: int = 0) -> DenoiserModel:
    net = DenoiserNet(arch)
    init_parameters(net, rng)
    ema = DenoiserNet(arch)
    ema.load_state_dict(net.state_dict())
    for module in (net, ema):
        for p in module.parameters():
            p.requires_grad_(module is net)
    return DenoiserModel(arch=arch, net=net, ema=ema, ema_rate=ema_rate,
                         norm_scale=norm_scale, sigma_min=sigma_min,
                         sigma_max=sigma_max, seed=seed)


def complex_to_channels(h: np.ndarray) -> np.ndarray:
    """(n_r, n_t) complex -> (2, n_r, n_t) float64 stacking real and imag."""
    return np.stack([h.real, h.imag]).astype(np.float64)


def channels_to_complex(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`complex_to_channels`."""
    return x[0] + 1j * x[1]


def _check_input(arch: ArchDescriptor, x: np.ndarray) -> None:
    if x.ndim != 4 or x.shape[1] != 2 or tuple(x.shape[2:]) != arch.grid_shape:
        raise ValueError(
            f"expected (batch, 2, {arch.grid_shape[0]}, {arch.grid_shape[1]}) input, "
            f"got {x.shape}")


def denoiser_forward(model: DenoiserModel, h_t: np.ndarray, sigma: float,
                     use_ema: bool = True) -> np.ndarray:
    """Denoised grid for a 2-channel real input at noise level ``sigma``.

    ``sigma`` is in normalised units and must lie in [0, sigma_max * 1.1].
    """
    if not 0.0 <= sigma <= model.sigma_max * SIGMA_HEADROOM:
        raise ValueError(
            f"sigma {sigma} outside the trained range "
            f"[0, {model.sigma_max * SIGMA_HEADROOM:g}]")
    single = h_t.ndim == 3
    x = h_t[None] if single else h_t
    _check_input(model.arch, x)
    net = model.ema if use_ema else model.net
    with torch.no_grad():
        xt = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float64))
        st = torch.full((xt.shape[0],), float(sigma), dtype=torch.float64)
        out = net(xt, st).numpy()
    return out[0] if single else out


def score_from_denoiser(model: DenoiserModel, h_t: np.ndarray, sigma: float,
                        use_ema: bool = True) -> np.ndarray:
    """Score (D(h_t, sigma) - h_t) / sigma^2 on the 2-channel grid."""
    if sigma <= 0:
        raise ValueError("score extraction requires sigma > 0")
    d = denoiser_forward(model, h_t, sigma, use_ema=use_ema)
    return (d - h_t) / sigma ** 2
