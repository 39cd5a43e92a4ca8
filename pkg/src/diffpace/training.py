"""Denoising-objective training loop with Adam and an EMA shadow.

Every stochastic choice (parameter init, level draws, perturbation noise,
shuffling) comes from numpy generators derived from the config seed, so a
rerun with the same config and dataset reproduces the parameters bitwise.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch

from . import seeds
from .errors import NumericalError
from .network import ArchDescriptor, DenoiserModel, new_model
from .schedule import training_levels


@dataclass(frozen=True)
class TrainConfig:
    """Trainer hyper-parameters; sigma bounds are in normalised units."""

    epochs: int
    batch_size: int = 64
    learning_rate: float = 1e-4
    ema_rate: float = 0.999
    noise_levels: int = 1000
    sigma_min: float | None = None  # default 0.01 (unit-RMS data)
    sigma_max: float | None = None  # default 2 * max per-sample RMS
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 <= self.ema_rate < 1.0):
            raise ValueError("ema rate must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.noise_levels < 1:
            raise ValueError("epochs, batch_size, noise_levels must be sensible")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    test_loss: float


def ema_update(theta_ema, theta, m: float) -> None:
    """In-place shadow update theta_ema <- m * theta_ema + (1 - m) * theta."""
    if not (0.0 <= m < 1.0):
        raise ValueError("ema rate must lie in [0, 1)")
    with torch.no_grad():
        for shadow, live in zip(theta_ema, theta):
            shadow.mul_(m).add_(live, alpha=1.0 - m)


def _to_channels_batch(h: np.ndarray) -> np.ndarray:
    """(B, n_r, n_t) complex -> (B, 2, n_r, n_t) float64."""
    return np.stack([h.real, h.imag], axis=1).astype(np.float64)


def _perturb_batch(x: np.ndarray, sigma: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(x.shape) / np.sqrt(2)  # complex CN(0,1) per grid cell
    return x + sigma[:, None, None, None] * noise


def train_step(model: DenoiserModel, batch: np.ndarray, levels: np.ndarray,
               rng: np.random.Generator, optimizer: torch.optim.Optimizer) -> float:
    """One denoising step: perturb, MSE against clean, backprop, Adam, EMA.

    ``batch`` holds clean normalised samples, (B, n_r, n_t) complex.  The
    per-sample noise level is drawn uniformly over ``levels``.  Returns the
    batch loss sum_i ||D(h_i + sigma_i n, sigma_i) - h_i||^2 / B.
    """
    if batch.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    x = _to_channels_batch(batch)
    sigma = levels[rng.integers(0, levels.size, size=batch.shape[0])]
    x_t = _perturb_batch(x, sigma, rng)

    xt = torch.from_numpy(x_t)
    x0 = torch.from_numpy(x)
    st = torch.from_numpy(sigma.astype(np.float64))
    optimizer.zero_grad(set_to_none=True)
    d = model.net(xt, st)
    loss = torch.sum((d - x0) ** 2) / batch.shape[0]
    if not torch.isfinite(loss):
        raise NumericalError(
            f"non-finite training loss (sigma range {sigma.min():g}..{sigma.max():g})")
    loss.backward()
    optimizer.step()
    ema_update(model.ema.parameters(), model.net.parameters(), model.ema_rate)
    return float(loss.item())


def _eval_loss(model: DenoiserModel, clean: np.ndarray, noisy: np.ndarray,
               sigma: np.ndarray, batch_size: int) -> float:
    """Mean per-sample loss of the EMA model on a frozen noisy evaluation set."""
    total = 0.0
    with torch.no_grad():
        for start in range(0, clean.shape[0], batch_size):
            sl = slice(start, start + batch_size)
            d = model.ema(torch.from_numpy(noisy[sl]),
                          torch.from_numpy(sigma[sl]))
            total += float(torch.sum((d - torch.from_numpy(clean[sl])) ** 2))
    return total / clean.shape[0]


def train(dataset: np.ndarray, cfg: TrainConfig,
          arch: ArchDescriptor | None = None,
          validation: np.ndarray | None = None,
          verbose: bool = False) -> tuple[DenoiserModel, list[EpochLog]]:
    """Train a denoiser on complex samples of shape (n, n_r, n_t).

    The data is scaled to unit per-component RMS (the scale is stored on the
    returned model and undone by the inference adapters).  The test loss is
    evaluated on a frozen noisy copy of ``validation`` so epochs are
    comparable; the EMA parameters with the best test loss are returned.
    """
    n = dataset.shape[0]
    if n < cfg.batch_size:
        raise ValueError("dataset smaller than one batch")
    if arch is None:
        arch = ArchDescriptor(grid_shape=dataset.shape[1:])

    norm_scale = float(np.sqrt(np.mean(np.abs(dataset) ** 2)))
    data = dataset / norm_scale
    dim = data.shape[1] * data.shape[2]
    sample_rms = np.sqrt(np.sum(np.abs(data) ** 2, axis=(1, 2)) / dim)
    sigma_min = cfg.sigma_min if cfg.sigma_min is not None else 0.01
    sigma_max = cfg.sigma_max if cfg.sigma_max is not None else 2.0 * float(sample_rms.max())
    levels = training_levels(cfg.noise_levels, sigma_min, sigma_max)

    init_rng = seeds.rng_for(cfg.seed, seeds.TRAIN_INIT)
    model = new_model(arch, init_rng, ema_rate=cfg.ema_rate, norm_scale=norm_scale,
                      sigma_min=sigma_min, sigma_max=sigma_max, seed=cfg.seed)
    if cfg.epochs == 0:
        return model, []

    optimizer = torch.optim.Adam(model.net.parameters(), lr=cfg.learning_rate,
                                 betas=(0.9, 0.999), eps=1e-8)
    loop_rng = seeds.rng_for(cfg.seed, seeds.TRAIN_LOOP)

    # Frozen evaluation set: one noisy realisation reused every epoch.
    eval_rng = seeds.rng_for(cfg.seed, seeds.EVAL)
    if validation is not None and len(validation):
        eval_src = validation / norm_scale
    else:
        eval_src = data[: min(n, 256)]
    eval_clean = _to_channels_batch(eval_src)
    eval_sigma = levels[eval_rng.integers(0, levels.size, size=eval_src.shape[0])]
    eval_noisy = _perturb_batch(eval_clean, eval_sigma, eval_rng)

    history: list[EpochLog] = []
    best_loss = math.inf
    best_state = {k: v.clone() for k, v in model.ema.state_dict().items()}
    best_epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        order = loop_rng.permutation(n)
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            batch = data[order[start:start + cfg.batch_size]]
            epoch_loss += train_step(model, batch, levels, loop_rng, optimizer)
            n_batches += 1
        test_loss = _eval_loss(model, eval_clean, eval_noisy, eval_sigma, cfg.batch_size)
        history.append(EpochLog(epoch, epoch_loss / n_batches, test_loss))
        if verbose:
            print(f"epoch {epoch:4d}  train {epoch_loss / n_batches:10.4f}  "
                  f"test {test_loss:10.4f}")
        if test_loss < best_loss:
            best_loss = test_loss
            best_state = {k: v.clone() for k, v in model.ema.state_dict().items()}
            best_epoch = epoch
    model.ema.load_state_dict(best_state)
    model.epoch = best_epoch
    return model, history
