"""Noise schedule for the variance-exploding diffusion with sigma(t) = t.

The time grid equals the sigma grid, so a schedule is just the descending
sequence sigma_{t_K} > ... > sigma_{t_1} > sigma_{t_0} = 0 with geometric
spacing between sigma_max and sigma_min.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Descending sigma levels, last entry exactly 0."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = self.sigmas
        if s.ndim != 1 or s.size < 2:
            raise ValueError("schedule needs at least [sigma_max, 0]")
        if s[-1] != 0.0:
            raise ValueError("schedule must end at sigma = 0")
        if np.any(np.diff(s) >= 0):
            raise ValueError("schedule must be strictly decreasing")

    @property
    def n_steps(self) -> int:
        return self.sigmas.size - 1

    def sigma_at(self, i: int) -> float:
        """sigma_{t_i} for step index i in 0..K (i = K is sigma_max)."""
        if not 0 <= i <= self.n_steps:
            raise ValueError(f"step index {i} outside 0..{self.n_steps}")
        return float(self.sigmas[self.n_steps - i])

    @property
    def sigma_max(self) -> float:
        return float(self.sigmas[0])

    @property
    def sigma_min(self) -> float:
        return float(self.sigmas[-2])


def make_schedule(n_steps: int, sigma_min: float, sigma_max: float) -> NoiseSchedule:
    """Geometric schedule of ``n_steps`` levels from sigma_max down to sigma_min, then 0."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    if not (0.0 < sigma_min < sigma_max):
        raise ValueError("need 0 < sigma_min < sigma_max")
    if n_steps == 1:
        levels = np.array([sigma_max])
    else:
        ratio = sigma_min / sigma_max
        levels = sigma_max * ratio ** (np.arange(n_steps) / (n_steps - 1))
    return NoiseSchedule(sigmas=np.concatenate([levels, [0.0]]))


def training_levels(n_levels: int, sigma_min: float, sigma_max: float) -> np.ndarray:
    """Discrete sigma levels used during training (geometric, ascending)."""
    if n_levels < 1:
        raise ValueError("need at least one level")
    if n_levels == 1:
        return np.array([sigma_max])
    return np.geomspace(sigma_min, sigma_max, n_levels)


def perturb(h: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """h + sigma * n with n standard complex Gaussian per component."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return h.copy()
    noise = (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) / np.sqrt(2)
    return h + sigma * noise
