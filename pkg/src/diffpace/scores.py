"""Score sources for the plug-and-play solver.

All scores follow the complex convention that yields ``-(h_t - h)/sigma^2``
for a point-mass prior (half the gradient of the log-density with respect to
the stacked real coordinates, packed as a complex vector).  The solver only
needs an object exposing ``score(h_t, sigma)`` on complex vectors.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .measurement import unvec, vec
from .network import (DenoiserModel, channels_to_complex, complex_to_channels,
                      score_from_denoiser)

SINGULAR_LOADING = 1e-12


def gaussian_exact_score(mu: np.ndarray, sigma_cov: np.ndarray,
                         h_t: np.ndarray, sigma: float) -> np.ndarray:
    """Analytic score -(Sigma + sigma^2 I)^{-1} (h_t - mu) of a Gaussian prior.

    The marginal of prior CN(mu, Sigma) after complex noise of level ``sigma``
    is CN(mu, Sigma + sigma^2 I); this is its score under the point-prior
    convention (Sigma = 0 reduces to -(h_t - mu)/sigma^2).
    """
    n = mu.shape[0]
    shifted = sigma_cov + sigma ** 2 * np.eye(n)
    residual = h_t - mu
    try:
        return -scipy.linalg.cho_solve(scipy.linalg.cho_factor(shifted), residual)
    except scipy.linalg.LinAlgError:
        shifted = shifted + SINGULAR_LOADING * np.eye(n)
        return -np.linalg.solve(shifted, residual)


@dataclass
class GaussianScoreSource:
    """Exact-score oracle for a Gaussian prior, eigendecomposed once."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        eigvals, eigvecs = np.linalg.eigh(self.covariance)
        self._eigvals = np.maximum(eigvals, 0.0)
        self._eigvecs = eigvecs

    def score(self, h_t: np.ndarray, sigma: float) -> np.ndarray:
        coeff = self._eigvecs.conj().T @ (h_t - self.mean)
        denom = self._eigvals + max(sigma ** 2, SINGULAR_LOADING)
        return -(self._eigvecs @ (coeff / denom))

    def posterior_mean(self, h_t: np.ndarray, sigma: float) -> np.ndarray:
        """E[h | h_t] = mu + Sigma (Sigma + sigma^2 I)^{-1} (h_t - mu)."""
        coeff = self._eigvecs.conj().T @ (h_t - self.mean)
        shrink = self._eigvals / (self._eigvals + sigma ** 2)
        return self.mean + self._eigvecs @ (shrink * coeff)


@dataclass(frozen=True)
class PointScoreSource:
    """Point-mass prior around a known channel: score -(h_t - h)/sigma^2."""

    h: np.ndarray

    def score(self, h_t: np.ndarray, sigma: float) -> np.ndarray:
        return -(h_t - self.h) / sigma ** 2


@dataclass(frozen=True)
class DenoiserScoreSource:
    """Trained-denoiser score on complex beamspace vectors.

    Undoes the training normalisation: for data scaled by ``c`` the score of
    the raw variable at level ``sigma`` is ``score_norm(h_t/c, sigma/c)/c``.
    Vectors are column-major vectorisations of the model's grid shape.
    """

    model: DenoiserModel

    @property
    def sigma_max(self) -> float:
        """Largest usable raw-scale noise level."""
        return self.model.sigma_max * self.model.norm_scale

    def score(self, h_t: np.ndarray, sigma: float) -> np.ndarray:
        c = self.model.norm_scale
        grid = unvec(h_t, self.model.arch.grid_shape) / c
        s = score_from_denoiser(self.model, complex_to_channels(grid), sigma / c)
        return vec(channels_to_complex(s)) / c

    def denoise(self, h_t: np.ndarray, sigma: float) -> np.ndarray:
        """Denoised complex vector (posterior-mean estimate) at level sigma."""
        return h_t + sigma ** 2 * self.score(h_t, sigma)
