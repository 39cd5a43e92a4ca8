"""Classical estimators: least squares, OMP, AMP, and linear MMSE."""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class SecondOrderPrior:
    """Mean and covariance of the vectorised channel (Hermitian PSD)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        n = self.mean.shape[0]
        if self.covariance.shape != (n, n):
            raise ValueError("covariance shape does not match the mean")
        scale = max(float(np.abs(self.covariance).max()), 1.0)
        if not np.allclose(self.covariance, self.covariance.conj().T,
                           rtol=0.0, atol=HERMITIAN_TOL * scale):
            raise ValueError("covariance must be Hermitian")
        eigs = np.linalg.eigvalsh(self.covariance)
        if eigs.min() < -HERMITIAN_TOL * scale:
            raise ValueError("covariance must be positive semidefinite")


def prior_from_samples(samples: np.ndarray, loading: float = 1e-6) -> SecondOrderPrior:
    """Empirical mean/covariance of vectorised samples with diagonal loading."""
    x = samples.reshape(samples.shape[0], -1)
    mean = x.mean(axis=0)
    centred = x - mean
    cov = centred.conj().T @ centred / x.shape[0]
    cov = 0.5 * (cov + cov.conj().T)
    cov += loading * np.eye(cov.shape[0])
    return SecondOrderPrior(mean=mean, covariance=cov)


def ls_estimate(y: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution (pseudo-inverse applied to y)."""
    if not np.any(phi):
        raise ValueError("measurement matrix must be non-zero")
    m, n = phi.shape
    if m <= n:
        # Full-row-rank fast path: pinv(phi) @ y = phi^H (phi phi^H)^{-1} y.
        gram = phi @ phi.conj().T
        try:
            return phi.conj().T @ scipy.linalg.cho_solve(
                scipy.linalg.cho_factor(gram), y)
        except scipy.linalg.LinAlgError:
            pass  # rank-deficient: fall through to the SVD route
    return np.linalg.lstsq(phi, y, rcond=None)[0]


def omp(y: np.ndarray, phi: np.ndarray, sparsity: int | None = None,
        residual_tol: float = 0.0) -> np.ndarray:
    """Orthogonal matching pursuit.

    Greedy loop: pick the column with the largest |correlation| against the
    residual (ties resolve to the lowest index), refit by least squares on
    the selected support, update the residual.  Stops after ``sparsity``
    atoms or once the residual norm drops to ``residual_tol``.
    """
    m, n = phi.shape
    if sparsity is None:
        sparsity = m
    if sparsity > m:
        raise ValueError("sparsity cannot exceed the number of measurements")
    x = np.zeros(n, dtype=np.complex128)
    support: list[int] = []
    coeffs = np.zeros(0, dtype=np.complex128)
    residual = y.copy()
    for _ in range(sparsity):
        if np.linalg.norm(residual) <= residual_tol:
            break
        corr = np.abs(phi.conj().T @ residual)
        corr[support] = -1.0  # never reselect
        pick = int(np.argmax(corr))  # argmax returns the lowest tied index
        support.append(pick)
        coeffs, *_ = np.linalg.lstsq(phi[:, support], y, rcond=None)
        residual = y - phi[:, support] @ coeffs
    if support:
        x[support] = coeffs
    return x


def _soft_threshold(u: np.ndarray, tau: float) -> np.ndarray:
    mag = np.abs(u)
    scale = np.maximum(0.0, 1.0 - tau / np.maximum(mag, 1e-300))
    return u * scale


def amp(y: np.ndarray, phi: np.ndarray, iters: int = 50, damping: float = 0.0,
        threshold_factor: float = 1.4, full_output: bool = False):
    """Approximate message passing with a complex soft-threshold denoiser.

    The Onsager reaction term uses the divergence of the complex soft
    threshold; the threshold each iteration is ``threshold_factor`` times the
    residual-based noise estimate ``||z|| / sqrt(m)``.  ``damping`` in [0, 1)
    averages consecutive iterates, which stabilises the loop on measurement
    matrices that are far from i.i.d.  If the residual grows by 10x over the
    best of the last five iterations the loop stops and the best-so-far
    iterate is returned with status ``"diverged"``.
    """
    if iters < 1:
        raise ValueError("need at least one iteration")
    if not (0.0 <= damping < 1.0):
        raise ValueError("damping must lie in [0, 1)")
    m, n = phi.shape
    x = np.zeros(n, dtype=np.complex128)
    z = y.astype(np.complex128).copy()
    best_x, best_res = x.copy(), float(np.linalg.norm(z))
    recent: list[float] = []  # residuals of the last five iterates
    status = "converged"
    for _ in range(iters):
        u = x + phi.conj().T @ z
        tau = threshold_factor * np.linalg.norm(z) / np.sqrt(m)
        x_new = _soft_threshold(u, tau)
        active = np.abs(u) > tau
        onsager = float(np.sum(1.0 - tau / (2.0 * np.abs(u[active])))) / m if active.any() else 0.0
        z_new = y - phi @ x_new + onsager * z
        x = damping * x + (1.0 - damping) * x_new
        z = damping * z + (1.0 - damping) * z_new
        res = float(np.linalg.norm(y - phi @ x))
        if res < best_res:
            best_res, best_x = res, x.copy()
        if recent and res > 10.0 * min(recent):
            status = "diverged"
            break
        recent.append(res)
        recent = recent[-5:]
    x_out = best_x if status == "diverged" else x
    if full_output:
        return x_out, {"status": status, "residual": float(np.linalg.norm(y - phi @ x_out))}
    return x_out


def mmse(y: np.ndarray, phi: np.ndarray, prior: SecondOrderPrior,
         sigma_n: float) -> np.ndarray:
    """Linear MMSE estimate mu + S Phi^H (Phi S Phi^H + sigma_n^2 I)^{-1} (y - Phi mu)."""
    mu, cov = prior.mean, prior.covariance
    m = phi.shape[0]
    inner = phi @ cov @ phi.conj().T + sigma_n ** 2 * np.eye(m)
    innovation = y - phi @ mu
    try:
        gain = scipy.linalg.cho_solve(scipy.linalg.cho_factor(inner), innovation)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        warnings.warn("rank-deficient MMSE inner matrix; using pseudo-inverse",
                      RuntimeWarning, stacklevel=2)
        gain = np.linalg.pinv(inner) @ innovation
    return mu + cov @ (phi.conj().T @ gain)
