"""Plug-and-play channel estimator and the unconditional reverse-ODE sampler.

One estimation run walks the noise schedule from sigma_max down to 0; each
step applies the prior (one Euler step of the probability-flow ODE using the
score source) and then a relaxed projection onto the measurement-consistency
subspace.  The complex conjugate transpose is used in the projection, as
required for complex data.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .schedule import NoiseSchedule

GRAM_LOADING = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Step count, prior weight, smoothing weight, schedule, and init seed.

    ``data_step`` selects how the measurement-consistency subproblem is
    solved each iteration.  ``"prox"`` (default) applies the exact
    regularised solution ``z + Phi^H (Phi Phi^H + I/rho_i)^{-1} (y - Phi z)``,
    which enforces each measured direction in proportion to its singular
    value and stays stable on ill-conditioned pilot matrices.
    ``"project"`` applies the relaxed hard projection
    ``z + rho_i Phi^H (Phi Phi^H)^{-1} (y - Phi z)``; the two coincide as
    ``rho_i`` grows on well-conditioned matrices.
    """

    n_steps: int
    lam: float
    beta: float
    schedule: NoiseSchedule
    seed: int = 0
    data_step: str = "prox"

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("prior weight lambda must be positive")
        if self.beta < 0:
            raise ValueError("smoothing weight beta must be non-negative")
        if self.n_steps < 1:
            raise ValueError("need at least one step")
        if self.schedule.n_steps != self.n_steps:
            raise ValueError("schedule length does not match the step count")
        if self.data_step not in ("prox", "project"):
            raise ValueError("data_step must be 'prox' or 'project'")


def delta_sigma(schedule: NoiseSchedule, i: int) -> float:
    """Euler step length sigma_{t_i} * (t_i - t_{i-1}) with sigma(t) = t."""
    if not 1 <= i <= schedule.n_steps:
        raise ValueError(f"step index {i} outside 1..{schedule.n_steps}")
    return schedule.sigma_at(i) * (schedule.sigma_at(i) - schedule.sigma_at(i - 1))


def rho(schedule: NoiseSchedule, i: int, lam: float, beta: float,
        sigma_n: float) -> float:
    """Projection step length delta_sigma / (2*lambda*sigma_n^2 + beta*sigma_i^2)."""
    denom = 2.0 * lam * sigma_n ** 2 + beta * schedule.sigma_at(i) ** 2
    if denom <= 0:
        raise ValueError("projection step length has a non-positive denominator")
    return delta_sigma(schedule, i) / denom


def prior_step(score_source, h_t: np.ndarray, sigma: float,
               d_sigma: float) -> np.ndarray:
    """One prior update z = h_t + delta_sigma * score(h_t, sigma)."""
    if sigma <= 0:
        raise ValueError("prior step requires sigma > 0")
    s = score_source.score(h_t, sigma)
    if not np.all(np.isfinite(s)):
        raise NumericalError(f"score source returned non-finite values at sigma={sigma:g}")
    return h_t + d_sigma * s


class GramSolver:
    """Solves (Phi Phi^H + gamma I) x = rhs for any gamma >= 0.

    The Gram matrix is eigendecomposed once per measurement set, so shifted
    solves across all solver steps (and all methods sharing Phi) cost two
    matrix-vector products each.  A rank-deficient Gram at gamma = 0 falls
    back to a small diagonal loading and is flagged.
    """

    def __init__(self, phi: np.ndarray):
        m, n = phi.shape
        if m > n:
            raise ValueError("projection expects at most as many measurements as unknowns")
        gram = phi @ phi.conj().T
        eigvals, eigvecs = np.linalg.eigh(gram)
        self._eigvals = np.maximum(eigvals, 0.0)
        self._eigvecs = eigvecs
        scale = max(float(self._eigvals.max()), 1.0)
        self.regularized = bool(self._eigvals.min() <= GRAM_LOADING * scale)
        self._loading = GRAM_LOADING * scale if self.regularized else 0.0
        if self.regularized:
            warnings.warn("rank-deficient Phi Phi^H; solving with diagonal loading",
                          RuntimeWarning, stacklevel=2)

    def solve(self, rhs: np.ndarray, gamma: float = 0.0) -> np.ndarray:
        denom = self._eigvals + gamma + (self._loading if gamma == 0.0 else 0.0)
        return self._eigvecs @ ((self._eigvecs.conj().T @ rhs) / denom)


def consistency_project(z: np.ndarray, y: np.ndarray, phi: np.ndarray,
                        rho_i: float, gram: GramSolver | None = None) -> np.ndarray:
    """Relaxed projection z + rho * Phi^H (Phi Phi^H)^{-1} (y - Phi z).

    rho = 1 lands exactly on the consistency subspace; in general the
    residual shrinks by the factor |1 - rho|.
    """
    if gram is None:
        gram = GramSolver(phi)
    return z + rho_i * (phi.conj().T @ gram.solve(y - phi @ z))


def consistency_prox(z: np.ndarray, y: np.ndarray, phi: np.ndarray,
                     rho_i: float, gram: GramSolver | None = None) -> np.ndarray:
    """Exact solution of the consistency subproblem with pull-back weight.

    Solves argmin_h ||y - Phi h||^2 / (2 sigma_n^2) + mu ||h - z||^2 with
    1/rho_i = 2 mu sigma_n^2, which by the push-through identity equals
    z + Phi^H (Phi Phi^H + I/rho_i)^{-1} (y - Phi z).  Each measured
    direction with singular value s is enforced by the factor
    s^2/(s^2 + 1/rho_i), so weak directions never amplify noise; as
    rho_i -> inf this approaches the hard projection.
    """
    if rho_i <= 0:
        raise ValueError("prox step needs rho > 0")
    if gram is None:
        gram = GramSolver(phi)
    return z + phi.conj().T @ gram.solve(y - phi @ z, gamma=1.0 / rho_i)


@dataclass(frozen=True)
class StepRecord:
    step: int
    sigma: float
    rho: float
    residual_norm: float
    step_norm: float


@dataclass
class SolverDiagnostics:
    records: list[StepRecord] = field(default_factory=list)
    gram_regularized: bool = False

    def write_csv(self, stream) -> None:
        stream.write("step,sigma,rho,residual_norm,step_norm\n")
        for r in self.records:
            stream.write(f"{r.step},{r.sigma!r},{r.rho!r},"
                         f"{r.residual_norm!r},{r.step_norm!r}\n")


def _init_iterate(dim: int, sigma_max: float, rng: np.random.Generator) -> np.ndarray:
    draw = (rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) / np.sqrt(2)
    return sigma_max * draw


def diffpace_estimate(score_source, measurement, cfg: SolverConfig,
                      gram: GramSolver | None = None
                      ) -> tuple[np.ndarray, SolverDiagnostics]:
    """Estimate the vectorised beamspace channel from one measurement set.

    Runs steps i = K..1 of the schedule: prior step, then the consistency
    data step with pull-back weight rho_i (prox or hard projection per the
    config).  Returns the final iterate and per-step diagnostics.  ``gram``
    may carry a pre-factorised Phi Phi^H to share across runs on the same
    measurement matrix.
    """
    phi, y = measurement.phi, measurement.y
    dim = phi.shape[1]
    if gram is None:
        gram = GramSolver(phi)
    data_step = consistency_prox if cfg.data_step == "prox" else consistency_project
    rng = np.random.default_rng(cfg.seed)
    h = _init_iterate(dim, cfg.schedule.sigma_max, rng)
    diag = SolverDiagnostics(gram_regularized=gram.regularized)
    for i in range(cfg.n_steps, 0, -1):
        sigma_i = cfg.schedule.sigma_at(i)
        d_sig = delta_sigma(cfg.schedule, i)
        rho_i = rho(cfg.schedule, i, cfg.lam, cfg.beta, measurement.sigma_n)
        try:
            z = prior_step(score_source, h, sigma_i, d_sig)
        except NumericalError as exc:
            raise NumericalError(f"{exc} (step {i} of {cfg.n_steps})") from exc
        h_next = data_step(z, y, phi, rho_i, gram=gram)
        diag.records.append(StepRecord(
            step=i, sigma=sigma_i, rho=rho_i,
            residual_norm=float(np.linalg.norm(y - phi @ h_next)),
            step_norm=float(np.linalg.norm(h_next - h)),
        ))
        h = h_next
    return h, diag


def ode_sample(score_source, schedule: NoiseSchedule, dim: int,
               rng: np.random.Generator) -> np.ndarray:
    """Unconditional draw: Euler integration of the probability-flow ODE.

    Starts from CN(0, sigma_max^2 I) and applies
    h <- h + sigma_i (t_i - t_{i-1}) * score(h, sigma_i) down the schedule.
    """
    h = _init_iterate(dim, schedule.sigma_max, rng)
    for i in range(schedule.n_steps, 0, -1):
        h = prior_step(score_source, h, schedule.sigma_at(i), delta_sigma(schedule, i))
    return h
