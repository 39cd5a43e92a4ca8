"""Pilot training, measurement matrix assembly, and the NMSE metric.

Vectorisation is column-major throughout (``vec(A X B) = (B^T kron A) vec(X)``),
which makes the measurement matrix ``Phi = (A_T^H P)^T kron (W^H A_R)`` act on
``vec`` of the beamspace matrix exactly as the stacked training equation.

The nominal SNR is defined against the scenario ensemble:
``snr = E||Phi h||^2 / E||vec(N)||^2`` with both expectations taken over the
ensemble (channels, pilot plans, noise).  Because every combiner entry has
modulus ``1/sqrt(n_r)``, the combined-noise energy is exactly
``sigma_n^2 * m_t * m_r * l_r``, so calibrating the noise level only needs the
ensemble's mean per-measurement signal power (1.0 for ensembles normalised to
E||H||_F^2 = n_t * n_r; :func:`ensemble_signal_power` estimates it otherwise).
"""

from dataclasses import dataclass

import numpy as np

from .geometry import ArrayConfig, Codebook

NMSE_FLOOR_DB = -200.0


def vec(m: np.ndarray) -> np.ndarray:
    """Column-major vectorisation."""
    return m.reshape(-1, order="F")


def unvec(v: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return v.reshape(shape, order="F")


def quantize_phase(x: complex, n_b: int) -> complex:
    """Nearest element of the 2^n_b-point unit-modulus phase alphabet.

    Ties between two alphabet points resolve toward the smaller phase index.
    """
    if n_b < 1:
        raise ValueError("need at least one phase-shifter bit")
    if x == 0:
        raise ValueError("cannot quantize the phase of zero")
    levels = 1 << n_b
    step = 2 * np.pi / levels
    angle = np.angle(x) % (2 * np.pi)
    q = int(np.ceil(angle / step - 0.5)) % levels
    return np.exp(2j * np.pi * q / levels)


def _random_phases(rng: np.random.Generator, shape: tuple[int, ...], n_b: int) -> np.ndarray:
    q = rng.integers(0, 1 << n_b, size=shape)
    return np.exp(2j * np.pi * q / (1 << n_b))


@dataclass(frozen=True)
class PilotPlan:
    """Training frames: stacked combiners, pilot matrix, and the symbols.

    ``combiners`` is n_r x (l_r * m_r) with slot r occupying columns
    ``[r*l_r, (r+1)*l_r)``; ``pilots`` is n_t x m_t with column t equal to
    F_t @ s_t; ``symbols`` holds the unit-modulus QPSK symbols (l_t x m_t).
    """

    m_t: int
    m_r: int
    n_b: int
    combiners: np.ndarray
    pilots: np.ndarray
    symbols: np.ndarray
    n_t: int
    n_r: int
    l_t: int
    l_r: int

    @property
    def n_measurements(self) -> int:
        return self.m_t * self.m_r * self.l_r

    @property
    def pilot_ratio(self) -> float:
        return self.n_measurements / (self.n_t * self.n_r)

    def combiner_slot(self, r: int) -> np.ndarray:
        return self.combiners[:, r * self.l_r:(r + 1) * self.l_r]


def sample_pilot_plan(rng: np.random.Generator, cfg: ArrayConfig,
                      m_t: int, m_r: int, n_b: int) -> PilotPlan:
    """Random constant-modulus training plan with quantized phases.

    Combiner and precoder phases are drawn uniformly from the 2^n_b phase
    alphabet; the pilot symbols are unit-modulus QPSK, which satisfies
    E{s s^H} = I with the stream count equal to the Tx RF-chain count.
    """
    if m_t < 1 or m_r < 1:
        raise ValueError("need at least one training slot per side")
    combiners = _random_phases(rng, (cfg.n_r, cfg.l_r * m_r), n_b) / np.sqrt(cfg.n_r)
    qpsk = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, size=(cfg.l_t, m_t))))
    pilots = np.empty((cfg.n_t, m_t), dtype=np.complex128)
    for t in range(m_t):
        f_t = _random_phases(rng, (cfg.n_t, cfg.l_t), n_b) / np.sqrt(cfg.n_t)
        pilots[:, t] = f_t @ qpsk[:, t]
    return PilotPlan(
        m_t=m_t, m_r=m_r, n_b=n_b,
        combiners=combiners, pilots=pilots, symbols=qpsk,
        n_t=cfg.n_t, n_r=cfg.n_r, l_t=cfg.l_t, l_r=cfg.l_r,
    )


def build_measurement_matrix(plan: PilotPlan, codebooks: tuple[Codebook, Codebook]) -> np.ndarray:
    """Measurement matrix satisfying Phi @ vec(Hb) = vec(W^H A_R Hb A_T^H P)."""
    a_r, a_t = codebooks
    if a_r.size != plan.n_r or a_t.size != plan.n_t:
        raise ValueError("codebook dimensions do not match the pilot plan")
    right = a_t.matrix.conj().T @ plan.pilots          # n_t x m_t
    left = plan.combiners.conj().T @ a_r.matrix        # l_r*m_r x n_r
    phi = np.kron(right.T, left)
    if not np.all(np.isfinite(phi)):
        raise ValueError("measurement matrix contains non-finite entries")
    return phi


@dataclass(frozen=True)
class MeasurementSet:
    """One vectorised observation with its matrix and noise level."""

    y: np.ndarray
    phi: np.ndarray
    sigma_n: float
    snr_db: float

    def __post_init__(self):
        rows = self.phi.shape[0]
        if self.y.shape != (rows,):
            raise ValueError("observation length does not match the matrix rows")


def measure(h_b: np.ndarray, plan: PilotPlan, snr_db: float,
            rng: np.random.Generator,
            codebooks: tuple[Codebook, Codebook],
            signal_power: float | None = None) -> MeasurementSet:
    """Simulate the pilot observation of one beamspace channel.

    White complex Gaussian noise enters at the antennas and is coloured by
    the combiners before vectorisation.  ``signal_power`` is the ensemble's
    mean per-measurement signal energy E||Phi h||^2 / n_meas used to place
    the nominal SNR; the default is the closed-form value ``l_t`` that holds
    for ensembles normalised to E||H||_F^2 = n_t * n_r (each pilot column
    carries l_t units of power and the constant-modulus combiner is
    energy-preserving on average).  :func:`ensemble_signal_power` estimates
    it empirically for anything else.
    """
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    if signal_power is None:
        signal_power = float(plan.l_t)
    phi = build_measurement_matrix(plan, codebooks)
    sigma_n = float(np.sqrt(signal_power / 10.0 ** (snr_db / 10.0)))
    noiseless = phi @ vec(h_b)
    return MeasurementSet(
        y=noiseless + combined_noise(plan, sigma_n, rng),
        phi=phi, sigma_n=sigma_n, snr_db=snr_db,
    )


def combined_noise(plan: PilotPlan, sigma_n: float, rng: np.random.Generator) -> np.ndarray:
    """vec of the combiner-coloured noise matrix for all training slots."""
    noise = np.zeros((plan.m_r * plan.l_r, plan.m_t), dtype=np.complex128)
    if sigma_n > 0:
        for t in range(plan.m_t):
            for r in range(plan.m_r):
                at_antennas = sigma_n * _std_complex(rng, plan.n_r)
                noise[r * plan.l_r:(r + 1) * plan.l_r, t] = (
                    plan.combiner_slot(r).conj().T @ at_antennas
                )
    return vec(noise)


def _std_complex(rng: np.random.Generator, n: int) -> np.ndarray:
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)


def ensemble_signal_power(plan: PilotPlan, h_samples: np.ndarray,
                          codebooks: tuple[Codebook, Codebook]) -> float:
    """Mean per-measurement signal energy of ``plan`` over channel samples."""
    phi = build_measurement_matrix(plan, codebooks)
    energy = [np.sum(np.abs(phi @ vec(h)) ** 2) for h in h_samples]
    return float(np.mean(energy) / plan.n_measurements)


def nmse(h_true: np.ndarray, h_est: np.ndarray) -> float:
    """10*log10(||h - h_est||^2 / ||h||^2), floored at -200 dB."""
    ref = np.sum(np.abs(h_true) ** 2)
    if ref == 0:
        raise ValueError("reference channel must be non-zero")
    err = np.sum(np.abs(h_true - h_est) ** 2)
    if err == 0:
        return NMSE_FLOOR_DB
    return max(float(10.0 * np.log10(err / ref)), NMSE_FLOOR_DB)
