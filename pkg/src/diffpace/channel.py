"""Channel synthesis: spherical, planar, and hybrid planar-spherical models.

The hybrid model treats each subarray pair as a far-field (planar-wave) link
while the phase relations *between* subarrays follow spherical-wave geometry.
``sample_scenario`` realises that premise with a shared-reflector construction:
every path is a scatter point seen by all subarrays, so all subarrays share
the same path count while their per-path phases (and, optionally, angles)
differ according to the subarray center positions.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .geometry import ArrayConfig, Codebook, upa_steering

ROUNDTRIP_TOL = 1e-10


@dataclass(frozen=True)
class PathParams:
    """Per-path, per-subarray-pair parameters of a hybrid channel.

    Shapes (with L paths): ``gain`` and ``phase`` are (k_r, k_t, L);
    arrival angles ``aoa_az``/``aoa_el`` are (k_r, L); departure angles
    ``aod_az``/``aod_el`` are (k_t, L).  Gains are linear magnitudes.
    """

    gain: np.ndarray
    phase: np.ndarray
    aoa_az: np.ndarray
    aoa_el: np.ndarray
    aod_az: np.ndarray
    aod_el: np.ndarray

    def __post_init__(self):
        k_r, k_t, L = self.gain.shape
        if self.phase.shape != (k_r, k_t, L):
            raise ValueError("phase shape does not match gain shape")
        if self.aoa_az.shape != (k_r, L) or self.aoa_el.shape != (k_r, L):
            raise ValueError("arrival angle arrays must be (k_r, L)")
        if self.aod_az.shape != (k_t, L) or self.aod_el.shape != (k_t, L):
            raise ValueError("departure angle arrays must be (k_t, L)")
        if np.any(self.gain < 0):
            raise ValueError("gains must be non-negative")
        for arr in (self.gain, self.phase, self.aoa_az, self.aoa_el,
                    self.aod_az, self.aod_el):
            if not np.all(np.isfinite(arr)):
                raise ValueError("path parameters must be finite")

    @property
    def n_paths(self) -> int:
        return self.gain.shape[2]

    @property
    def k_r(self) -> int:
        return self.gain.shape[0]

    @property
    def k_t(self) -> int:
        return self.gain.shape[1]


@dataclass(frozen=True)
class ChannelSample:
    """One realization: spatial matrix, its beamspace transform, parameters."""

    spatial: np.ndarray
    beamspace: np.ndarray
    paths: PathParams | None = None


@dataclass(frozen=True)
class ScenarioSpec:
    """Synthetic scenario descriptor for the hybrid-channel sampler.

    Path powers decay geometrically (``power_decay`` is the per-path power
    ratio) and are normalised per draw so that E||H||_F^2 = n_t * n_r.
    ``angular_spread`` scales the per-subarray deviation of the angles from
    the path's base direction (0 collapses all subarrays onto the base
    angles, 2 doubles the geometric deviation).
    """

    paths_min: int = 1
    paths_max: int = 5
    azimuth_range: tuple[float, float] = (-np.pi / 3, np.pi / 3)
    elevation_range: tuple[float, float] = (-np.pi / 6, np.pi / 6)
    power_decay: float = 0.4
    subarray_spacing_wl: float = 8.0
    wavelength: float = 0.005
    reflector_range: tuple[float, float] = (5.0, 50.0)
    angular_spread: float = 1.0

    def __post_init__(self):
        if self.paths_min < 0 or self.paths_max < self.paths_min:
            raise ValueError("need 0 <= paths_min <= paths_max")
        if self.azimuth_range[1] < self.azimuth_range[0]:
            raise ValueError("empty azimuth range")
        if self.elevation_range[1] < self.elevation_range[0]:
            raise ValueError("empty elevation range")
        if not ( 0.0 < self.power_decay <= 1.0):
            raise ValueError("power_decay must lie in (0, 1]")
        if self.reflector_range[0] <= 0 or self.reflector_range[1] < self.reflector_range[0]:
            raise ValueError("reflector_range must be positive and ordered")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("azimuth_range", "elevation_range", "reflector_range"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        for key in ("azimuth_range", "elevation_range", "reflector_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _rank1_block(gains, phases, aoa_az, aoa_el, aod_az, aod_el, rx_shape, tx_shape):
    """Sum over paths of gain * e^{-j*phase} * a_rx a_tx^H for one block."""
    n_r = rx_shape[0] * rx_shape[1]
    n_t = tx_shape[0] * tx_shape[1]
    block = np.zeros((n_r, n_t), dtype=np.complex128)
    for l in range(len(gains)):
        a_r = upa_steering(aoa_az[l], aoa_el[l], *rx_shape)
        a_t = upa_steering(aod_az[l], aod_el[l], *tx_shape)
        block += gains[l] * np.exp(-1j * phases[l]) * np.outer(a_r, a_t.conj())
    return block


def pwm_channel(paths: PathParams, cfg: ArrayConfig) -> np.ndarray:
    """Planar-wave channel matrix; requires a single subarray on each side."""
    if paths.k_t != 1 or paths.k_r != 1 or cfg.k_t != 1 or cfg.k_r != 1:
        raise ValueError("planar-wave model expects one subarray per side")
    return _rank1_block(
        paths.gain[0, 0], paths.phase[0, 0],
        paths.aoa_az[0], paths.aoa_el[0], paths.aod_az[0], paths.aod_el[0],
        cfg.rx_subarray_shape, cfg.tx_subarray_shape,
    )


def swm_channel(gains: np.ndarray, distances: np.ndarray, wavelength: float) -> np.ndarray:
    """Spherical-wave channel from per-antenna-pair path gains and distances.

    ``gains`` and ``distances`` have shape (n_r, n_t, L); entry (r, t) of the
    result is the sum over paths of ``gains * exp(-j*2*pi*distances/wavelength)``.
    """
    gains = np.asarray(gains, dtype=np.float64)
    distances = np.asarray(distances, dtype=np.float64)
    if gains.shape != distances.shape or gains.ndim != 3:
        raise ValueError("gains and distances must share shape (n_r, n_t, L)")
    if np.any(distances <= 0):
        raise ValueError("distances must be positive")
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    phase = np.exp(-2j * np.pi * distances / wavelength)
    return np.sum(gains * phase, axis=2)


def hpsm_channel(paths: PathParams, cfg: ArrayConfig) -> np.ndarray:
    """Hybrid planar-spherical channel: planar-wave blocks per subarray pair."""
    if paths.k_t != cfg.k_t or paths.k_r != cfg.k_r:
        raise ValueError("path parameters do not match the array's subarray counts")
    n_rs, n_ts = cfg.n_r_sub, cfg.n_t_sub
    h = np.zeros((cfg.n_r, cfg.n_t), dtype=np.complex128)
    for kr in range(cfg.k_r):
        for kt in range(cfg.k_t):
            h[kr * n_rs:(kr + 1) * n_rs, kt * n_ts:(kt + 1) * n_ts] = _rank1_block(
                paths.gain[kr, kt], paths.phase[kr, kt],
                paths.aoa_az[kr], paths.aoa_el[kr],
                paths.aod_az[kt], paths.aod_el[kt],
                cfg.rx_subarray_shape, cfg.tx_subarray_shape,
            )
    return h


def to_beamspace(h: np.ndarray, codebooks: tuple[Codebook, Codebook]) -> np.ndarray:
    """Angular-domain transform A_R^H @ H @ A_T for unitary codebooks."""
    a_r, a_t = codebooks
    if h.shape != (a_r.size, a_t.size):
        raise ValueError("codebook dimensions do not match the channel matrix")
    return a_r.matrix.conj().T @ h @ a_t.matrix


def from_beamspace(h_b: np.ndarray, codebooks: tuple[Codebook, Codebook]) -> np.ndarray:
    """Inverse of :func:`to_beamspace`: A_R @ Hb @ A_T^H."""
    a_r, a_t = codebooks
    if h_b.shape != (a_r.size, a_t.size):
        raise ValueError("codebook dimensions do not match the beamspace matrix")
    return a_r.matrix @ h_b @ a_t.matrix.conj().T


def _direction(az: float, el: float) -> np.ndarray:
    """Unit vector with x = sin(az)cos(el), y = cos(az)cos(el), z = sin(el)."""
    return np.array([
        np.sin(az) * np.cos(el),
        np.cos(az) * np.cos(el),
        np.sin(el),
    ])


def _angles_of(v: np.ndarray) -> tuple[float, float]:
    """Inverse of :func:`_direction` for a non-zero vector."""
    r = np.linalg.norm(v)
    el = np.arcsin(np.clip(v[2] / r, -1.0, 1.0))
    az = np.arctan2(v[0], v[1])
    return az, el


def sample_scenario(rng: np.random.Generator, spec: ScenarioSpec, cfg: ArrayConfig) -> PathParams:
    """Draw hybrid-channel path parameters from the shared-reflector model.

    Each path places one scatter point per link end at a random direction
    inside the configured angle ranges and a random (log-uniform) range.
    Subarray centers sit ``subarray_spacing_wl`` wavelengths apart along the
    x axis; per-subarray angles and path lengths follow from the geometry,
    which yields spherical-wave phase offsets between subarrays.
    """
    L = int(rng.integers(spec.paths_min, spec.paths_max + 1))
    k_r, k_t = cfg.k_r, cfg.k_t

    gain = np.zeros((k_r, k_t, L))
    phase = np.zeros((k_r, k_t, L))
    aoa_az = np.zeros((k_r, L))
    aoa_el = np.zeros((k_r, L))
    aod_az = np.zeros((k_t, L))
    aod_el = np.zeros((k_t, L))

    spacing = spec.subarray_spacing_wl * spec.wavelength
    tx_centers = (np.arange(k_t) - (k_t - 1) / 2) * spacing
    rx_centers = (np.arange(k_r) - (k_r - 1) / 2) * spacing

    if L > 0:
        powers = spec.power_decay ** np.arange(1, L + 1)
        powers *= (cfg.n_t * cfg.n_r / (k_t * k_r)) / powers.sum()
        amps = np.sqrt(powers)

    lo, hi = np.log(spec.reflector_range)
    for l in range(L):
        base = {
            "aod": (rng.uniform(*spec.azimuth_range), rng.uniform(*spec.elevation_range)),
            "aoa": (rng.uniform(*spec.azimuth_range), rng.uniform(*spec.elevation_range)),
        }
        dist = {side: float(np.exp(rng.uniform(lo, hi))) for side in ("aod", "aoa")}
        chi = rng.uniform(0.0, 2 * np.pi)

        # Per-subarray view of the scatter point on each side of the link.
        path_len = {"aod": np.zeros(k_t), "aoa": np.zeros(k_r)}
        for side, centers, az_out, el_out in (
            ("aod", tx_centers, aod_az, aod_el),
            ("aoa", rx_centers, aoa_az, aoa_el),
        ):
            az0, el0 = base[side]
            point = dist[side] * _direction(az0, el0)
            for k, cx in enumerate(centers):
                v = point - np.array([cx, 0.0, 0.0])
                path_len[side][k] = np.linalg.norm(v)
                az_k, el_k = _angles_of(v)
                az_out[k, l] = az0 + spec.angular_spread * (az_k - az0)
                el_out[k, l] = el0 + spec.angular_spread * (el_k - el0)

        for kr in range(k_r):
            for kt in range(k_t):
                gain[kr, kt, l] = amps[l]
                total = path_len["aod"][kt] + path_len["aoa"][kr]
                phase[kr, kt, l] = (2 * np.pi * total / spec.wavelength + chi) % (2 * np.pi)

    return PathParams(gain, phase, aoa_az, aoa_el, aod_az, aod_el)
