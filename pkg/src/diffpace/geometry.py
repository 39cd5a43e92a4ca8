"""Array geometries, steering vectors, and angular-domain codebooks.

Conventions fixed here and used everywhere else:

* antennas of an ``n_x``-by-``n_z`` planar subarray are indexed row-major
  with the x index outer and the z index inner, so a steering vector is the
  Kronecker product of the x-axis phase vector with the z-axis phase vector;
* intra-subarray element spacing is half a wavelength (the ``pi`` factor in
  the phase exponents); inter-subarray spacing is carried separately by the
  channel scenario as a multiple of the wavelength.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class ArrayConfig:
    """Antenna / subarray / RF-chain geometry for both link ends."""

    n_t: int
    n_r: int
    k_t: int
    k_r: int
    l_t: int
    l_r: int
    tx_subarray_shape: tuple[int, int]
    rx_subarray_shape: tuple[int, int]

    def __post_init__(self):
        for name in ("n_t", "n_r", "k_t", "k_r", "l_t", "l_r"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_t % self.k_t != 0:
            raise ValueError("n_t must be divisible by k_t")
        if self.n_r % self.k_r != 0:
            raise ValueError("n_r must be divisible by k_r")
        tx_nx, tx_nz = self.tx_subarray_shape
        rx_nx, rx_nz = self.rx_subarray_shape
        if tx_nx * tx_nz != self.n_t // self.k_t:
            raise ValueError("tx_subarray_shape does not tile n_t / k_t antennas")
        if rx_nx * rx_nz != self.n_r // self.k_r:
            raise ValueError("rx_subarray_shape does not tile n_r / k_r antennas")
        if self.l_t > self.n_t or self.l_r > self.n_r:
            raise ValueError("RF chain count cannot exceed antenna count")

    @property
    def n_t_sub(self) -> int:
        return self.n_t // self.k_t

    @property
    def n_r_sub(self) -> int:
        return self.n_r // self.k_r


@dataclass(frozen=True)
class Codebook:
    """Unitary angular-domain transform; ``kind`` is 'full-dft' or 'block-diagonal'."""

    matrix: np.ndarray
    kind: str
    block_sizes: tuple[int, ...] = field(default=())

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("codebook matrix must be square")
        if not _is_unitary(m):
            raise ValueError("codebook matrix is not unitary within tolerance")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def _is_unitary(m: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    n = m.shape[0]
    return np.allclose(m.conj().T @ m, np.eye(n), rtol=0.0, atol=tol * max(n, 1))


def upa_steering(theta: float, phi: float, n_x: int, n_z: int) -> np.ndarray:
    """Steering vector of an ``n_x``-by-``n_z`` half-wavelength planar array.

    ``theta`` is the azimuth and ``phi`` the elevation in radians.  The
    returned vector is ``kron(x_phases, z_phases) / sqrt(n_x * n_z)`` with
    per-element phases ``exp(-j*pi*sin(theta)*cos(phi)*m)`` along x and
    ``exp(-j*pi*sin(phi)*m)`` along z; its Euclidean norm is 1.
    """
    if n_x < 1 or n_z < 1:
        raise ValueError("array dimensions must be >= 1")
    if not (np.isfinite(theta) and np.isfinite(phi)):
        raise ValueError("angles must be finite")
    mx = np.arange(n_x)
    mz = np.arange(n_z)
    ax = np.exp(-1j * np.pi * np.sin(theta) * np.cos(phi) * mx)
    az = np.exp(-1j * np.pi * np.sin(phi) * mz)
    return np.kron(ax, az) / np.sqrt(n_x * n_z)


def dft_codebook(n_x: int, n_z: int) -> Codebook:
    """Unitary 2D-DFT codebook whose columns sample the spatial-frequency grid.

    The column at grid index ``(k_x, k_z)`` equals the steering vector with
    ``sin(theta)cos(phi) = 2*k_x/n_x`` and ``sin(phi) = 2*k_z/n_z``, matching
    the Kronecker antenna ordering of :func:`upa_steering`.
    """
    if n_x < 1 or n_z < 1:
        raise ValueError("array dimensions must be >= 1")
    fx = scipy.linalg.dft(n_x, scale="sqrtn")
    fz = scipy.linalg.dft(n_z, scale="sqrtn")
    return Codebook(matrix=np.kron(fx, fz), kind="full-dft")


def blkdiag_codebook(blocks: list[Codebook]) -> Codebook:
    """Block-diagonal codebook assembled from per-subarray unitary blocks."""
    if not blocks:
        raise ValueError("need at least one block")
    mats = [b.matrix for b in blocks]
    full = scipy.linalg.block_diag(*mats)
    return Codebook(
        matrix=full,
        kind="block-diagonal" if len(blocks) > 1 else blocks[0].kind,
        block_sizes=tuple(b.size for b in blocks),
    )


def subarray_codebooks(cfg: ArrayConfig) -> tuple[Codebook, Codebook]:
    """Rx and Tx block-diagonal codebooks (one DFT block per subarray)."""
    rx_block = dft_codebook(*cfg.rx_subarray_shape)
    tx_block = dft_codebook(*cfg.tx_subarray_shape)
    a_r = blkdiag_codebook([rx_block] * cfg.k_r)
    a_t = blkdiag_codebook([tx_block] * cfg.k_t)
    return a_r, a_t
