"""Boundary-fluctuation statistics and Gaussian field samplers.

The boundary perturbation enters the limit model only through its
cross-range covariance integrated over range, ``R_o(xi)``. We use the
Gaussian family

    R_o(xi) = sigma^2 ell exp(-xi^2 / (2 ell^2)),

so that ``R_o(0) = sigma^2 ell`` and ``R_o''(0)/R_o(0) = -1/ell^2``. The
Brownian field driving the propagator has increments with covariance
``dZ R_o(X - X')``; they are synthesized spectrally on the periodic grid.

Random streams
--------------
Realization ``r`` of an ensemble with master seed ``s`` draws from
``numpy.random.Generator(PCG64(SeedSequence(s, spawn_key=(r,))))``. Step
increments are consumed in order from that stream, so a realization is
reproducible on its own, independent of how many others run or in which
order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeSpectrum
from .grid import GridSpec

__all__ = [
    "CovarianceKernel", "GridSpec", "r_o", "c_o", "spectral_density",
    "realization_rng", "BrownianSampler", "sample_brownian_increment",
    "Grid2D", "sample_boundary", "boundary_covariance",
]


@dataclass(frozen=True)
class CovarianceKernel:
    """Boundary statistics: amplitude ``sigma``, correlation length ``ell``."""

    sigma: float = 0.25
    ell: float = 1.0
    family: str = "gaussian"

    def __post_init__(self):
        if not (self.sigma >= 0 and self.ell > 0):
            raise ValueError("need sigma >= 0 and ell > 0")
        if self.family != "gaussian":
            raise ValueError(f"unknown kernel family {self.family!r}")

    @property
    def r0(self) -> float:
        return self.sigma ** 2 * self.ell


def r_o(kernel: CovarianceKernel, xi):
    """Range-integrated covariance ``R_o(xi)``."""
    xi = np.asarray(xi, dtype=float)
    return kernel.r0 * np.exp(-0.5 * (xi / kernel.ell) ** 2)


def c_o(kernel: CovarianceKernel, X):
    """``1 - R_o(X)/R_o(0)``; independent of ``sigma``."""
    X = np.asarray(X, dtype=float)
    return -np.expm1(-0.5 * (X / kernel.ell) ** 2)


def spectral_density(kernel: CovarianceKernel, kappa):
    """``(1/2pi) int R_o(xi) exp(-i kappa xi) d xi``."""
    kappa = np.asarray(kappa, dtype=float)
    l = kernel.ell
    return kernel.sigma ** 2 * l * l / np.sqrt(2 * np.pi) * np.exp(-0.5 * (kappa * l) ** 2)


def realization_rng(master_seed: int, realization: int) -> np.random.Generator:
    """Independent stream for one realization of an ensemble."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(realization),))
    return np.random.Generator(np.random.PCG64(ss))


def _periodized(kernel, grid: GridSpec, images: int | None = None):
    x = grid.dx * np.fft.fftfreq(grid.points, d=1.0 / grid.points)  # lags in FFT order
    if images is None:
        images = int(np.ceil(10 * kernel.ell / grid.width)) + 1
    n = np.arange(-images, images + 1)
    return r_o(kernel, x[None, :] + grid.width * n[:, None]).sum(axis=0)


class BrownianSampler:
    """Spectral synthesis of Brownian increments on a periodic grid.

    Parameters
    ----------
    kernel : CovarianceKernel
    grid : GridSpec
    dZ : float
        Range step; increments have covariance ``dZ * R_o`` (periodized).
    min_width : float
        Required ``W / ell``; the periodization bias is only controlled for
        wide windows.
    """

    def __init__(self, kernel: CovarianceKernel, grid: GridSpec, dZ: float,
                 min_width: float = 20.0, tol: float = 1e-10):
        if dZ < 0:
            raise ValueError("dZ must be non-negative")
        if grid.width < min_width * kernel.ell:
            raise ValueError(
                f"grid width {grid.width} below {min_width} correlation lengths")
        self.kernel, self.grid, self.dZ = kernel, grid, dZ
        lam = np.fft.fft(_periodized(kernel, grid)).real * dZ
        top = lam.max() if lam.size else 0.0
        if lam.min() < -tol * max(top, 1e-300):
            raise NegativeSpectrum(
                f"discrete spectrum has weight {lam.min():.3e} (max {top:.3e})")
        self.amplitude = np.sqrt(np.clip(lam, 0.0, None) / grid.points)

    def draw(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """``n`` independent increments, shape ``(n, M)``.

        One complex spectral draw yields two independent real fields (real
        and imaginary parts); both are used.
        """
        M = self.grid.points
        pairs = (n + 1) // 2
        w = rng.standard_normal((pairs, 2, M))
        z = np.fft.fft(self.amplitude * (w[:, 0] + 1j * w[:, 1]), axis=-1)
        out = np.empty((2 * pairs, M))
        out[0::2] = z.real
        out[1::2] = z.imag
        return out[:n]


def sample_brownian_increment(kernel: CovarianceKernel, grid: GridSpec, dZ: float,
                              rng: np.random.Generator) -> np.ndarray:
    """One increment field with covariance ``dZ R_o(X - X')``."""
    if dZ == 0:
        return np.zeros(grid.points)
    return BrownianSampler(kernel, grid, dZ).draw(rng, 1)[0]


@dataclass(frozen=True)
class Grid2D:
    """Periodic grid in cross-range ``xi`` and range ``zeta``."""

    x: GridSpec
    z: GridSpec


def boundary_covariance(kernel: CovarianceKernel, xi, zeta):
    """2-D Gaussian product covariance whose ``zeta``-integral is ``R_o(xi)``."""
    l = kernel.ell
    return r_o(kernel, xi) * np.exp(-0.5 * (np.asarray(zeta) / l) ** 2) / (np.sqrt(2 * np.pi) * l)


def sample_boundary(kernel: CovarianceKernel, grid: Grid2D, rng: np.random.Generator,
                    tol: float = 1e-10) -> np.ndarray:
    """Stationary boundary perturbation ``mu(xi, zeta)``, shape ``(Mz, Mx)``."""
    gx, gz = grid.x, grid.z
    lx = gx.dx * np.fft.fftfreq(gx.points, d=1.0 / gx.points)
    lz = gz.dx * np.fft.fftfreq(gz.points, d=1.0 / gz.points)
    nx = int(np.ceil(10 * kernel.ell / gx.width)) + 1
    nz = int(np.ceil(10 * kernel.ell / gz.width)) + 1
    cx = sum(r_o(kernel, lx + gx.width * n) for n in range(-nx, nx + 1))
    cz = sum(np.exp(-0.5 * ((lz + gz.width * n) / kernel.ell) ** 2) for n in range(-nz, nz + 1))
    cz = cz / (np.sqrt(2 * np.pi) * kernel.ell)
    lam = np.outer(np.fft.fft(cz).real, np.fft.fft(cx).real)
    if lam.min() < -tol * lam.max():
        raise NegativeSpectrum("2-D discrete spectrum has negative weights")
    amp = np.sqrt(np.clip(lam, 0, None) / lam.size)
    w = rng.standard_normal((2,) + lam.shape)
    return np.fft.fft2(amp * (w[0] + 1j * w[1])).real
