"""Modes of the ideal waveguide and deterministic paraxial propagation.

The waveguide has a rigid flat bottom at depth coordinate ``y = 0``, a
pressure-release top at ``y = D`` and homogeneous sound speed ``c_o``.
Its transverse eigenfunctions are

    phi_j(y) = sqrt(2/D) cos(pi (j - 1/2) y / D),

with propagating wavenumbers ``beta_j = (pi/D) sqrt((kD/pi)^2 - (j-1/2)^2)``
for ``j <= N``. Mode amplitudes obey the free Schrodinger equation
``(2i beta_j d_Z + d_X^2) a = 0`` in the slow cross-range/range variables.
Oscillatory Fresnel integrals are evaluated spectrally on the periodic
:class:`~randwg.grid.GridSpec`, the same discretization the stochastic
propagator uses.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import OutOfDomain, QuadratureError, StandingWave
from .grid import GridSpec

# relative tolerance used to decide that kD/pi + 1/2 is an integer
_STANDING_TOL = 1e-10


@dataclass(frozen=True)
class WaveguideGeometry:
    """Depth ``D`` and homogeneous sound speed ``c_o``."""

    depth: float = 1.0
    sound_speed: float = 1.0

    def __post_init__(self):
        for name in ("depth", "sound_speed"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")


def mode_count(k: float, D: float) -> int:
    """Number of propagating modes, ``floor(kD/pi + 1/2)``.

    Raises
    ------
    StandingWave
        If ``kD/pi + 1/2`` is an integer, which would put a mode at cutoff.
    """
    if not (k > 0 and D > 0):
        raise ValueError("k and D must be positive")
    x = k * D / np.pi + 0.5
    if abs(x - round(x)) <= _STANDING_TOL * max(1.0, x):
        raise StandingWave(f"kD/pi + 1/2 = {x!r} is an integer")
    return int(np.floor(x))


def fractional_part(k: float, D: float) -> float:
    """``alpha`` in ``kD/pi = N + alpha - 1/2``."""
    return k * D / np.pi - mode_count(k, D) + 0.5


def eigenfunction(j, y, D: float):
    """Transverse eigenfunction ``sqrt(2/D) cos(pi (j-1/2) y / D)``.

    ``j`` and ``y`` broadcast against each other.
    """
    y = np.asarray(y, dtype=float)
    j = np.asarray(j)
    if np.any(j < 1):
        raise ValueError("mode index starts at 1")
    tol = 1e-12 * D
    if np.any((y < -tol) | (y > D + tol)):
        raise OutOfDomain(f"depth outside [0, {D}]")
    return np.sqrt(2.0 / D) * np.cos(np.pi * (j - 0.5) * y / D)


@dataclass(frozen=True)
class ModeSet:
    """Spectral data of the ideal waveguide at one angular frequency."""

    geometry: WaveguideGeometry
    omega: float
    k: float = field(init=False)
    N: int = field(init=False)
    alpha: float = field(init=False)
    beta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ValueError("omega must be positive")
        k = self.omega / self.geometry.sound_speed
        D = self.geometry.depth
        N = mode_count(k, D)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "alpha", k * D / np.pi - N + 0.5)
        beta = mode_wavenumbers(k, D, np.arange(1, N + 1))
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def from_wavenumber(cls, k: float, depth: float = 1.0, sound_speed: float = 1.0):
        return cls(WaveguideGeometry(depth, sound_speed), k * sound_speed)

    @property
    def depth(self) -> float:
        return self.geometry.depth

    @property
    def indices(self) -> np.ndarray:
        return np.arange(1, self.N + 1)

    def beta_j(self, j) -> np.ndarray:
        """Wavenumber of propagating mode(s) ``j`` (1-based)."""
        j = np.asarray(j)
        if np.any((j < 1) | (j > self.N)):
            raise IndexError(f"mode index must lie in 1..{self.N}")
        return self.beta[j - 1]

    def beta_prime(self, j) -> np.ndarray:
        """Analytic ``d beta_j / d omega = omega / (c_o^2 beta_j)``."""
        c = self.geometry.sound_speed
        return self.omega / (c * c * self.beta_j(j))

    def evanescent_rate(self, j) -> np.ndarray:
        """Decay rate ``beta_j`` for evanescent modes ``j > N``."""
        j = np.asarray(j)
        if np.any(j <= self.N):
            raise IndexError("evanescent modes have j > N")
        return mode_wavenumbers(self.k, self.depth, j)

    def phi(self, j, y):
        return eigenfunction(j, y, self.depth)


def mode_wavenumbers(k: float, D: float, j) -> np.ndarray:
    """``(pi/D) sqrt(|(kD/pi)^2 - (j-1/2)^2|)`` for integer ``j >= 1``."""
    j = np.asarray(j, dtype=float)
    r = (k * D / np.pi) ** 2 - (j - 0.5) ** 2
    return (np.pi / D) * np.sqrt(np.abs(r))


@dataclass(frozen=True)
class FrequencyBand:
    """Frequencies ``samples`` in ``[center - B/2, center + B/2]``.

    Construction fails if the mode count changes anywhere in the band.
    """

    geometry: WaveguideGeometry
    center: float
    bandwidth: float = 0.0
    samples: tuple = ()

    def __post_init__(self):
        if not self.center > 0 or self.bandwidth < 0:
            raise ValueError("need center > 0 and bandwidth >= 0")
        lo, hi = self.center - self.bandwidth / 2, self.center + self.bandwidth / 2
        if lo <= 0:
            raise ValueError("band reaches zero frequency")
        s = tuple(float(w) for w in self.samples) or (float(self.center),)
        if any(w < lo - 1e-12 * hi or w > hi + 1e-12 * hi for w in s):
            raise ValueError("frequency sample outside the band")
        if list(s) != sorted(s):
            raise ValueError("frequency samples must be ordered")
        object.__setattr__(self, "samples", s)
        c, D = self.geometry.sound_speed, self.geometry.depth
        counts = {mode_count(w / c, D) for w in (lo, hi, *s)}
        # N is piecewise constant, so checking the edges covers the interior
        if len(counts) != 1:
            raise StandingWave("mode count changes inside the band")

    @classmethod
    def uniform(cls, geometry, center, bandwidth, n):
        if n == 1:
            return cls(geometry, center, bandwidth, (center,))
        w = center + bandwidth * (np.arange(n) / (n - 1) - 0.5)
        return cls(geometry, center, bandwidth, tuple(w))

    @property
    def N(self) -> int:
        return ModeSet(self.geometry, self.center).N

    def mode_sets(self) -> list:
        return [ModeSet(self.geometry, w) for w in self.samples]


def gaussian_density(u, v):
    """Unit-mass isotropic Gaussian profile in the scaled source variables."""
    return np.exp(-0.5 * (u * u + v * v)) / (2 * np.pi)


@dataclass(frozen=True)
class SourceSpec:
    """Separable source: pulse spectrum times a scaled spatial density.

    Parameters
    ----------
    pulse : callable
        ``omega -> phi_hat(omega)``.
    theta_X, theta_eta : float
        Dimensionless widths of the density in cross-range and depth.
    center : (float, float)
        ``(X_star, eta_star)``.
    density : callable
        ``rho(u, v)`` with unit integral over the plane.
    """

    pulse: Callable = lambda w: 1.0
    theta_X: float = 0.05
    theta_eta: float = 0.01
    center: tuple = (0.0, 0.5)
    density: Callable = gaussian_density
    depth: float = 1.0

    def __post_init__(self):
        if not (self.theta_X > 0 and self.theta_eta > 0):
            raise ValueError("source widths must be positive")
        eta = self.center[1]
        if not 0 < eta < self.depth:
            raise OutOfDomain("source depth must lie strictly inside (0, D)")

    def normalization(self) -> float:
        """Integral of ``rho`` over the plane (should be 1)."""
        val, _ = integrate.dblquad(
            lambda v, u: self.density(u, v), -np.inf, np.inf, -np.inf, np.inf,
            epsabs=1e-11, epsrel=1e-10)
        return val

    def check_normalization(self, tol: float = 1e-6) -> None:
        m = self.normalization()
        if abs(m - 1.0) > tol:
            raise ValueError(f"source density integrates to {m}, not 1")


def source_coefficients(source: SourceSpec, modes: ModeSet, X, *,
                        epsrel: float = 1e-10, epsabs: float = 1e-13) -> np.ndarray:
    """Projection of the source on the modes, shape ``(N, len(X))``.

    ``F_j(X) = phi_hat / (theta_X theta_eta) * int_0^D phi_j(eta)
    rho((X - X_star)/theta_X, (eta - eta_star)/theta_eta) d eta``.
    """
    X = np.atleast_1d(np.asarray(X, dtype=float))
    amp = complex(source.pulse(modes.omega))
    if amp == 0:
        return np.zeros((modes.N, X.size), dtype=complex)
    Xs, es = source.center
    D = modes.depth
    j = modes.indices[:, None]
    u = (X[None, :] - Xs) / source.theta_X

    def integrand(eta):
        return (eigenfunction(j, eta, D)
                * source.density(u, (eta - es) / source.theta_eta)).ravel()

    pts = [es] + [es + s * source.theta_eta for s in (-3.0, 3.0) if 0 < es + s * source.theta_eta < D]
    total = np.zeros(modes.N * X.size)
    err = 0.0
    # split at the source depth so the narrow bump is resolved
    edges = sorted({0.0, D, *pts})
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad_vec(integrand, a, b, epsrel=epsrel, epsabs=epsabs)
        total += val
        err += e
    scale = np.max(np.abs(total)) if total.size else 0.0
    if err > max(epsabs * 10, 1e3 * epsrel * scale):
        raise QuadratureError("source projection did not converge", achieved=err)
    F = total.reshape(modes.N, X.size) / (source.theta_X * source.theta_eta)
    return amp * F


def initial_amplitude(modes: ModeSet, F) -> np.ndarray:
    """``a_ini = F_j / (2 i beta_j)`` for an ``(N, M)`` coefficient array."""
    F = np.asarray(F)
    return F / (2j * modes.beta[: F.shape[0], None])


def _fresnel_multiplier(grid: GridSpec, beta, Z):
    return np.exp(-0.5j * grid.kappa ** 2 * Z / beta)


def ideal_paraxial_amplitude(modes: ModeSet, j: int, grid: GridSpec, Z: float, F) -> np.ndarray:
    """Free paraxial amplitude of mode ``j`` at range ``Z``.

    Solves ``(2i beta_j d_Z + d_X^2) a = 0`` with ``a(X, 0) = F_j/(2i beta_j)``
    spectrally on the periodic grid, which is the discrete form of the
    Fresnel integral with kernel ``-(1/2) sqrt(i/(2 pi beta Z))``.
    """
    F = np.asarray(F, dtype=complex)
    grid.check(F)
    beta = modes.beta_j(j)
    a0 = F / (2j * beta)
    if Z == 0:
        return a0
    if Z < 0:
        raise ValueError("Z must be non-negative")
    return np.fft.ifft(np.fft.fft(a0) * _fresnel_multiplier(grid, beta, Z))


def ideal_transfer(modes: ModeSet, j: int, X, Xp, Z):
    """Continuum free Green function ``sqrt(beta/(2 pi i Z)) exp(i beta (X-X')^2/(2Z))``."""
    if np.any(np.asarray(Z) <= 0):
        raise ValueError("Z must be positive")
    beta = modes.beta_j(j)
    d = np.asarray(X) - np.asarray(Xp)
    return np.sqrt(beta / (2j * np.pi * Z)) * np.exp(0.5j * beta * d * d / Z)


def discrete_ideal_transfer(grid: GridSpec, beta: float, X, Xp, Z):
    """Free Green function of the periodic band-limited grid.

    This is the kernel that the split-step solver reproduces with zero noise:
    ``(1/W) sum_kappa exp(i kappa (X - X') - i kappa^2 Z / (2 beta))``, evaluated
    by direct summation over the grid wavenumbers.
    """
    kap = grid.kappa
    d = np.atleast_1d(np.asarray(X, dtype=float) - Xp)
    ph = np.exp(1j * np.outer(d, kap) - 0.5j * kap ** 2 * Z / beta)
    return ph.sum(axis=1) / grid.width


def evanescent_amplitude(modes: ModeSet, j: int, grid: GridSpec, Z: float, F) -> np.ndarray:
    """Evanescent mode amplitude without its ``exp(-beta_j Z / eps^2)`` factor.

    ``e = -(1/2) sqrt(1/(2 pi beta Z)) int exp(-beta (X-X')^2/(2Z)) F dX'``,
    i.e. ``-F/(2 beta)`` smoothed by the heat kernel of variance ``Z/beta``.
    """
    F = np.asarray(F, dtype=complex)
    grid.check(F)
    beta = float(modes.evanescent_rate(j))
    if Z <= 0:
        raise ValueError("Z must be positive")
    mult = np.exp(-0.5 * grid.kappa ** 2 * Z / beta)
    return -np.fft.ifft(np.fft.fft(F) * mult) / (2 * beta)


def ideal_field(modes: ModeSet, amplitudes: Sequence, eta, Z: float = 0.0, eps: float | None = None):
    """Paraxial pressure ``sum_j phi_j(eta) a_j exp(i beta_j Z / eps^2)``.

    ``amplitudes`` has the mode index on its first axis. ``eps=None`` drops
    the rapid phase, which is how profiles in the scaled range are formed.
    """
    a = np.asarray(amplitudes, dtype=complex)
    n = a.shape[0]
    if n > modes.N:
        raise ValueError("more amplitudes than propagating modes")
    j = np.arange(1, n + 1)
    eta = np.asarray(eta, dtype=float)
    phi = eigenfunction(j.reshape((n,) + (1,) * eta.ndim), eta, modes.depth)
    if eps is not None:
        phase = np.exp(1j * modes.beta[:n] * Z / eps ** 2)
        a = a * phase.reshape((n,) + (1,) * (a.ndim - 1))
    # sum over modes; amplitude dims trail the depth dims
    phi = phi.reshape(phi.shape + (1,) * (a.ndim - 1))
    a = a.reshape((n,) + (1,) * eta.ndim + a.shape[1:])
    return (phi * a).sum(axis=0)
