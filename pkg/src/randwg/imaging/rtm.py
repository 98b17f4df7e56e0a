"""Reverse-time migration: mean kernel, stability diagnostics and empirical values."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..errors import ValidityWarning
from ..grid import GridSpec
from ..moments import decoherence_frequency, decoherence_length, scattering_mean_free_path
from ..waveguide import discrete_ideal_transfer
from .common import ImagingProfile, ImagingSetup
from .tr import TREmpirical, _prepare_fields, _sinc, mode_weights, require_full_depth

__all__ = ["rtm_mean", "rtm_range_profile", "RTMStability", "rtm_stability",
           "gaussian_aperture_integral", "rtm_empirical"]


def rtm_mean(setup: ImagingSetup, omega: float, Xs, eta_s=None, zeta_s=0.0):
    """Mean migration kernel at ``(Xs, eta_s)`` and scaled range offset ``zeta_s``.

    Same structure as the ideal-waveguide kernel with each mode damped by
    ``exp(-Z_A / S_j)`` and carrying the range phase ``exp(-i beta_j zeta_s)``.
    """
    ms = setup.modes(omega)
    A = setup.array
    require_full_depth(A, ms.depth)
    Z = A.z_array
    eta_s = setup.source_eta if eta_s is None else eta_s
    Xs, eta_s, zeta_s = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (Xs, eta_s, zeta_s)))
    Xo = setup.source_x
    j = ms.indices.reshape((-1,) + (1,) * Xs.ndim)
    b = ms.beta.reshape(j.shape)
    psi = A.weights(ms).reshape(j.shape)
    S = scattering_mean_free_path(setup.kernel, ms, j)
    d = Xs - Xo
    terms = (ms.phi(j, eta_s) * ms.phi(j, setup.source_eta) / b * psi
             * np.exp(-Z / S - 1j * b * zeta_s)
             * _sinc(b * A.aperture * d / (2 * Z))
             * np.exp(0.5j * b * (Xs ** 2 - Xo ** 2) / Z))
    return A.aperture / (8 * np.pi * Z) * terms.sum(axis=0)


def rtm_range_profile(setup: ImagingSetup, omega: float, zeta_s, remove_phase: bool = True) -> ImagingProfile:
    """Mean migration kernel at the source over scaled range ``zeta_s``.

    ``remove_phase`` divides out the first mode's phase ``exp(-i beta_1 zeta_s)``.
    """
    ms = setup.modes(omega)
    zeta_s = np.asarray(zeta_s, dtype=float)
    vals = rtm_mean(setup, omega, setup.source_x, setup.source_eta, zeta_s)
    if remove_phase:
        vals = vals * np.exp(1j * ms.beta[0] * zeta_s)
    return ImagingProfile("range", zeta_s, vals, setup.array.mode_cutoff(ms),
                          {"formula": "migration mean", "phase_removed": remove_phase})


def gaussian_aperture_integral(aperture: float, xd):
    """``int int_A exp(-(X1 - X2)^2 / (2 xd^2)) dX1 dX2`` over an interval of length ``aperture``."""
    xd = np.asarray(xd, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = aperture / (np.sqrt(2) * xd)
        val = 2 * (aperture * xd * np.sqrt(np.pi / 2) * special.erf(r) + xd * xd * np.expm1(-r * r))
    return np.where(np.isinf(xd), aperture ** 2, val)


@dataclass(frozen=True)
class RTMStability:
    mean_sq: float
    second: float
    valid: bool

    @property
    def ratio(self) -> float:
        return self.second / self.mean_sq


def rtm_stability(setup: ImagingSetup, omega: float, bandwidth: float = 0.0,
                  aperture_integral: str = "asymptotic") -> RTMStability:
    """Squared mean and second moment of the migration kernel at the source.

    The second moment keeps only the diagonal mode terms with the narrow
    Gaussian decoherence kernel. ``aperture_integral="asymptotic"`` uses
    ``sqrt(2 pi) X_d,j |A_X|`` for the double aperture integral (valid for
    ``X_d,j << |A_X|``); ``"exact"`` integrates it in closed form. With a
    single recorded mode and no noise the exact form gives ratio 1.

    ``valid`` is False (with a :class:`ValidityWarning`) when the bandwidth
    is not small compared with the decoherence frequencies of the recorded modes.
    """
    ms = setup.modes(omega)
    A = setup.array
    require_full_depth(A, ms.depth)
    Z = A.z_array
    j = ms.indices
    psi = A.weights(ms)
    used = psi != 0
    phi2 = ms.phi(j, setup.source_eta) ** 2
    S = scattering_mean_free_path(setup.kernel, ms, j)
    Xd = decoherence_length(setup.kernel, ms, j, Z)
    mean = A.aperture / (8 * np.pi * Z) * np.sum(phi2 / ms.beta * psi * np.exp(-Z / S))
    if aperture_integral == "asymptotic":
        I = np.sqrt(2 * np.pi) * Xd * A.aperture
    elif aperture_integral == "exact":
        I = gaussian_aperture_integral(A.aperture, Xd)
    else:
        raise ValueError(f"unknown aperture integral {aperture_integral!r}")
    second = np.sum(I * phi2 ** 2 / ms.beta ** 2 * psi ** 2) / (8 * np.pi * Z) ** 2
    valid = True
    if bandwidth > 0 and setup.kernel.sigma > 0:
        od, _ = decoherence_frequency(setup.kernel, ms, j[used], Z, warn=False)
        if bandwidth >= od.min():
            valid = False
            warnings.warn("bandwidth is not small compared with the decoherence frequency",
                          ValidityWarning, stacklevel=2)
    return RTMStability(float(abs(mean) ** 2), float(second), valid)


def rtm_empirical(fields, grid: GridSpec, setup: ImagingSetup, omega: float, modes=None,
                  reference=None, min_realizations: int = 2) -> TREmpirical:
    """Migration functional at the source from simulated fields at the array.

    ``reference`` holds the ideal fields ``T_j,o(X, X*, Z_A)`` per mode,
    shape ``(J, M)``; by default the free Green function of the grid is used.
    The value per realization is
    ``sum_j w_j int_A T_j,o(X, X*) conj(T_j(X, X*)) dX``.
    """
    ms = setup.modes(omega)
    require_full_depth(setup.array, ms.depth)
    T = _prepare_fields(fields, ms.N, min_realizations)
    grid.check(T)
    modes = tuple(range(1, T.shape[1] + 1)) if modes is None else tuple(modes)
    if reference is None:
        reference = np.stack([discrete_ideal_transfer(grid, ms.beta_j(j), grid.x, setup.source_x,
                                                      setup.array.z_array) for j in modes])
    reference = np.asarray(reference)
    w = mode_weights(setup, omega)[np.asarray(modes) - 1]
    ind = setup.array.indicator(grid.x)
    vals = np.einsum("j,rjm->r", w, reference[None] * np.conj(T) * ind) * grid.dx
    return TREmpirical(vals)
