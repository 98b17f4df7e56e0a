"""Time reversal: mean point spread function, resolution, depth profile and
empirical evaluation from simulated transfer fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from ..errors import InsufficientRealizations
from ..grid import GridSpec
from ..moments import decoherence_length, gamma, scattering_mean_free_path
from .common import ArraySpec, ImagingProfile, ImagingSetup, depth_coupling_diagonal

__all__ = ["tr_mean_psf", "tr_resolution", "critical_aperture", "tr_depth_profile",
           "tr_depth_continuum", "lambda_alpha", "lambda_first_zero", "TREmpirical",
           "tr_empirical", "mode_weights", "require_full_depth"]


def _sinc(x):
    return np.sinc(np.asarray(x) / np.pi)


def require_full_depth(array: ArraySpec, D: float) -> None:
    if not array.full_depth(D):
        raise ValueError("this evaluator needs an array spanning the full depth")


def mode_weights(setup: ImagingSetup, omega: float, eta_s=None):
    """``phi_j(eta^s) phi_j(eta*) psi_j / (4 beta_j^2)`` for ``j = 1..N``, shape ``(N, ...)``."""
    ms = setup.modes(omega)
    eta_s = setup.source_eta if eta_s is None else eta_s
    j = ms.indices.reshape((-1,) + (1,) * np.ndim(eta_s))
    psi = setup.array.weights(ms).reshape(j.shape)
    return ms.phi(j, eta_s) * ms.phi(j, setup.source_eta) * psi / (4 * ms.beta.reshape(j.shape) ** 2)


def tr_mean_psf(setup: ImagingSetup, omega: float, Xs, eta_s=None):
    """Mean time-reversal kernel at cross-range ``Xs`` and depth ``eta_s``.

    Sum over recorded modes of a Gaussian decoherence factor of width
    ``X_d,j``, an aperture sinc and a quadratic phase, weighted by
    ``Gamma_jj phi_j(eta^s) phi_j(eta*) psi_j / beta_j``.
    """
    ms = setup.modes(omega)
    A = setup.array
    Z = A.z_array
    eta_s = setup.source_eta if eta_s is None else eta_s
    Xs, eta_s = np.broadcast_arrays(np.asarray(Xs, dtype=float), np.asarray(eta_s, dtype=float))
    Xo = setup.source_x
    j = ms.indices.reshape((-1,) + (1,) * Xs.ndim)
    b = ms.beta.reshape(j.shape)
    G = depth_coupling_diagonal(A, ms.depth, j)
    psi = A.weights(ms).reshape(j.shape)
    Xd = decoherence_length(setup.kernel, ms, j, Z)
    d = Xs - Xo
    terms = (G * ms.phi(j, eta_s) * ms.phi(j, setup.source_eta) / b * psi
             * np.exp(-0.5 * (d / Xd) ** 2) * _sinc(b * A.aperture * d / (2 * Z))
             * np.exp(0.5j * b * (Xs ** 2 - Xo ** 2) / Z))
    return A.aperture / (8 * np.pi * Z) * terms.sum(axis=0)


def critical_aperture(setup: ImagingSetup, omega: float) -> float:
    """Aperture ``(2 Z_A D / ell) sqrt(2 gamma / 3) N`` beyond which the
    decoherence length rather than the aperture limits the resolution."""
    ms = setup.modes(omega)
    A = setup.array
    S1 = float(scattering_mean_free_path(setup.kernel, ms, 1))
    g = gamma(A.z_array, S1)
    return 2 * A.z_array * ms.depth / setup.kernel.ell * np.sqrt(2 * g / 3) * ms.N


def tr_resolution(setup: ImagingSetup, omega: float, j):
    """Cross-range resolution of mode ``j`` and the critical aperture.

    Returns ``(Delta, threshold)`` with
    ``Delta = min(X_d,j, 2 pi Z_A / (beta_j |A_X|))``.
    """
    ms = setup.modes(omega)
    A = setup.array
    Xd = decoherence_length(setup.kernel, ms, j, A.z_array)
    aperture_limit = 2 * np.pi * A.z_array / (ms.beta_j(j) * A.aperture)
    return np.minimum(Xd, aperture_limit), critical_aperture(setup, omega)


def tr_depth_profile(setup: ImagingSetup, omega: float, eta_s, n_t: int | None = None) -> ImagingProfile:
    """Mean time-reversal kernel at the source cross-range as a function of depth.

    ``n_t`` overrides the window by recording exactly modes ``1..n_t``.
    """
    ms = setup.modes(omega)
    A = setup.array
    if n_t is None:
        psi = A.weights(ms)
        n_t = A.mode_cutoff(ms)
    else:
        if not 1 <= n_t <= ms.N:
            raise ValueError(f"n_t must lie in 1..{ms.N}")
        psi = (ms.indices <= n_t).astype(float)
    eta_s = np.asarray(eta_s, dtype=float)
    j = ms.indices[:, None]
    G = depth_coupling_diagonal(A, ms.depth, j)
    terms = G * ms.phi(j, eta_s[None]) * ms.phi(j, setup.source_eta) / ms.beta[:, None] * psi[:, None]
    vals = A.aperture / (8 * np.pi * A.z_array) * terms.sum(axis=0)
    return ImagingProfile("depth", eta_s, vals, n_t, {"formula": "mode sum", "omega": omega})


def lambda_alpha(alpha: float, x):
    """``Lambda_alpha(x) = int_0^alpha cos(s x) / sqrt(1 - s^2) ds`` for ``0 < alpha <= 1``.

    Evaluated as ``int_0^{arcsin alpha} cos(x sin t) dt``, which has a smooth
    integrand; ``Lambda_1(x) = (pi/2) J_0(x)``.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    x = np.asarray(x, dtype=float)
    top = np.arcsin(alpha)
    val, _ = integrate.quad_vec(lambda t: np.cos(x * np.sin(t)), 0.0, top,
                                epsabs=1e-13, epsrel=1e-12, limit=500)
    return val


def lambda_first_zero(alpha: float) -> float:
    """First positive zero of ``Lambda_alpha``."""
    # Lambda_alpha behaves like alpha sinc(alpha x) for small alpha, J0 near alpha = 1
    guess = min(np.pi / alpha, 2.405)
    hi = guess
    while lambda_alpha(alpha, hi) > 0:
        hi *= 1.25
    lo = hi / 1.25 if hi > guess else 0.5 * guess
    while lambda_alpha(alpha, lo) <= 0:
        lo *= 0.5
    return optimize.brentq(lambda t: lambda_alpha(alpha, t), lo, hi, xtol=1e-12)


def tr_depth_continuum(setup: ImagingSetup, omega: float, eta_s, n_t: int) -> ImagingProfile:
    """Continuum approximation ``|A_X| / (8 pi^2 Z_A) Lambda_{N_T/N}(k (eta^s - eta*))``."""
    ms = setup.modes(omega)
    A = setup.array
    eta_s = np.asarray(eta_s, dtype=float)
    vals = A.aperture / (8 * np.pi ** 2 * A.z_array) * lambda_alpha(n_t / ms.N, ms.k * (eta_s - setup.source_eta))
    return ImagingProfile("depth", eta_s, vals, n_t, {"formula": "continuum", "omega": omega})


@dataclass
class TREmpirical:
    """Per-realization values at the source and their ensemble statistics."""

    values: np.ndarray
    profile: ImagingProfile | None = None
    profiles: np.ndarray | None = None

    @property
    def mean(self) -> complex:
        return complex(self.values.mean())

    @property
    def variance(self) -> float:
        return float(np.var(self.values, ddof=1))

    @property
    def ratio(self) -> float:
        """Variance over squared mean modulus."""
        return self.variance / abs(self.mean) ** 2

    @property
    def second_ratio(self) -> float:
        """Second moment over squared mean modulus."""
        return float(np.mean(np.abs(self.values) ** 2)) / abs(self.mean) ** 2


def _prepare_fields(fields, n_modes_max, min_realizations):
    T = np.asarray(fields, dtype=complex)
    if T.ndim == 2:
        T = T[:, None, :]
    if T.ndim != 3:
        raise ValueError("fields must have shape (R, J, M)")
    if T.shape[0] < min_realizations:
        raise InsufficientRealizations(f"need at least {min_realizations} realizations, got {T.shape[0]}")
    if T.shape[1] > n_modes_max:
        raise ValueError("more field modes than propagating modes")
    return T


def tr_empirical(fields, grid: GridSpec, setup: ImagingSetup, omega: float, modes=None,
                 eta_s=None, propagator=None, noise=None,
                 min_realizations: int = 2) -> TREmpirical:
    """Time-reversal functional from simulated fields at the array.

    Parameters
    ----------
    fields : array (R, J, M)
        Mode fields ``T_j(X, X*, Z_A)`` (or the response to an extended source)
        at the array range, one row per realization.
    modes : sequence of int, optional
        Mode index of each field row; defaults to ``1..J``.
    propagator, noise :
        The :class:`~randwg.solver.Propagator` and the per-realization
        increments ``(R, n_steps, M)`` used to generate ``fields``. When given,
        the recorded fields are sent back through the same medium and the full
        cross-range profile at the source depth is returned as well.

    Notes
    -----
    At the source, ``M = sum_j w_j int_A |T_j|^2 dX`` with
    ``w_j = phi_j(eta^s) phi_j(eta*) psi_j / (4 beta_j^2)``. The profile uses
    ``int_A T_j(X, X^s) conj(T_j(X, X*)) dX``, which is the reversed-order
    propagation of ``1_A conj(T_j(., X*))``.
    """
    ms = setup.modes(omega)
    require_full_depth(setup.array, ms.depth)
    T = _prepare_fields(fields, ms.N, min_realizations)
    grid.check(T)
    modes = tuple(range(1, T.shape[1] + 1)) if modes is None else tuple(modes)
    w = mode_weights(setup, omega, eta_s)[np.asarray(modes) - 1]
    ind = setup.array.indicator(grid.x)
    vals = np.einsum("j,rjm->r", w, np.abs(T) ** 2 * ind) * grid.dx
    out = TREmpirical(vals)
    if propagator is not None:
        if noise is None:
            raise ValueError("the reverse pass needs the forward noise increments")
        if tuple(propagator.modes) != modes:
            raise ValueError("propagator modes differ from the field modes")
        g = (ind * np.conj(T))[:, None]
        back = propagator.run_reverse(g, noise)[:, 0]  # (R, J, M)
        prof = np.einsum("j,rjm->rm", w, back)
        out.profiles = prof
        out.profile = ImagingProfile("cross-range", grid.x, prof.mean(axis=0), len(modes),
                                     {"formula": "empirical", "realizations": T.shape[0]})
    return out
