"""Coherent interferometry: windowed cross-correlations, mean profiles and
depth estimation from per-mode intensities."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..errors import DegenerateFit, InsufficientRealizations, ValidityWarning, WindowTooWide
from ..grid import GridSpec
from ..moments import co_path_integral, decoherence_frequency, decoherence_length, scattering_mean_free_path
from ..waveguide import ModeSet, ideal_transfer
from .common import CINTParams, ImagingProfile, ImagingSetup
from .tr import _sinc, require_full_depth

__all__ = ["cint_data", "CINTResult", "cint_functional", "cint_mean_profiles",
           "cint_resolution", "cint_model_weights", "cint_expected_values",
           "DepthEstimate", "cint_depth_estimate"]

# X_d,j above this fraction of the aperture flags the mean profiles as outside their regime
XD_APERTURE_FRACTION = 0.25


def cint_data(fields, grid: GridSpec, setup: ImagingSetup, omegas, modes=None):
    """Projected array data ``D_j(omega, X)`` from mode fields at the array.

    ``fields`` has shape ``(..., F, J, M)`` and holds ``T_j(omega, X, X*, Z_A)``
    (or the response to an extended source) on ``grid``. The result is
    ``1_A(X) phi_j(eta*) psi_j T_j / (2 i beta_j)``; the rapid phase
    ``exp(i beta_j Z_A / eps^2)`` is left out, which the range phase of
    :func:`cint_functional` accounts for.
    """
    T = np.asarray(fields, dtype=complex)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    F, J = T.shape[-3], T.shape[-2]
    if F != omegas.size:
        raise ValueError("field frequency axis does not match omegas")
    modes = tuple(range(1, J + 1)) if modes is None else tuple(modes)
    if len(modes) != J:
        raise ValueError("field mode axis does not match modes")
    coef = np.empty((F, J))
    for f, w in enumerate(omegas):
        ms = setup.modes(w)
        jj = np.asarray(modes)
        coef[f] = ms.phi(jj, setup.source_eta) * setup.array.weights(ms)[jj - 1] / ms.beta_j(jj)
    ind = setup.array.indicator(grid.x)
    return T * (coef / 2j)[..., None] * ind


@dataclass
class CINTResult:
    """Per-mode CINT values, shape ``(..., J, nX, nzeta)``, and their mode sum."""

    per_mode: np.ndarray
    Xs: np.ndarray
    zeta: np.ndarray
    modes: tuple
    flags: dict = field(default_factory=dict)

    @property
    def total(self) -> np.ndarray:
        return self.per_mode.sum(axis=-3)

    def cross_range_profile(self, k: int = 0, realization=None) -> ImagingProfile:
        v = self.total if realization is None else self.total[realization]
        if v.ndim > 2:
            v = v.mean(axis=0)
        return ImagingProfile("cross-range", self.Xs, v[:, k], len(self.modes),
                              {"formula": "empirical cint", "zeta": float(self.zeta[k])})


def _windows(setup: ImagingSetup, ms: ModeSet, modes, params: CINTParams):
    if params.xd is not None:
        xd = np.asarray(params.xd, dtype=float)
        if xd.size != len(modes) or np.any(xd <= 0):
            raise ValueError("need one positive window width per mode")
        return xd
    return decoherence_length(setup.kernel, ms, np.asarray(modes), setup.array.z_array)


def cint_functional(data, grid: GridSpec, omegas, setup: ImagingSetup, Xs, zeta=0.0,
                    params: CINTParams = CINTParams(), modes=None,
                    min_realizations: int = 1) -> CINTResult:
    """Windowed cross-correlations of projected data, migrated to ``(Xs, zeta)``.

    Parameters
    ----------
    data : array (F, J, M) or (R, F, J, M)
        Projected data ``D_j(omega, X)`` on ``grid`` (see :func:`cint_data`).
    omegas : (F,) frequencies of the data.
    Xs, zeta : search cross-ranges and scaled range offsets.

    Notes
    -----
    For each mode ``B(omega, X) = D_j(omega, X) conj(T_j,o(omega, X, Xs, Z_A))``
    and
    ``J_j = sum_{|w1 - w2| <= Omega} exp(i (beta_j(w2) - beta_j(w1)) zeta)
    sum_{X1, X2} 1(|X1 - X2| <= X_d,j) B(w1, X1) conj(B(w2, X2)) dX^2``,
    with the frequency sums weighted by ``(dw / 2 pi)^2`` when ``F > 1``.
    The windows are evaluated at the centre of the sampled band.
    """
    D = np.asarray(data, dtype=complex)
    single = D.ndim == 3
    if single:
        D = D[None]
    if D.ndim != 4:
        raise ValueError("data must have shape (F, J, M) or (R, F, J, M)")
    if D.shape[0] < min_realizations:
        raise InsufficientRealizations(f"need at least {min_realizations} realizations")
    grid.check(D)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    F, J = D.shape[1], D.shape[2]
    if omegas.size != F:
        raise ValueError("data frequency axis does not match omegas")
    modes = tuple(range(1, J + 1)) if modes is None else tuple(modes)
    center = 0.5 * (omegas.min() + omegas.max())
    ms_c = setup.modes(center)
    require_full_depth(setup.array, ms_c.depth)
    xd = _windows(setup, ms_c, modes, params)
    flags = {"window_too_wide": False}
    if F > 1 and setup.kernel.sigma > 0:
        od, _ = decoherence_frequency(setup.kernel, ms_c, np.asarray(modes), setup.array.z_array, warn=False)
        if np.any(params.cutoff > od):
            flags["window_too_wide"] = True
            warnings.warn("frequency window exceeds the decoherence frequency", WindowTooWide, stacklevel=2)
    Xs = np.atleast_1d(np.asarray(Xs, dtype=float))
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    inside = np.nonzero(setup.array.indicator(grid.x))[0]
    if inside.size == 0:
        raise ValueError("no grid node inside the aperture")
    Xa = grid.x[inside]
    Da = D[..., inside]
    mset = [setup.modes(w) for w in omegas]
    beta = np.array([m.beta_j(np.asarray(modes)) for m in mset])  # (F, J)
    pair = np.abs(omegas[:, None] - omegas[None, :]) <= params.cutoff
    wf = ((omegas[1] - omegas[0]) / (2 * np.pi)) ** 2 if F > 1 else 1.0
    out = np.empty((D.shape[0], J, Xs.size, zeta.size), dtype=complex)
    u = Xa[:, None] - Xa[None, :]
    for jj, j in enumerate(modes):
        W = params.cross_window(u, xd[jj])
        # ideal Green function from each search point, shape (F, nX, Ma)
        G = np.stack([ideal_transfer(m, j, Xa[None, :], Xs[:, None], setup.array.z_array) for m in mset])
        B = Da[:, :, jj, None, :] * np.conj(G)[None]  # (R, F, nX, Ma)
        WB = np.einsum("ab,rgsb->rgsa", W, np.conj(B))
        C = np.einsum("rfsa,rgsa->rsfg", B, WB) * grid.dx ** 2
        ph = np.exp(1j * (beta[None, :, jj, None] - beta[:, None, jj, None]) * zeta[None, None, :])  # (F, F, nz)
        out[:, jj] = np.einsum("rsfg,fgz->rsz", C, ph * pair[..., None]) * wf
    if single:
        out = out[0]
    return CINTResult(out, Xs, zeta, modes, flags)


def _cint_constant(setup: ImagingSetup, params: CINTParams):
    A = setup.array
    return params.cutoff * A.aperture * np.sqrt(2 * np.pi) / (64 * np.pi ** 4 * A.z_array ** 2)


def cint_mean_profiles(setup: ImagingSetup, omega: float, Xs=None, zeta=None, eta_s=None,
                       params: CINTParams = CINTParams(), n_t: int | None = None) -> dict:
    """Closed-form mean CINT profiles in cross-range, scaled range and depth.

    Each mode contributes with weight ``X_d,j phi_j^2(eta*) psi_j^2``; the
    cross-range term is a Gaussian of standard deviation ``Z_A/(beta_j X_d,j)``,
    the range term is ``sinc(beta_j' Omega zeta)`` and the depth term carries
    ``phi_j^2(eta^s)``. Missing axes are sampled on default ranges.
    """
    ms = setup.modes(omega)
    A = setup.array
    require_full_depth(A, ms.depth)
    Z = A.z_array
    j = ms.indices
    if n_t is None:
        psi = A.weights(ms)
        n_t = A.mode_cutoff(ms)
    else:
        if not 1 <= n_t <= ms.N:
            raise ValueError(f"n_t must lie in 1..{ms.N}")
        psi = (j <= n_t).astype(float)
    Xd = decoherence_length(setup.kernel, ms, j, Z)
    valid = bool(np.all(Xd[psi > 0] < XD_APERTURE_FRACTION * A.aperture))
    if not valid:
        warnings.warn("decoherence length is not small compared with the aperture",
                      ValidityWarning, stacklevel=2)
    w = _cint_constant(setup, params) * Xd * ms.phi(j, setup.source_eta) ** 2 * psi ** 2
    b, bp = ms.beta, ms.beta_prime(j)
    if Xs is None:
        s = Z / (b[0] * Xd[0])
        Xs = setup.source_x + np.linspace(-6 * s, 6 * s, 601)
    if zeta is None:
        z1 = np.pi / (bp[0] * params.cutoff) if params.cutoff > 0 else 1.0
        zeta = np.linspace(-3 * z1, 3 * z1, 601)
    if eta_s is None:
        eta_s = np.linspace(0, ms.depth, 401)
    Xs, zeta, eta_s = (np.asarray(v, dtype=float) for v in (Xs, zeta, eta_s))
    d = Xs - setup.source_x
    cross = np.sum(w[:, None] * np.exp(-0.5 * (b[:, None] * d[None] * Xd[:, None] / Z) ** 2), axis=0)
    rng = np.sum(w[:, None] * _sinc(bp[:, None] * params.cutoff * zeta[None]), axis=0)
    depth = np.sum(w[:, None] * ms.phi(j[:, None], eta_s[None]) ** 2, axis=0)
    meta = {"formula": "cint mean", "omega": omega, "valid": valid}
    return {"cross-range": ImagingProfile("cross-range", Xs, cross, n_t, dict(meta)),
            "range": ImagingProfile("range", zeta, rng, n_t, dict(meta)),
            "depth": ImagingProfile("depth", eta_s, depth, n_t, dict(meta))}


def cint_resolution(setup: ImagingSetup, omega: float, j, params: CINTParams = CINTParams()):
    """``(cross-range width 2 Z_A / (beta_j X_d,j), range first zero pi / (beta_j' Omega))``."""
    ms = setup.modes(omega)
    Z = setup.array.z_array
    Xd = decoherence_length(setup.kernel, ms, j, Z)
    with np.errstate(divide="ignore"):
        zr = np.pi / (ms.beta_prime(j) * params.cutoff)
    return 2 * Z / (ms.beta_j(j) * Xd), zr


def cint_model_weights(setup: ImagingSetup, omega: float, params: CINTParams = CINTParams(),
                       modes=None, scale: float = 1.0):
    """Per-mode weights ``G_j`` of the depth model ``G_j phi_j^2(eta)``.

    ``G_j = C X_d,j psi_j^2`` with the closed-form constant of the mean
    profile; ``scale`` absorbs the source spectrum.
    """
    ms = setup.modes(omega)
    modes = ms.indices if modes is None else np.asarray(modes)
    psi = setup.array.weights(ms)[modes - 1]
    Xd = decoherence_length(setup.kernel, ms, modes, setup.array.z_array)
    return scale * _cint_constant(setup, params) * Xd * psi ** 2


def cint_expected_values(setup: ImagingSetup, omegas, grid: GridSpec,
                         params: CINTParams = CINTParams(), modes=None):
    """Expected per-mode weights ``G_j`` of :func:`cint_functional` at the source.

    Uses the exact single-mode second moment for a point source, so that
    ``E[J_j(X*, 0)] = G_j phi_j^2(eta*)`` for the same discretization of the
    aperture and of the frequency sums. Unlike :func:`cint_model_weights`
    this does not assume ``X_d,j << ell`` or ``X_d,j << |A_X|``.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    center = 0.5 * (omegas.min() + omegas.max())
    ms_c = setup.modes(center)
    modes = tuple(ms_c.indices) if modes is None else tuple(modes)
    xd = _windows(setup, ms_c, modes, params)
    Z = setup.array.z_array
    inside = np.nonzero(setup.array.indicator(grid.x))[0]
    n = inside.size
    lags = np.arange(-(n - 1), n) * grid.dx
    counts = n - np.abs(np.arange(-(n - 1), n))
    F = omegas.size
    wf = ((omegas[1] - omegas[0]) / (2 * np.pi)) ** 2 if F > 1 else 1.0
    I = co_path_integral(setup.kernel, lags, 0.0, method="erf")
    G = np.zeros(len(modes))
    for jj, j in enumerate(modes):
        win = params.cross_window(lags, xd[jj])
        for w in omegas:
            ms = setup.modes(w)
            b = ms.beta_j(j)
            S = scattering_mean_free_path(setup.kernel, ms, j)
            K = np.exp(-2 * Z / S * I)
            psi = setup.array.weights(ms)[j - 1]
            # |D conj(T_o)|^2 factors: (psi / (2 beta))^2 (beta / (2 pi Z))^2
            G[jj] += (psi / (4 * np.pi * Z)) ** 2 * np.sum(counts * win * K) * grid.dx ** 2
    return G * wf


@dataclass
class DepthEstimate:
    """Estimated source depth with the misfit curve on the coarse grid."""

    eta: float
    misfit: ImagingProfile
    identifiable: bool
    candidates: tuple
    cell: float
    amplitude: float


def cint_depth_estimate(values, setup: ImagingSetup, omega: float,
                        params: CINTParams = CINTParams(), modes=None, weights=None,
                        fit_amplitude: bool = False, cells: int = 200,
                        flat_tol: float = 1e-10, tie_tol: float = 1e-6) -> DepthEstimate:
    """Source depth from per-mode CINT values at the estimated source location.

    Minimizes ``sum_j |J_j - c G_j phi_j^2(eta)|^2`` over ``eta`` in
    ``[0, D]``: first on a grid of ``cells`` intervals, then by bounded Brent
    refinement in the two cells around the grid minimum. ``c = 1`` unless
    ``fit_amplitude`` is set, in which case the best non-negative ``c`` is
    found for every ``eta``.

    ``weights`` overrides ``G_j`` (default :func:`cint_model_weights`).
    Raises :class:`DegenerateFit` if the misfit is flat; ``identifiable`` is
    False if separate minima tie within ``tie_tol`` of the misfit range.
    """
    ms = setup.modes(omega)
    J = np.asarray(values)
    modes = np.arange(1, J.size + 1) if modes is None else np.asarray(modes)
    if modes.size != J.size:
        raise ValueError("one value per mode is needed")
    G = cint_model_weights(setup, omega, params, modes) if weights is None else np.asarray(weights, dtype=float)
    D = ms.depth

    def model(eta):
        eta = np.atleast_1d(eta)
        return G[:, None] * ms.phi(modes[:, None], eta[None]) ** 2

    def misfit_amp(eta):
        m = model(eta)
        if fit_amplitude:
            c = np.maximum(np.real(np.sum(np.conj(J)[:, None] * m, axis=0)) / np.maximum(np.sum(m * m, axis=0), 1e-300), 0)
        else:
            c = np.ones(m.shape[1])
        return np.sum(np.abs(J[:, None] - c * m) ** 2, axis=0), c

    eta = np.linspace(0, D, cells + 1)
    mis, _ = misfit_amp(eta)
    span = mis.max() - mis.min()
    scale = np.sum(np.abs(J) ** 2) + np.sum(model(eta) ** 2) / eta.size
    if span <= flat_tol * scale:
        raise DegenerateFit("misfit is flat in depth; the data do not identify the source depth")
    # local minima of the coarse curve (plateaus count once)
    left = np.r_[np.inf, mis[:-1]]
    right = np.r_[mis[1:], np.inf]
    loc = np.nonzero((mis <= left) & (mis < right))[0]
    cell = D / cells

    def refine(k):
        lo, hi = eta[max(k - 1, 0)], eta[min(k + 1, cells)]
        r = optimize.minimize_scalar(lambda t: misfit_amp(t)[0][0], bounds=(lo, hi),
                                     method="bounded", options={"xatol": 1e-9 * D})
        t = r.x if r.fun <= mis[k] else eta[k]
        return float(t), float(misfit_amp(t)[0][0])

    refined = sorted((refine(k) for k in loc), key=lambda p: p[1])
    best_eta, best_val = refined[0]
    ties = [p for p in refined if p[1] - best_val <= tie_tol * span]
    distinct = [ties[0]]
    for p in ties[1:]:
        if all(abs(p[0] - q[0]) > 2 * cell for q in distinct):
            distinct.append(p)
    amp = float(misfit_amp(best_eta)[1][0])
    prof = ImagingProfile("depth", eta, mis, int(modes.max()),
                          {"formula": "depth misfit", "fit_amplitude": fit_amplitude})
    return DepthEstimate(best_eta, prof, len(distinct) == 1,
                         tuple(p[0] for p in distinct), cell, amp)
