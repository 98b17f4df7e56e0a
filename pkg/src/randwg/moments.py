"""Closed-form statistics of the random transfer coefficients.

Everything here is a pure function of a :class:`~randwg.waveguide.ModeSet`
(or a geometry plus frequencies), a :class:`~randwg.media.CovarianceKernel`
and the evaluation points. Points follow one convention throughout:
``X1, X2`` are observation points and ``X1p, X2p`` the matching source
points, so a second moment is ``E[T_j(X1, X1p) conj(T_l(X2, X2p))]``.

Offsets used repeatedly::

    A = X1 - X1p,   B = X2 - X2p,   a = X1 - X2,   ap = X1p - X2p
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import (BranchWarning, QuadratureError, RegimeUnsupported,
                     ValidityWarning)
from .media import CovarianceKernel, c_o, r_o
from .solver import coupling_diagonal
from .waveguide import ModeSet, WaveguideGeometry

__all__ = [
    "scattering_mean_free_path", "gamma", "decoherence_length",
    "decoherence_frequency", "decoherence_frequency_high_n", "ScalesReport",
    "scales_report", "MomentQuery", "mean_transfer", "second_moment_exact",
    "co_path_integral", "second_moment_narrow", "two_mode_moment_full",
    "two_mode_moment_simplified", "two_mode_parameter", "two_freq_moment",
    "snr", "SNR_CAP", "fourth_moment", "moment_pde_residual",
    "fourth_moment_pde_residual",
]

SNR_CAP = 1e12
# offsets beyond this fraction of ell trigger the narrow-offset warning
NARROW_FRACTION = 0.3


# --------------------------------------------------------------------------
# scales

def scattering_mean_free_path(kernel: CovarianceKernel, modes: ModeSet, j=None,
                              form: str = "explicit"):
    """Range over which the mean of mode ``j`` decays by ``e``.

    ``form="explicit"`` uses the bracket expression in ``N`` and ``alpha``;
    ``form="coupling"`` uses ``8 beta_j^2 / (q_jj^2 R_o(0))``. They agree
    identically.
    """
    j = modes.indices if j is None else np.asarray(j)
    if np.any((j < 1) | (j > modes.N)):
        raise IndexError(f"mode index must lie in 1..{modes.N}")
    if kernel.sigma == 0:
        return np.full(np.shape(j), np.inf)
    D = modes.depth
    if form == "explicit":
        h = j - 0.5
        K = modes.N + modes.alpha - 0.5
        return 2 * D * D / (kernel.sigma ** 2 * np.pi ** 2 * kernel.ell) * (K * K - h * h) / h ** 4
    if form == "coupling":
        q = coupling_diagonal(D, modes.N)[j]
        return 8 * modes.beta_j(j) ** 2 / (q * q * kernel.r0)
    raise ValueError(f"unknown form {form!r}")


def gamma(Z: float, S1: float) -> float:
    """Low-SNR parameter ``Z / S_1``."""
    if not (Z > 0 and S1 > 0):
        raise ValueError("need Z > 0 and S1 > 0")
    return Z / S1


def decoherence_length(kernel: CovarianceKernel, modes: ModeSet, j, Z):
    """Gaussian width ``ell sqrt(3 S_j / (2 Z))`` of the cross-range correlation."""
    if np.any(np.asarray(Z) <= 0):
        raise ValueError("Z must be positive")
    S = scattering_mean_free_path(kernel, modes, j)
    return kernel.ell * np.sqrt(1.5 * S / Z)


def _inv_sqrt_s_derivative(kernel, modes, j):
    # S^{-1/2} is proportional to 1/beta at fixed q, so d/domega = -S^{-1/2} beta'/beta
    S = scattering_mean_free_path(kernel, modes, j)
    return -modes.beta_prime(j) / (modes.beta_j(j) * np.sqrt(S))


def decoherence_frequency(kernel: CovarianceKernel, modes: ModeSet, j, Z, warn: bool = True):
    """``(Omega_d, Omega_j)``: sinc decay scale and Gaussian width in frequency offset.

    ``Omega_d = S beta^2 ell^2 / (Z^2 |beta'|)`` and
    ``Omega_j = 1 / (sqrt(2 Z) |d S^{-1/2} / d omega|)``. A
    :class:`ValidityWarning` is raised if ``Omega_d >= Omega_j``, in which case
    the frequency-offset expansions are not in their intended regime.
    """
    Z = np.asarray(Z, dtype=float)
    if np.any(Z <= 0):
        raise ValueError("Z must be positive")
    S = scattering_mean_free_path(kernel, modes, j)
    b, bp = modes.beta_j(j), modes.beta_prime(j)
    od = S * b * b * kernel.ell ** 2 / (Z * Z * np.abs(bp))
    om = 1.0 / (np.sqrt(2 * Z) * np.abs(_inv_sqrt_s_derivative(kernel, modes, j)))
    if warn and np.any(od >= om):
        warnings.warn("decoherence frequency exceeds the Gaussian frequency width",
                      ValidityWarning, stacklevel=2)
    return od, om


def decoherence_frequency_high_n(kernel: CovarianceKernel, modes: ModeSet, j, Z):
    """Large-``N`` approximation of ``Omega_d`` in terms of ``ell/lambda``."""
    j = np.asarray(j, dtype=float)
    g = gamma(float(Z), float(scattering_mean_free_path(kernel, modes, 1)))
    lam = 2 * np.pi * modes.geometry.sound_speed / modes.omega
    N, K = modes.N, modes.N + modes.alpha - 0.5
    return (modes.omega * kernel.sigma ** 2 * np.pi ** 3 / (64 * g * g)
            * (kernel.ell / lam) ** 3 * (K * K - (j - 0.5) ** 2) ** 2.5
            / (N ** 9 * (j - 0.5) ** 4))


@dataclass(frozen=True)
class ScalesReport:
    """Per-mode statistical scales at range ``Z``; arrays are indexed by ``j - 1``."""

    Z: float
    omega: float
    N: int
    alpha: float
    beta: np.ndarray
    S: np.ndarray
    Xd: np.ndarray
    Omega_d: np.ndarray
    Omega: np.ndarray
    gamma: float

    @property
    def S1(self) -> float:
        return float(self.S[0])

    @property
    def SN(self) -> float:
        return float(self.S[-1])

    def rows(self):
        """Table rows ``(j, beta, S, Xd, Omega_d, Omega)``."""
        for i in range(self.N):
            yield (i + 1, self.beta[i], self.S[i], self.Xd[i], self.Omega_d[i], self.Omega[i])

    def as_dict(self) -> dict:
        return {
            "Z": self.Z, "omega": self.omega, "N": self.N, "alpha": self.alpha,
            "gamma": self.gamma, "S1": self.S1, "SN": self.SN,
            "beta": self.beta.tolist(), "S": self.S.tolist(), "Xd": self.Xd.tolist(),
            "Omega_d": self.Omega_d.tolist(), "Omega": self.Omega.tolist(),
        }


def scales_report(kernel: CovarianceKernel, modes: ModeSet, Z: float,
                  center: ModeSet | None = None) -> ScalesReport:
    """All scales at range ``Z``; ``gamma`` uses ``S_1`` at ``center`` (default ``modes``)."""
    j = modes.indices
    S = scattering_mean_free_path(kernel, modes, j)
    S1c = scattering_mean_free_path(kernel, center or modes, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        od, om = decoherence_frequency(kernel, modes, j, Z)
    return ScalesReport(float(Z), modes.omega, modes.N, modes.alpha, np.array(modes.beta),
                        S, decoherence_length(kernel, modes, j, Z), od, om,
                        gamma(Z, float(S1c)))


@dataclass(frozen=True)
class MomentQuery:
    """Arguments of one moment evaluation.

    ``points`` is ``(X1, X2, X1p, X2p)``; frequencies default to equal.
    """

    j: int
    l: int
    omega1: float
    omega2: float
    points: tuple
    Z: float

    def validate(self, N: int) -> None:
        if not (1 <= self.j <= N and 1 <= self.l <= N):
            raise ValueError(f"mode indices must lie in 1..{N}")
        if not self.Z > 0:
            raise ValueError("Z must be positive")
        if len(self.points) != 4:
            raise ValueError("points must be (X1, X2, X1p, X2p)")


# --------------------------------------------------------------------------
# first and second moments

def mean_transfer(kernel: CovarianceKernel, modes: ModeSet, j: int, X, Xp, Z):
    """Mean transfer coefficient: the free Green function damped by ``exp(-Z/S_j)``."""
    Z = np.asarray(Z, dtype=float)
    if np.any(Z <= 0):
        raise ValueError("Z must be positive")
    b = modes.beta_j(j)
    S = scattering_mean_free_path(kernel, modes, j)
    d = np.asarray(X) - np.asarray(Xp)
    return np.sqrt(b / (2j * np.pi * Z)) * np.exp(-Z / S + 0.5j * b * d * d / Z)


def co_path_integral(kernel: CovarianceKernel, a, ap, method: str = "quad",
                     epsabs: float = 1e-14, epsrel: float = 1e-12):
    """``int_0^1 C_o(a s + ap (1 - s)) ds`` for arrays ``a``, ``ap``.

    ``method="quad"`` uses adaptive quadrature; ``method="erf"`` the closed
    form of the Gaussian family (used as an independent check).
    """
    a, ap = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(ap, dtype=float))
    l = kernel.ell
    if method == "erf":
        d = a - ap
        out = np.empty(a.shape)
        small = np.abs(d) < 1e-6 * l
        # the Gaussian averaged over the segment [ap, a]
        s2 = np.sqrt(2) * l
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = l * np.sqrt(np.pi / 2) * (special.erf(a / s2) - special.erf(ap / s2)) / d
        m = 0.5 * (a + ap)
        g = np.exp(-0.5 * (m / l) ** 2)
        # second-order midpoint rule is exact to O(d^4) for tiny segments
        avg_small = g * (1 + (d * d / 24) * ((m / l) ** 2 - 1) / l ** 2)
        out = np.where(small, 1 - avg_small, 1 - avg)
        return out
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    flat_a, flat_ap = a.ravel(), ap.ravel()
    if flat_a.size == 0:
        return np.zeros(a.shape)
    val, err = integrate.quad_vec(lambda s: c_o(kernel, flat_a * s + flat_ap * (1 - s)),
                                  0.0, 1.0, epsabs=epsabs, epsrel=epsrel)
    if err > max(1e3 * epsabs, 1e2 * epsrel * np.max(np.abs(val))):
        raise QuadratureError("C_o path integral did not converge", achieved=err)
    return val.reshape(a.shape)


def second_moment_exact(kernel: CovarianceKernel, modes: ModeSet, j: int,
                        X1, X2, X1p, X2p, Z, method: str = "quad"):
    """Single-mode, single-frequency second moment for any offsets.

    ``beta/(2 pi Z) exp{i beta (A^2 - B^2)/(2Z) - (2Z/S) int_0^1 C_o(a s + ap (1-s)) ds}``.
    """
    Z = np.asarray(Z, dtype=float)
    if np.any(Z <= 0):
        raise ValueError("Z must be positive")
    b = modes.beta_j(j)
    S = scattering_mean_free_path(kernel, modes, j)
    X1, X2, X1p, X2p = (np.asarray(v, dtype=float) for v in (X1, X2, X1p, X2p))
    A, B = X1 - X1p, X2 - X2p
    I = co_path_integral(kernel, X1 - X2, X1p - X2p, method=method)
    return b / (2 * np.pi * Z) * np.exp(0.5j * b * (A * A - B * B) / Z - 2 * Z / S * I)


def _narrow_check(kernel, a, ap, warn):
    if warn and np.any(np.maximum(np.abs(a), np.abs(ap)) > NARROW_FRACTION * kernel.ell):
        warnings.warn("offsets are not small compared to the correlation length; "
                      "the Gaussian approximation may be inaccurate",
                      ValidityWarning, stacklevel=3)


def second_moment_narrow(kernel: CovarianceKernel, modes: ModeSet, j: int,
                         X1, X2, X1p, X2p, Z, warn: bool = True):
    """Gaussian approximation of :func:`second_moment_exact` for offsets ``<< ell``.

    Exact when ``C_o`` is replaced by its quadratic expansion.
    """
    Z = np.asarray(Z, dtype=float)
    if np.any(Z <= 0):
        raise ValueError("Z must be positive")
    b = modes.beta_j(j)
    Xd = decoherence_length(kernel, modes, j, Z)
    X1, X2, X1p, X2p = (np.asarray(v, dtype=float) for v in (X1, X2, X1p, X2p))
    A, B, a, ap = X1 - X1p, X2 - X2p, X1 - X2, X1p - X2p
    _narrow_check(kernel, a, ap, warn)
    return b / (2 * np.pi * Z) * np.exp(0.5j * b * (A * A - B * B) / Z
                                        - (a * a + ap * ap + a * ap) / (2 * Xd * Xd))


# --------------------------------------------------------------------------
# two modes / two frequencies

def _f1(w):
    """``(w cot w - 1) / w^2``, even in ``w``, -> -1/3."""
    w = np.asarray(w, dtype=complex)
    w2 = w * w
    small = np.abs(w) < 1e-2
    with np.errstate(all="ignore"):
        big = (w * _cot(w) - 1) / w2
    return np.where(small, -1 / 3 - w2 / 45 - 2 * w2 * w2 / 945, big)


def _f2(w):
    """``(w / sin w - 1) / w^2``, even in ``w``, -> 1/6."""
    w = np.asarray(w, dtype=complex)
    w2 = w * w
    small = np.abs(w) < 1e-2
    with np.errstate(all="ignore"):
        big = (w * _csc(w) - 1) / w2
    return np.where(small, 1 / 6 + 7 * w2 / 360 + 31 * w2 * w2 / 15120, big)


def _cot(w):
    # written through exp(2iw) in the half plane where it is small
    w = np.asarray(w, dtype=complex)
    up = w.imag >= 0
    s = np.where(up, w, np.conj(w))
    e = np.exp(2j * s)
    c = 1j * (e + 1) / (e - 1)
    return np.where(up, c, np.conj(c))


def _csc(w):
    w = np.asarray(w, dtype=complex)
    up = w.imag >= 0
    s = np.where(up, w, np.conj(w))
    e = np.exp(2j * s)
    c = 2j * np.exp(1j * s) / (e - 1)
    return np.where(up, c, np.conj(c))


def _log_sinc(w):
    """Principal log of ``sin(w)/w`` computed without overflow."""
    w = np.asarray(w, dtype=complex)
    up = w.imag >= 0
    s = np.where(up, w, np.conj(w))
    with np.errstate(all="ignore"):
        # sin s = exp(-i s) (exp(2 i s) - 1) / (2 i)
        big = -1j * s + np.log((np.exp(2j * s) - 1) / 2j) - np.log(s)
    small = np.abs(s) < 1e-2
    s2 = s * s
    big = np.where(small, -s2 / 6 - s2 * s2 / 180, big)
    return np.where(up, big, np.conj(big))


def _sinc_inv_sqrt(w, samples: int | None = None):
    """``sinc(w)^{-1/2}`` continued along the segment ``t w``, ``t in [0, 1]``.

    The branch starts at 1 for ``t = 0`` and is tracked by unwrapping the
    argument of ``sinc`` along the path.
    """
    w = np.asarray(w, dtype=complex)
    out = np.empty(w.shape, dtype=complex)
    for idx, wi in np.ndenumerate(w):
        n = samples or int(64 + 8 * abs(wi))
        t = np.linspace(0.0, 1.0, n)
        ls = _log_sinc(t * wi)
        if np.min(np.abs(np.exp(ls[1:]))) < 1e-10:
            warnings.warn("path passes near a zero of the complex sine", BranchWarning,
                          stacklevel=3)
        arg = np.unwrap(ls.imag)
        out[idx] = np.exp(-0.5 * (ls.real[-1] + 1j * arg[-1]))
    return out


def two_mode_parameter(kernel: CovarianceKernel, modes: ModeSet, j: int, l: int, Z):
    """Small parameter ``Z^2 |beta_j - beta_l| / (beta_j beta_l ell^2 sqrt(S_j S_l))``."""
    bj, bl = modes.beta_j(j), modes.beta_j(l)
    Sj, Sl = (scattering_mean_free_path(kernel, modes, i) for i in (j, l))
    return np.asarray(Z) ** 2 * abs(bj - bl) / (bj * bl * kernel.ell ** 2 * np.sqrt(Sj * Sl))


def _gaussian_kernel_moment(bj, bl, Sj, Sl, ell, X1, X2, X1p, X2p, Z, prefactor_beta2=None):
    """Shared evaluator for the two-mode and two-frequency moments.

    The exponent is arranged so that the terms which individually diverge as
    ``beta_j -> beta_l`` cancel analytically:

    ``-(Sj^-1/2 - Sl^-1/2)^2 Z + i (bj A^2 - bl B^2)/(2Z)
    + h [(a^2 + ap^2) f1(w) - 2 a ap f2(w)]``

    with ``h = Z / (ell^2 sqrt(Sj Sl))`` and
    ``w^2 = 2 i Z^2 (bj - bl) / (ell^2 P sqrt(Sj Sl))``, where ``P`` is
    ``bj bl`` unless ``prefactor_beta2`` is given.
    """
    Z = np.asarray(Z, dtype=float)
    X1, X2, X1p, X2p = (np.asarray(v, dtype=float) for v in (X1, X2, X1p, X2p))
    A, B, a, ap = X1 - X1p, X2 - X2p, X1 - X2, X1p - X2p
    P = bj * bl if prefactor_beta2 is None else prefactor_beta2
    rs = np.sqrt(Sj * Sl)
    h = Z / (ell * ell * rs)
    w = np.sqrt(2j * Z * Z * (bj - bl) / (ell * ell * P * rs) + 0j)
    damp = -(1 / np.sqrt(Sj) - 1 / np.sqrt(Sl)) ** 2 * Z
    expo = (damp + 0.5j * (bj * A * A - bl * B * B) / Z
            + h * ((a * a + ap * ap) * _f1(w) - 2 * a * ap * _f2(w)))
    amp = np.sqrt(P) / (2 * np.pi * Z) * _sinc_inv_sqrt(w)
    return amp * np.exp(expo)


def two_mode_moment_full(kernel: CovarianceKernel, modes: ModeSet, j: int, l: int,
                         X1, X2, X1p, X2p, Z):
    """Two-mode moment ``E[T_j(X1, X1p) conj(T_l(X2, X2p))]`` at one frequency.

    Solves the moment equation with ``C_o`` replaced by its quadratic
    expansion. The ``sinc^{-1/2}``, ``cot`` and ``1/sin`` factors of the
    complex argument ``w`` are combined into the regular functions
    ``(w cot w - 1)/w^2`` and ``(w/sin w - 1)/w^2``, so ``j = l`` is a
    removable point rather than a division by zero.
    """
    if np.any(np.asarray(Z) <= 0):
        raise ValueError("Z must be positive")
    bj, bl = modes.beta_j(j), modes.beta_j(l)
    Sj, Sl = (scattering_mean_free_path(kernel, modes, i) for i in (j, l))
    return _gaussian_kernel_moment(bj, bl, Sj, Sl, kernel.ell, X1, X2, X1p, X2p, Z)


def two_mode_moment_simplified(kernel: CovarianceKernel, modes: ModeSet, j: int, l: int,
                               X1, X2, X1p, X2p, Z, warn: bool = True, tol: float = 0.1):
    """Leading-order form of :func:`two_mode_moment_full` for a small
    :func:`two_mode_parameter` (warning above ``tol``)."""
    Z = np.asarray(Z, dtype=float)
    if np.any(Z <= 0):
        raise ValueError("Z must be positive")
    if warn and np.any(two_mode_parameter(kernel, modes, j, l, Z) > tol):
        warnings.warn("two-mode expansion parameter is not small", ValidityWarning,
                      stacklevel=2)
    bj, bl = modes.beta_j(j), modes.beta_j(l)
    Sj, Sl = (scattering_mean_free_path(kernel, modes, i) for i in (j, l))
    Xj, Xl = (decoherence_length(kernel, modes, i, Z) for i in (j, l))
    X1, X2, X1p, X2p = (np.asarray(v, dtype=float) for v in (X1, X2, X1p, X2p))
    A, B, a, ap = X1 - X1p, X2 - X2p, X1 - X2, X1p - X2p
    expo = (0.5j * (bj * A * A - bl * B * B) / Z
            - (1 / np.sqrt(Sj) - 1 / np.sqrt(Sl)) ** 2 * Z
            - (a * a + ap * ap + a * ap) / (2 * Xj * Xl))
    return np.sqrt(bj * bl) / (2 * np.pi * Z) * np.exp(expo)


def two_freq_moment(kernel: CovarianceKernel, geometry: WaveguideGeometry, j: int,
                    omega: float, domega: float, X1, X2, X1p, X2p, Z,
                    form: str = "full", warn: bool = True):
    """Two-frequency moment ``E[T_j(omega + domega/2) conj(T_j(omega - domega/2))]``.

    Parameters
    ----------
    form : {"full", "exact", "small"}
        ``"full"``: first-order expansion in ``domega`` of the two-mode
        structure, with ``beta_j(omega)^2`` in the amplitude and ``S_j(omega)``
        throughout. ``"exact"``: the same structure with the actual
        ``beta_j(omega +- domega/2)`` and ``S_j`` values. ``"small"``: the
        Gaussian form valid for ``|domega| << Omega_d`` (warns otherwise).
    """
    if np.any(np.asarray(Z) <= 0):
        raise ValueError("Z must be positive")
    ms = ModeSet(geometry, omega)
    m1, m2 = ModeSet(geometry, omega + domega / 2), ModeSet(geometry, omega - domega / 2)
    if m1.N != ms.N or m2.N != ms.N:
        raise ValueError("frequency offset changes the mode count")
    b, bp = ms.beta_j(j), ms.beta_prime(j)
    S = scattering_mean_free_path(kernel, ms, j)
    if form == "small":
        if warn:
            od, _ = decoherence_frequency(kernel, ms, j, Z, warn=False)
            if np.any(abs(domega) > 0.1 * od):
                warnings.warn("frequency offset is not small compared to Omega_d",
                              ValidityWarning, stacklevel=2)
        Xd = decoherence_length(kernel, ms, j, Z)
        b1, b2 = m1.beta_j(j), m2.beta_j(j)
        X1, X2, X1p, X2p = (np.asarray(v, dtype=float) for v in (X1, X2, X1p, X2p))
        A, B, a, ap = X1 - X1p, X2 - X2p, X1 - X2, X1p - X2p
        Z = np.asarray(Z, dtype=float)
        return b / (2 * np.pi * Z) * np.exp(0.5j * (b1 * A * A - b2 * B * B) / Z
                                            - (a * a + ap * ap + a * ap) / (2 * Xd * Xd))
    if form == "exact":
        S1, S2 = (scattering_mean_free_path(kernel, m, j) for m in (m1, m2))
        return _gaussian_kernel_moment(m1.beta_j(j), m2.beta_j(j), S1, S2, kernel.ell,
                                       X1, X2, X1p, X2p, Z)
    if form != "full":
        raise ValueError(f"unknown form {form!r}")
    b1, b2 = b + domega * bp / 2, b - domega * bp / 2
    val = _gaussian_kernel_moment(b1, b2, S, S, kernel.ell, X1, X2, X1p, X2p, Z,
                                  prefactor_beta2=b * b)
    Z = np.asarray(Z, dtype=float)
    a = np.asarray(X1, dtype=float) - np.asarray(X2, dtype=float)
    ap = np.asarray(X1p, dtype=float) - np.asarray(X2p, dtype=float)
    # frequency damping and the residual phase of the first-order expansion
    dS = _inv_sqrt_s_derivative(kernel, ms, j)
    extra = -(domega * dS) ** 2 * Z - 0.125j * domega * bp * (a - ap) ** 2 / Z
    return val * np.exp(extra)


def snr(kernel: CovarianceKernel, modes: ModeSet, j: int, Z):
    """Coherent-to-incoherent ratio of mode ``j`` at coincident points.

    ``exp(-Z/S) / sqrt(1 - exp(-2Z/S))``; values above :data:`SNR_CAP`
    (including ``Z -> 0``) are returned as the cap.
    """
    Z = np.asarray(Z, dtype=float)
    if np.any(Z < 0):
        raise ValueError("Z must be non-negative")
    S = scattering_mean_free_path(kernel, modes, j)
    r = Z / S
    with np.errstate(divide="ignore"):
        val = np.exp(-r) / np.sqrt(-np.expm1(-2 * r))
    return np.minimum(val, SNR_CAP)


# --------------------------------------------------------------------------
# fourth moments

def fourth_moment(kernel: CovarianceKernel, modes: ModeSet, j: int, J: int,
                  points, Z, regime: str, modes2: ModeSet | None = None,
                  l: int | None = None, L: int | None = None):
    """``E[T_j conj(T_l) T_J conj(T_L)]`` for ``l = j``, ``L = J``.

    Parameters
    ----------
    points : sequence of 8 arrays
        ``(X1, X2, X1p, X2p, Y1, Y2, Y1p, Y2p)``; the ``Y`` points belong to
        mode ``J`` at the frequency of ``modes2`` (default ``modes``).
    regime : {"case1", "case2"}
        ``"case1"`` (aperture much wider than ``ell``): product of the two
        second moments. ``"case2"`` (aperture below ``ell``): the two pairs
        are coupled through the normalized offsets ``a/Xd_j + b/Xd_J``.
    """
    if (l is not None and l != j) or (L is not None and L != J):
        raise RegimeUnsupported("only the pattern l = j, L = J has a closed form")
    if regime not in ("case1", "case2"):
        raise RegimeUnsupported(f"unknown regime {regime!r}")
    m2 = modes2 or modes
    X1, X2, X1p, X2p, Y1, Y2, Y1p, Y2p = (np.asarray(v, dtype=float) for v in points)
    Z = np.asarray(Z, dtype=float)
    if regime == "case1":
        return (second_moment_narrow(kernel, modes, j, X1, X2, X1p, X2p, Z, warn=False)
                * second_moment_narrow(kernel, m2, J, Y1, Y2, Y1p, Y2p, Z, warn=False))
    bj, bJ = modes.beta_j(j), m2.beta_j(J)
    Xj = decoherence_length(kernel, modes, j, Z)
    XJ = decoherence_length(kernel, m2, J, Z)
    u = (X1 - X2) / Xj + (Y1 - Y2) / XJ
    up = (X1p - X2p) / Xj + (Y1p - Y2p) / XJ
    phase = (0.5j * bj * ((X1 - X1p) ** 2 - (X2 - X2p) ** 2) / Z
             + 0.5j * bJ * ((Y1 - Y1p) ** 2 - (Y2 - Y2p) ** 2) / Z)
    return bj * bJ / (4 * np.pi ** 2 * Z * Z) * np.exp(phase - 0.5 * (u * u + up * up + u * up))


# --------------------------------------------------------------------------
# PDE residuals

def _quadratic_co(kernel):
    return lambda x: 0.5 * (np.asarray(x) / kernel.ell) ** 2


def moment_pde_residual(func, beta_j, beta_l, S_j, S_l, potential, X1, X2, Z, h, dz=None):
    """Finite-difference residual of the second-moment equation.

    ``func(X1, X2, Z)`` is the candidate moment (source points fixed).
    Returns ``|lhs - rhs| / |func|`` at the given points for the equation

    ``d_Z M = [i/(2 bj) d_1^2 - i/(2 bl) d_2^2 - (Sj^-1/2 - Sl^-1/2)^2
    - 2 potential(X1 - X2) / sqrt(Sj Sl)] M``

    with central differences of step ``h`` in ``X`` and ``dz`` (default ``h``)
    in ``Z``; for an exact solution the residual is ``O(h^2)``.
    """
    dz = h if dz is None else dz
    f0 = func(X1, X2, Z)
    dZ = (func(X1, X2, Z + dz) - func(X1, X2, Z - dz)) / (2 * dz)
    d1 = (func(X1 + h, X2, Z) - 2 * f0 + func(X1 - h, X2, Z)) / (h * h)
    d2 = (func(X1, X2 + h, Z) - 2 * f0 + func(X1, X2 - h, Z)) / (h * h)
    pot = (1 / np.sqrt(S_j) - 1 / np.sqrt(S_l)) ** 2 + 2 * potential(np.asarray(X1) - X2) / np.sqrt(S_j * S_l)
    rhs = 0.5j / beta_j * d1 - 0.5j / beta_l * d2 - pot * f0
    return np.abs(dZ - rhs) / np.abs(f0)


def fourth_moment_pde_residual(func, beta_j, beta_J, S_j, S_J, kernel: CovarianceKernel,
                               X, Z, h, regime: str = "case2", dz=None):
    """Finite-difference residual of the fourth-moment equation (``l=j``, ``L=J``).

    ``func(X1, X2, Y1, Y2, Z)``; ``X`` is the tuple ``(X1, X2, Y1, Y2)``.
    ``regime`` selects the covariance model: ``"case1"`` keeps only the
    self terms with quadratic ``C_o``; ``"case2"`` also keeps the cross terms
    with ``R_o`` expanded to second order; ``"full"`` uses the Gaussian
    kernel itself.
    """
    dz = h if dz is None else dz
    X1, X2, Y1, Y2 = (np.asarray(v, dtype=float) for v in X)
    f0 = func(X1, X2, Y1, Y2, Z)
    dZ = (func(X1, X2, Y1, Y2, Z + dz) - func(X1, X2, Y1, Y2, Z - dz)) / (2 * dz)

    def d2(k):
        args_p = [X1, X2, Y1, Y2]
        args_m = [X1, X2, Y1, Y2]
        args_p[k] = args_p[k] + h
        args_m[k] = args_m[k] - h
        return (func(*args_p, Z) - 2 * f0 + func(*args_m, Z)) / (h * h)

    kin = 0.5j * (d2(0) / beta_j - d2(1) / beta_j + d2(2) / beta_J - d2(3) / beta_J)
    rjj, rJJ, rjJ = np.sqrt(S_j * S_j), np.sqrt(S_J * S_J), np.sqrt(S_j * S_J)
    if regime == "full":
        co = lambda x: c_o(kernel, x)
        rr = lambda x: r_o(kernel, x) / kernel.r0
    elif regime in ("case1", "case2"):
        co = _quadratic_co(kernel)
        rr = lambda x: 1 - 0.5 * (np.asarray(x) / kernel.ell) ** 2
    else:
        raise RegimeUnsupported(f"unknown regime {regime!r}")
    pot = -2 * co(X1 - X2) / rjj - 2 * co(Y1 - Y2) / rJJ
    if regime != "case1":
        pot = pot + 2 * (rr(X1 - Y2) - rr(X1 - Y1) - rr(X2 - Y2) + rr(X2 - Y1)) / rjJ
    return np.abs(dZ - kin - pot * f0) / np.abs(f0)
