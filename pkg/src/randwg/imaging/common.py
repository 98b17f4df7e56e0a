"""Array geometry, recording windows, profiles and shared helpers."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from ..media import CovarianceKernel
from ..waveguide import ModeSet, WaveguideGeometry, eigenfunction

__all__ = ["ArraySpec", "ImagingSetup", "ImagingProfile", "CINTParams",
           "recording_window", "depth_coupling", "depth_coupling_diagonal"]


def recording_window(x, shape: str = "indicator", taper: float = 0.2):
    """Recording window ``psi`` at scaled arrival times ``x = tau / T``.

    ``"indicator"`` is 1 on ``[0, 1)``; ``"raised_cosine"`` is 1 on
    ``[0, 1 - taper]`` and falls smoothly to 0 at ``x = 1``.
    """
    x = np.asarray(x, dtype=float)
    inside = (x >= 0) & (x < 1)
    if shape == "indicator":
        return inside.astype(float)
    if shape == "raised_cosine":
        if not 0 < taper <= 1:
            raise ValueError("taper must lie in (0, 1]")
        edge = 1 - taper
        ramp = 0.5 * (1 + np.cos(np.pi * np.clip((x - edge) / taper, 0, 1)))
        return np.where(inside, np.where(x <= edge, 1.0, ramp), 0.0)
    raise ValueError(f"unknown window shape {shape!r}")


@dataclass(frozen=True)
class ArraySpec:
    """Receiver array at range ``z_array``.

    Parameters
    ----------
    aperture : float
        Cross-range length ``|A_X|``; the array covers ``[-|A_X|/2, |A_X|/2]``
        shifted by ``center``.
    eta_range : (float, float)
        Depth interval covered by the array.
    z_array : float
        Range of the array from the source.
    duration : float or None
        Recording time ``T`` in scaled units; mode ``j`` arrives at
        ``beta_j' z_array``. ``None`` records everything.
    n_modes : int or None
        Hard cutoff ``N_T`` applied on top of the window.
    """

    aperture: float
    z_array: float
    eta_range: tuple = (0.0, 1.0)
    center: float = 0.0
    duration: float | None = None
    window: str = "indicator"
    taper: float = 0.2
    n_modes: int | None = None
    eps: float | None = None

    def __post_init__(self):
        if not self.aperture > 0:
            raise ValueError("aperture must be positive")
        if not self.z_array > 0:
            raise ValueError("array range must be positive")
        e1, e2 = self.eta_range
        if not 0 <= e1 < e2:
            raise ValueError("need 0 <= eta_1 < eta_2")
        if self.duration is not None and not self.duration > 0:
            raise ValueError("recording duration must be positive")
        if self.n_modes is not None and self.n_modes < 1:
            raise ValueError("n_modes must be at least 1")

    def indicator(self, X):
        """Aperture indicator ``1_A(X)``."""
        X = np.asarray(X, dtype=float) - self.center
        return (np.abs(X) <= 0.5 * self.aperture).astype(float)

    def travel_times(self, modes: ModeSet):
        return modes.beta_prime(modes.indices) * self.z_array

    def weights(self, modes: ModeSet) -> np.ndarray:
        """``psi(beta_j' Z_A / T)`` for ``j = 1..N`` with the ``N_T`` cutoff."""
        if self.duration is None:
            w = np.ones(modes.N)
        else:
            w = recording_window(self.travel_times(modes) / self.duration, self.window, self.taper)
        if self.n_modes is not None:
            w = np.where(modes.indices <= self.n_modes, w, 0.0)
        return w

    def mode_cutoff(self, modes: ModeSet) -> int:
        """Number ``N_T`` of leading modes with nonzero weight."""
        w = self.weights(modes)
        nz = np.nonzero(w == 0)[0]
        return int(nz[0]) if nz.size else modes.N

    def full_depth(self, depth: float) -> bool:
        return self.eta_range[0] <= 0 and self.eta_range[1] >= depth


@dataclass(frozen=True)
class ImagingSetup:
    """Waveguide, boundary statistics, array and source location."""

    geometry: WaveguideGeometry
    kernel: CovarianceKernel
    array: ArraySpec
    source_x: float = 0.0
    source_eta: float = 0.5

    def __post_init__(self):
        if not 0 < self.source_eta < self.geometry.depth:
            raise ValueError("source depth must lie inside the waveguide")

    def modes(self, omega: float) -> ModeSet:
        return ModeSet(self.geometry, omega)


@dataclass
class ImagingProfile:
    """A sampled imaging functional along one axis.

    ``axis`` is one of ``"cross-range"``, ``"range"`` (scaled range) or
    ``"depth"``.
    """

    axis: str
    points: np.ndarray
    values: np.ndarray
    n_modes: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.axis not in ("cross-range", "range", "depth"):
            raise ValueError(f"unknown axis {self.axis!r}")
        self.points = np.asarray(self.points, dtype=float)
        self.values = np.asarray(self.values)
        if self.points.shape != self.values.shape[-1:]:
            raise ValueError("points and values disagree in length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("profile has non-finite values")

    def normalized(self) -> np.ndarray:
        a = np.abs(self.values)
        return a / a.max() if a.max() > 0 else a

    def peak(self) -> float:
        return float(self.points[np.argmax(np.abs(self.values))])

    def width(self, level: float = 0.5) -> float:
        """Full width of the main lobe of ``|values|`` at ``level`` of the peak."""
        a = self.normalized()
        i = int(np.argmax(a))
        x = self.points

        def crossing(step):
            k = i
            while 0 <= k + step < a.size and a[k + step] >= level:
                k += step
            if not 0 <= k + step < a.size:
                return x[k]
            # linear interpolation between k and k+step
            t = (a[k] - level) / (a[k] - a[k + step])
            return x[k] + t * (x[k + step] - x[k])

        return float(crossing(1) - crossing(-1))

    def first_zero(self, start: float | None = None) -> float:
        """First sign change of the real part to the right of the peak (or ``start``)."""
        v = np.real(self.values)
        x = self.points
        i = int(np.argmax(np.abs(self.values))) if start is None else int(np.searchsorted(x, start))
        for k in range(i, v.size - 1):
            if v[k] == 0:
                return float(x[k])
            if v[k] * v[k + 1] < 0:
                return float(x[k] - v[k] * (x[k + 1] - x[k]) / (v[k + 1] - v[k]))
        raise ValueError("no zero crossing in the sampled range")

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# axis={self.axis} n_modes={self.n_modes}\n")
            fh.write(f"# meta={json.dumps(self.meta, sort_keys=True, default=str)}\n")
            fh.write("point,real,imag,abs\n")
            for p, v in zip(self.points, np.asarray(self.values, dtype=complex)):
                fh.write(f"{p:.12g},{v.real:.12g},{v.imag:.12g},{abs(v):.12g}\n")


@dataclass(frozen=True)
class CINTParams:
    """Windows of the local cross-correlations.

    ``cutoff`` is the frequency-offset half-width ``Omega``; ``xd`` holds the
    per-mode cross-range windows (``None`` takes the decoherence lengths from
    the moment engine).
    """

    cutoff: float = 1.0
    xd: tuple | None = None
    shape: str = "indicator"

    def __post_init__(self):
        if self.cutoff < 0:
            raise ValueError("frequency cutoff must be non-negative")
        if self.shape not in ("indicator", "gaussian"):
            raise ValueError(f"unknown window shape {self.shape!r}")

    def cross_window(self, u, width):
        u = np.asarray(u, dtype=float)
        if self.shape == "indicator":
            return (np.abs(u) <= width).astype(float)
        return np.exp(-0.5 * (u / width) ** 2)


def depth_coupling(array: ArraySpec, D: float, j, l, epsabs: float = 1e-14):
    """``Gamma_jl = int_{eta_1}^{eta_2} phi_j phi_l d eta`` by quadrature."""
    e1, e2 = array.eta_range
    e2 = min(e2, D)
    j, l = np.broadcast_arrays(np.atleast_1d(j), np.atleast_1d(l))
    val, _ = integrate.quad_vec(lambda y: eigenfunction(j, y, D) * eigenfunction(l, y, D),
                                e1, e2, epsabs=epsabs, epsrel=1e-13, limit=400)
    return val


def depth_coupling_diagonal(array: ArraySpec, D: float, j):
    """Closed form of ``Gamma_jj`` for the depth interval ``[eta_1, eta_2]``."""
    e1, e2 = array.eta_range
    e2 = min(e2, D)
    h = np.asarray(j, dtype=float) - 0.5
    sinc = lambda x: np.sinc(x / np.pi)
    return (e2 - e1) / D + e2 / D * sinc(2 * np.pi * h * e2 / D) - e1 / D * sinc(2 * np.pi * h * e1 / D)
