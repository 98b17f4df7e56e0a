"""Pathwise integration of the coupled Ito-Schrodinger system.

Each propagating mode ``j`` and frequency ``omega`` carries a field
``T(X, Z)`` obeying

    dT = [i/(2 beta) d_X^2 - q_jj^2 R_o(0)/(8 beta^2)] T dZ + i q_jj/(2 beta) T dB,

where all modes and frequencies are driven by one Brownian field ``B`` with
``E[B(X,Z) B(X',Z')] = min(Z, Z') R_o(X - X')``. A Strang step applies half a
free step (spectral multiplier ``exp(-i kappa^2 dZ/(4 beta))``), the phase
``exp(i q dB / (2 beta))`` and another half free step. The expectation of the
phase factor is ``exp(-q^2 R_o(0) dZ / (8 beta^2))``, so the damping term is
reproduced exactly in the mean and needs no separate treatment. The scheme
is unitary: the L2 norm of every field is conserved along each path.

Snapshot format
---------------
:meth:`Trajectory.save` writes a NumPy ``.npz`` archive with arrays

``values``   complex128, shape (S, F, J, M): field at S stored ranges,
             F frequencies, J modes, M grid nodes
``z``        float64 (S,) stored ranges
``omegas``   float64 (F,) angular frequencies
``modes``    int64 (J,) 1-based mode indices
``grid``     float64 [width, points]
``meta``     JSON string: seed, realization, step size, step count, kernel,
             geometry and a free-form initial-condition descriptor
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import GridMismatch, StepTooLarge
from .grid import GridSpec
from .media import BrownianSampler, CovarianceKernel, realization_rng
from .waveguide import ModeSet, WaveguideGeometry

# fields drawn per RNG call; even so that paired spectral draws never straddle calls
NOISE_CHUNK = 64


@dataclass(frozen=True)
class CouplingDiagonal:
    """Diagonal boundary coupling ``q_jj = -2 (pi/D)^2 (j - 1/2)^2``."""

    q: np.ndarray

    def __getitem__(self, j):
        return self.q[np.asarray(j) - 1]


def coupling_diagonal(D: float, N: int) -> CouplingDiagonal:
    if N < 1:
        raise ValueError("need at least one mode")
    j = np.arange(1, N + 1)
    q = -2.0 * (np.pi / D) ** 2 * (j - 0.5) ** 2
    q.setflags(write=False)
    return CouplingDiagonal(q)


@dataclass(frozen=True)
class SolverConfig:
    """Everything a trajectory needs besides its initial data.

    ``dz=None`` picks the largest step allowed by the phase bounds. Either
    bound can be disabled with ``None``. ``store_every=0`` keeps only the
    final range.
    """

    grid: GridSpec
    z_end: float
    geometry: WaveguideGeometry = WaveguideGeometry()
    kernel: CovarianceKernel = CovarianceKernel()
    omegas: tuple = (1.0,)
    modes: tuple | None = None
    dz: float | None = None
    seed: int = 0
    store_every: int = 0
    phase_bound: float | None = 0.1
    diffraction_bound: float | None = np.pi / 4
    min_width: float = 20.0

    def __post_init__(self):
        if not self.z_end > 0:
            raise ValueError("z_end must be positive")
        if self.dz is not None and not self.dz > 0:
            raise ValueError("dz must be positive")
        object.__setattr__(self, "omegas", tuple(float(w) for w in np.atleast_1d(self.omegas)))
        if self.modes is not None:
            object.__setattr__(self, "modes", tuple(int(j) for j in self.modes))


@dataclass
class TransferField:
    """Per-frequency, per-mode complex fields on the grid at range ``z``.

    ``values`` has shape ``(F, J, M)``.
    """

    values: np.ndarray
    z: float
    grid: GridSpec
    omegas: tuple
    modes: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid.check(self.values)
        if self.values.shape[:2] != (len(self.omegas), len(self.modes)):
            raise GridMismatch("values shape does not match (omegas, modes)")

    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.values) ** 2, axis=-1) * self.grid.dx

    def mode(self, j: int, f: int = 0) -> np.ndarray:
        return self.values[f, self.modes.index(j)]


@dataclass
class Trajectory:
    """Stored snapshots of one realization, ``values`` of shape ``(S, F, J, M)``."""

    values: np.ndarray
    z: np.ndarray
    grid: GridSpec
    omegas: tuple
    modes: tuple
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.z)

    def __getitem__(self, s) -> TransferField:
        return TransferField(self.values[s], float(self.z[s]), self.grid,
                             self.omegas, self.modes, dict(self.meta))

    @property
    def final(self) -> TransferField:
        return self[-1]

    def save(self, path) -> Path:
        path = Path(path)
        np.savez(path, values=self.values, z=self.z, omegas=np.asarray(self.omegas),
                 modes=np.asarray(self.modes, dtype=np.int64),
                 grid=np.array([self.grid.width, self.grid.points], dtype=float),
                 meta=np.array(json.dumps(self.meta, sort_keys=True)))
        return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")

    @classmethod
    def load(cls, path) -> "Trajectory":
        with np.load(path, allow_pickle=False) as f:
            w, m = f["grid"]
            return cls(f["values"], f["z"], GridSpec(float(w), int(m)),
                       tuple(f["omegas"].tolist()), tuple(int(j) for j in f["modes"]),
                       json.loads(str(f["meta"])))


class Propagator:
    """Split-step engine for one configuration.

    Works on batches: initial data of shape ``(B, F, J, M)`` for ``B``
    realizations, each with its own random stream.
    """

    def __init__(self, config: SolverConfig):
        self.config = config
        g = config.geometry
        self.mode_sets = [ModeSet(g, w) for w in config.omegas]
        Ns = {ms.N for ms in self.mode_sets}
        if len(Ns) != 1:
            raise ValueError("mode count differs between frequency samples")
        N = Ns.pop()
        self.modes = config.modes or tuple(range(1, N + 1))
        if min(self.modes) < 1 or max(self.modes) > N:
            raise ValueError(f"modes must lie in 1..{N}")
        j = np.asarray(self.modes)
        self.beta = np.array([ms.beta_j(j) for ms in self.mode_sets])  # (F, J)
        q = coupling_diagonal(g.depth, N)[j]
        self.coef = q[None, :] / (2 * self.beta)  # phase per unit dB
        self.dz, self.n_steps = self._steps()
        kap2 = config.grid.kappa ** 2
        self.half = np.exp(-0.25j * kap2[None, None, :] * self.dz / self.beta[..., None])
        self.full = self.half * self.half
        self.sampler = BrownianSampler(config.kernel, config.grid, self.dz,
                                       min_width=config.min_width)

    def max_step(self) -> float:
        c = self.config
        bounds = [np.inf]
        r0 = c.kernel.r0
        if c.phase_bound is not None and r0 > 0:
            # |q| sqrt(dz r0) / (2 beta) <= bound
            bounds.append((c.phase_bound / np.max(np.abs(self.coef))) ** 2 / r0)
        if c.diffraction_bound is not None:
            bounds.append(c.diffraction_bound * 2 * self.beta.min() / c.grid.kappa_max ** 2)
        return min(bounds)

    def _steps(self):
        c = self.config
        dmax = self.max_step()
        if c.dz is None:
            n = max(1, int(np.ceil(c.z_end / dmax * (1 - 1e-12))))
        else:
            if c.dz > dmax * (1 + 1e-12):
                raise StepTooLarge(f"dz={c.dz:.4g} exceeds the allowed {dmax:.4g}")
            n = max(1, int(round(c.z_end / c.dz)))
            if abs(n * c.dz - c.z_end) > 1e-9 * c.z_end:
                raise ValueError("z_end must be a multiple of dz")
        return c.z_end / n, n

    def phase_spread(self) -> float:
        """RMS per-step noise phase of the worst mode."""
        return float(np.max(np.abs(self.coef)) * np.sqrt(self.dz * self.config.kernel.r0))

    def store_indices(self, store_every: int | None = None):
        se = self.config.store_every if store_every is None else store_every
        n = self.n_steps
        if se <= 0:
            return np.array([n])
        idx = np.arange(se, n + 1, se)
        return idx if idx[-1] == n else np.append(idx, n)

    def run(self, u0, realizations, master_seed=None, store_every=None,
            keep_noise=False, noise=None):
        """Propagate a batch.

        Parameters
        ----------
        u0 : array (B, F, J, M) or broadcastable (F, J, M)
        realizations : sequence of int
            Realization indices, one per batch row; each selects a stream.
        noise : array (B, n_steps, M), optional
            Explicit increments (overrides the random streams).

        Returns
        -------
        z : (S,) stored ranges
        out : (B, S, F, J, M)
        dB : (B, n_steps, M) if ``keep_noise``
        """
        c = self.config
        seed = c.seed if master_seed is None else master_seed
        realizations = list(realizations)
        B = len(realizations)
        F, J, M = len(c.omegas), len(self.modes), c.grid.points
        u = np.broadcast_to(np.asarray(u0, dtype=complex), (B, F, J, M))
        stores = self.store_indices(store_every)
        out = np.empty((B, len(stores), F, J, M), dtype=complex)
        rngs = None if noise is not None else [realization_rng(seed, r) for r in realizations]
        kept = np.empty((B, self.n_steps, M)) if keep_noise else None
        coef = self.coef[None, :, :, None]
        s = 0
        u = np.fft.fft(u, axis=-1) * self.half
        n = 0
        while n < self.n_steps:
            m = min(NOISE_CHUNK, self.n_steps - n)
            if noise is not None:
                dB = np.asarray(noise)[:, n:n + m]
            else:
                dB = np.stack([self.sampler.draw(g, NOISE_CHUNK)[:m] for g in rngs])
            if kept is not None:
                kept[:, n:n + m] = dB
            for i in range(m):
                n += 1
                x = np.fft.ifft(u, axis=-1)
                x *= np.exp(1j * coef * dB[:, i, None, None, :])
                u = np.fft.fft(x, axis=-1)
                if s < len(stores) and n == stores[s]:
                    out[:, s] = np.fft.ifft(u * self.half, axis=-1)
                    s += 1
                if n < self.n_steps:
                    u *= self.full
        z = stores * self.dz
        return (z, out, kept) if keep_noise else (z, out)

    def run_reverse(self, u0, noise):
        """Propagate through the same increments in reverse order.

        The forward operator is ``P S_n P ... P S_1 P`` with symmetric ``P``,
        so its transpose (the reciprocal propagator) applies the screens in
        reverse order. Returns the final field, shape ``(B, F, J, M)``.
        """
        noise = np.asarray(noise)[:, ::-1]
        _, out = self.run(u0, range(noise.shape[0]), noise=noise, store_every=0)
        return out[:, -1]


def split_step_advance(state: TransferField, dB, config: SolverConfig,
                       propagator: Propagator | None = None) -> TransferField:
    """One Strang step of size ``config.dz`` with increment ``dB``."""
    p = propagator or Propagator(replace(config, z_end=config.dz or config.z_end,
                                         modes=state.modes, omegas=state.omegas))
    if p.phase_spread() > (config.phase_bound or np.inf) * (1 + 1e-12):
        raise StepTooLarge("per-step phase spread exceeds the bound")
    dB = np.asarray(dB, dtype=float)
    state.grid.check(dB)
    if state.grid != config.grid:
        raise GridMismatch("state and config grids differ")
    u = np.fft.ifft(np.fft.fft(state.values, axis=-1) * p.half, axis=-1)
    u = u * np.exp(1j * p.coef[..., None] * dB)
    u = np.fft.ifft(np.fft.fft(u, axis=-1) * p.half, axis=-1)
    return TransferField(u, state.z + p.dz, state.grid, state.omegas, state.modes,
                         dict(state.provenance))


def _meta(config, prop, realization, initial):
    return {
        "seed": int(config.seed), "realization": int(realization),
        "dz": prop.dz, "n_steps": prop.n_steps,
        "kernel": {"sigma": config.kernel.sigma, "ell": config.kernel.ell,
                   "family": config.kernel.family},
        "geometry": {"depth": config.geometry.depth,
                     "sound_speed": config.geometry.sound_speed},
        "initial": initial,
    }


def propagate_modes(a_ini, config: SolverConfig, realization: int = 0,
                    initial: str = "user") -> Trajectory:
    """Propagate initial amplitudes with one shared noise path.

    ``a_ini`` has shape ``(J, M)`` (single frequency) or ``(F, J, M)``.
    """
    prop = Propagator(config)
    a = np.asarray(a_ini, dtype=complex)
    if a.ndim == 2:
        a = np.broadcast_to(a, (len(config.omegas),) + a.shape)
    if a.shape[:2] != (len(config.omegas), len(prop.modes)):
        raise GridMismatch("initial data does not match (omegas, modes)")
    config.grid.check(a)
    z, out = prop.run(a[None], [realization])
    return Trajectory(out[0], z, config.grid, config.omegas, prop.modes,
                      _meta(config, prop, realization, initial))


def propagate_green(Xp: float, config: SolverConfig, realization: int = 0) -> Trajectory:
    """Discrete Green function from a grid delta at node ``Xp``.

    All configured modes and frequencies start from the same delta.
    """
    d = config.grid.delta(Xp)
    prop_modes = config.modes or tuple(range(1, ModeSet(config.geometry, config.omegas[0]).N + 1))
    a = np.broadcast_to(d, (len(config.omegas), len(prop_modes), d.size))
    return propagate_modes(a, replace(config, modes=prop_modes), realization,
                           initial=f"delta@{Xp!r}")
