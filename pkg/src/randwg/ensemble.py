"""Monte-Carlo ensembles: seeded batches of solver runs, exact accumulation of
per-realization statistics, persistence and comparison with closed forms.

Persistence layout (append-only directory)::

    manifest.json              spec description and its hash
    chunk_<start>_<stop>.npz   realization indices and query values of one chunk
    snap_<r>.npz               optional per-realization snapshots (solver format)
    summary.json               merged means, standard errors and counts

Chunks are fixed by the spec, not by the worker count, and each realization
draws from its own stream, so the outputs do not depend on the degree of
parallelism or on the order in which chunks finish.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import GridMismatch, QueryMismatch
from .media import CovarianceKernel
from .moments import (fourth_moment, mean_transfer, scattering_mean_free_path,
                      second_moment_exact, two_freq_moment, two_mode_moment_full)
from .solver import Propagator, SolverConfig, Trajectory
from .waveguide import ModeSet, ideal_transfer

__all__ = ["Query", "EnsembleSpec", "MomentAccumulator", "run_ensemble",
           "theory_values", "compare_to_theory", "ComparisonReport", "spec_hash",
           "band_taper"]

KINDS = {"mean": 1, "projection": 1, "second": 2, "fourth": 4}


@dataclass(frozen=True)
class Query:
    """One statistic evaluated per realization.

    ``kind`` selects the product:

    ``"mean"``        ``T_a(X_0)``
    ``"projection"``  ``<T_ideal, T_a> / <T_ideal, T_ideal>`` over ``[X_0, X_1]``
    ``"second"``      ``T_a(X_0) conj(T_b(X_1))``
    ``"fourth"``      ``T_a(X_0) conj(T_b(X_1)) T_c(Y_0) conj(T_d(Y_1))``

    where each factor ``a, b, ...`` is the field of ``modes[i]`` at frequency
    index ``freqs[i]`` started from source index ``sources[i]``. ``z=None``
    means the final range. ``regime`` picks the closed form of fourth moments.
    """

    kind: str
    modes: tuple
    points: tuple
    freqs: tuple = ()
    sources: tuple = ()
    z: float | None = None
    label: str = ""
    regime: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown query kind {self.kind!r}")
        n = KINDS[self.kind]
        modes = tuple(int(j) for j in self.modes)
        if len(modes) != n:
            raise ValueError(f"{self.kind} query needs {n} mode indices")
        freqs = tuple(int(f) for f in self.freqs) or (0,) * n
        sources = tuple(int(s) for s in self.sources) or (0,) * n
        npts = 2 if self.kind == "projection" else n
        points = tuple(float(x) for x in self.points)
        if len(freqs) != n or len(sources) != n or len(points) != npts:
            raise ValueError("query index tuples have the wrong length")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "points", points)
        if not self.label:
            object.__setattr__(self, "label", f"{self.kind}:{modes}:{freqs}:{sources}:{points}:{self.z}")


def _config_dict(c: SolverConfig) -> dict:
    d = asdict(c)
    d["grid"] = [c.grid.width, c.grid.points]
    return d


@dataclass(frozen=True)
class EnsembleSpec:
    """Solver configuration, initial data, realization count and queries.

    ``sources`` are the source cross-ranges; ``beam_width=None`` starts each
    from a grid delta, otherwise from a unit-mass Gaussian of that width.
    ``source_band`` (a fraction of the grid Nyquist wavenumber) low-passes the
    delta with a cosine roll-off over the top fifth of the band. Scattering
    broadens the angular spectrum; without this margin the energy pushed past
    the Nyquist wavenumber aliases back and biases intensities inside the
    illuminated cone. ``chunk`` realizations are propagated together as one batch.
    """

    config: SolverConfig
    realizations: int
    queries: tuple
    master_seed: int = 0
    sources: tuple = (0.0,)
    beam_width: float | None = None
    source_band: float | None = None
    chunk: int = 32
    store_snapshots: bool = False

    def __post_init__(self):
        if self.realizations < 2:
            raise ValueError("an ensemble needs at least two realizations")
        if self.chunk < 1:
            raise ValueError("chunk must be positive")
        if self.source_band is not None and not 0 < self.source_band <= 1:
            raise ValueError("source_band must lie in (0, 1]")
        object.__setattr__(self, "queries", tuple(self.queries))
        object.__setattr__(self, "sources", tuple(float(s) for s in self.sources))
        labels = [q.label for q in self.queries]
        if len(set(labels)) != len(labels):
            raise ValueError("query labels must be unique")
        g = self.config.grid
        for s in self.sources:
            g.index(s)
        for q in self.queries:
            if max(q.sources) >= len(self.sources):
                raise ValueError(f"query {q.label} refers to a missing source")
            if max(q.freqs) >= len(self.config.omegas):
                raise ValueError(f"query {q.label} refers to a missing frequency")
            for x in q.points:
                g.index(x)

    @property
    def modes(self) -> tuple:
        if self.config.modes is not None:
            return self.config.modes
        return tuple(range(1, ModeSet(self.config.geometry, self.config.omegas[0]).N + 1))

    def describe(self) -> dict:
        return {"config": _config_dict(self.config), "realizations": self.realizations,
                "master_seed": self.master_seed, "sources": list(self.sources),
                "beam_width": self.beam_width, "source_band": self.source_band,
                "chunk": self.chunk,
                "queries": [asdict(q) for q in self.queries]}


def spec_hash(spec: EnsembleSpec) -> str:
    text = json.dumps(spec.describe(), sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class MomentAccumulator:
    """Per-realization query values with exact, order-independent merging.

    Values are kept per realization; sums are formed in sorted realization
    order, so any partition of the realizations merges to bitwise the same
    statistics.
    """

    def __init__(self, labels, values: dict | None = None):
        self.labels = tuple(labels)
        self.values = {} if values is None else dict(values)

    def add(self, realization: int, vals) -> None:
        vals = np.asarray(vals, dtype=complex)
        if vals.shape != (len(self.labels),):
            raise ValueError("one value per query is needed")
        r = int(realization)
        if r in self.values and not np.array_equal(self.values[r], vals):
            raise ValueError(f"realization {r} already recorded with different values")
        self.values[r] = vals

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.labels != self.labels:
            raise QueryMismatch("accumulators hold different queries")
        out = MomentAccumulator(self.labels, self.values)
        for r, v in other.values.items():
            out.add(r, v)
        return out

    @property
    def count(self) -> int:
        return len(self.values)

    def matrix(self) -> np.ndarray:
        keys = sorted(self.values)
        return np.array([self.values[k] for k in keys]).reshape(len(keys), len(self.labels))

    def sums(self):
        """Running complex sums and squared-magnitude sums in sorted order."""
        m = self.matrix()
        s = np.zeros(len(self.labels), dtype=complex)
        s2 = np.zeros(len(self.labels))
        for row in m:
            s = s + row
            s2 = s2 + np.abs(row) ** 2
        return s, s2

    def mean(self) -> np.ndarray:
        s, _ = self.sums()
        return s / self.count

    def std(self) -> np.ndarray:
        """Sample standard deviation ``sqrt(sum |x - mean|^2 / (R - 1))``."""
        if self.count < 2:
            raise ValueError("need two realizations for a standard deviation")
        m = self.matrix()
        return np.sqrt(np.sum(np.abs(m - self.mean()) ** 2, axis=0) / (self.count - 1))

    def standard_error(self) -> np.ndarray:
        return self.std() / np.sqrt(self.count)

    def save(self, path) -> None:
        keys = sorted(self.values)
        np.savez(path, labels=np.array(self.labels), realizations=np.array(keys, dtype=np.int64),
                 values=self.matrix())

    @classmethod
    def load(cls, path) -> "MomentAccumulator":
        with np.load(path, allow_pickle=False) as f:
            acc = cls(tuple(str(s) for s in f["labels"]))
            for r, v in zip(f["realizations"], f["values"]):
                acc.values[int(r)] = v
        return acc

    def summary(self) -> dict:
        mean = self.mean()
        se = self.standard_error() if self.count > 1 else np.full(len(self.labels), np.nan)
        return {"count": self.count,
                "queries": [{"label": l, "mean": [m.real, m.imag], "standard_error": s}
                            for l, m, s in zip(self.labels, mean.tolist(), se.tolist())]}


# --------------------------------------------------------------------------
# running

def band_taper(kappa, edge):
    """1 below ``0.8 edge``, cosine roll-off to 0 at ``edge``."""
    t = np.clip((np.abs(kappa) / edge - 0.8) / 0.2, 0, 1)
    return 0.5 * (1 + np.cos(np.pi * t))


def _initial(spec: EnsembleSpec, prop: Propagator) -> np.ndarray:
    g = spec.config.grid
    rows = []
    for s in spec.sources:
        if spec.beam_width is None:
            d = g.delta(s)
            if spec.source_band is not None:
                d = np.fft.ifft(np.fft.fft(d) * band_taper(g.kappa, spec.source_band * g.kappa_max))
            rows.append(d)
        else:
            w = spec.beam_width
            rows.append(np.exp(-0.5 * ((g.x - s) / w) ** 2) / (np.sqrt(2 * np.pi) * w) + 0j)
    src = np.array(rows)  # (Ns, M)
    F, J = len(spec.config.omegas), len(prop.modes)
    return np.broadcast_to(src[None, None], (F, J) + src.shape).reshape(F, J * len(spec.sources), -1)


def _expanded_config(spec: EnsembleSpec) -> SolverConfig:
    """Each (mode, source) pair becomes one field row sharing the noise path."""
    modes = tuple(j for j in spec.modes for _ in spec.sources)
    return replace(spec.config, modes=modes, seed=spec.master_seed)


def _ideal(spec: EnsembleSpec, prop: Propagator, u0, z) -> np.ndarray:
    mult = np.exp(-0.5j * spec.config.grid.kappa ** 2 * z / prop.beta[..., None])
    return np.fft.ifft(np.fft.fft(u0, axis=-1) * mult, axis=-1)


def _evaluate(spec: EnsembleSpec, prop: Propagator, u0, z, out) -> np.ndarray:
    """Query values for a batch ``out`` of shape (B, S, F, J*Ns, M)."""
    g = spec.config.grid
    ns = len(spec.sources)
    mode_pos = {j: i for i, j in enumerate(spec.modes)}
    vals = np.empty((out.shape[0], len(spec.queries)), dtype=complex)
    ideal_cache = {}
    for k, q in enumerate(spec.queries):
        if q.z is None:
            s = len(z) - 1
        else:
            s = int(np.argmin(np.abs(z - q.z)))
            if abs(z[s] - q.z) > 1e-9 * max(1.0, abs(q.z)):
                raise QueryMismatch(f"range {q.z} is not a stored range")

        def field_at(i, x=None):
            row = mode_pos[q.modes[i]] * ns + q.sources[i]
            f = out[:, s, q.freqs[i], row]
            return f if x is None else f[:, g.index(x)]

        if q.kind == "mean":
            vals[:, k] = field_at(0, q.points[0])
        elif q.kind == "second":
            vals[:, k] = field_at(0, q.points[0]) * np.conj(field_at(1, q.points[1]))
        elif q.kind == "fourth":
            vals[:, k] = (field_at(0, q.points[0]) * np.conj(field_at(1, q.points[1]))
                          * field_at(2, q.points[2]) * np.conj(field_at(3, q.points[3])))
        else:
            key = (s,)
            if key not in ideal_cache:
                ideal_cache[key] = _ideal(spec, prop, u0, z[s])
            row = mode_pos[q.modes[0]] * ns + q.sources[0]
            ref = ideal_cache[key][q.freqs[0], row]
            win = (g.x >= q.points[0]) & (g.x <= q.points[1])
            ref = np.where(win, ref, 0)
            vals[:, k] = (field_at(0) @ np.conj(ref)) / np.vdot(ref, ref).real
    return vals


def _run_chunk(spec: EnsembleSpec, start: int, stop: int, out_dir: str | None):
    cfg = _expanded_config(spec)
    prop = Propagator(cfg)
    u0 = _initial(spec, prop)
    z, out = prop.run(u0[None], range(start, stop), master_seed=spec.master_seed)
    vals = _evaluate(spec, prop, u0, z, out)
    if out_dir is not None:
        d = Path(out_dir)
        if spec.store_snapshots:
            for i, r in enumerate(range(start, stop)):
                Trajectory(out[i], z, cfg.grid, cfg.omegas, prop.modes,
                           {"seed": spec.master_seed, "realization": r, "dz": prop.dz,
                            "sources": list(spec.sources)}).save(d / f"snap_{r:06d}.npz")
        tmp = d / f".chunk_{start:06d}_{stop:06d}.tmp.npz"
        np.savez(tmp, realizations=np.arange(start, stop), values=vals)
        os.replace(tmp, d / f"chunk_{start:06d}_{stop:06d}.npz")
    return start, stop, vals


def _chunks(spec: EnsembleSpec):
    return [(a, min(a + spec.chunk, spec.realizations)) for a in range(0, spec.realizations, spec.chunk)]


def run_ensemble(spec: EnsembleSpec, out_dir=None, workers: int = 1, resume: bool = True,
                 progress=None) -> MomentAccumulator:
    """Run all realizations of ``spec`` and return the merged accumulator.

    With ``out_dir`` every finished chunk is written immediately; a rerun
    with ``resume=True`` loads finished chunks and computes only the rest.
    A manifest with a different spec hash in ``out_dir`` is an error.
    """
    labels = [q.label for q in spec.queries]
    acc = MomentAccumulator(labels)
    todo = _chunks(spec)
    d = None
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        man = d / "manifest.json"
        h = spec_hash(spec)
        if man.exists():
            old = json.loads(man.read_text())
            if old.get("hash") != h:
                raise QueryMismatch(f"{d} holds a different ensemble (hash {old.get('hash')})")
        else:
            man.write_text(json.dumps({"hash": h, "spec": spec.describe()}, indent=1, sort_keys=True, default=str))
        if resume:
            left = []
            for a, b in todo:
                f = d / f"chunk_{a:06d}_{b:06d}.npz"
                if f.exists():
                    with np.load(f) as z:
                        for r, v in zip(z["realizations"], z["values"]):
                            acc.add(int(r), v)
                else:
                    left.append((a, b))
            todo = left
    sdir = None if d is None else str(d)
    if workers <= 1 or len(todo) <= 1:
        results = (_run_chunk(spec, a, b, sdir) for a, b in todo)
        for a, b, vals in results:
            for i, r in enumerate(range(a, b)):
                acc.add(r, vals[i])
            if progress:
                progress(acc.count, spec.realizations)
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_run_chunk, spec, a, b, sdir) for a, b in todo]
            for fu in futs:
                a, b, vals = fu.result()
                for i, r in enumerate(range(a, b)):
                    acc.add(r, vals[i])
                if progress:
                    progress(acc.count, spec.realizations)
    if d is not None:
        (d / "summary.json").write_text(json.dumps({"hash": spec_hash(spec), **acc.summary()},
                                                   indent=1, sort_keys=True))
    return acc


# --------------------------------------------------------------------------
# theory

def theory_values(spec: EnsembleSpec, kernel: CovarianceKernel | None = None,
                  reference: str = "continuum") -> dict:
    """Closed-form expectation of every query of ``spec``, keyed by label.

    ``kernel`` overrides the boundary statistics (for negative controls).
    Means use the damped free Green function, projections ``exp(-Z/S_j)``,
    same-mode second moments the exact single-mode form, distinct modes the
    two-mode form and distinct frequencies the two-frequency form with exact
    wavenumbers. Extended (beam) sources are supported by projections only.

    ``reference="grid"`` keeps the statistical factor of each closed form
    (its ratio to the product of continuum free Green functions) and
    multiplies it by the grid's own free propagation of the initial data.
    This removes the band-limit and periodicity of the grid from the
    comparison and is exact without noise.
    """
    if reference not in ("continuum", "grid"):
        raise ValueError(f"unknown reference {reference!r}")
    c = spec.config
    ker = c.kernel if kernel is None else kernel
    prop = Propagator(_expanded_config(spec))
    z_final = prop.n_steps * prop.dz
    ns = len(spec.sources)
    mode_pos = {j: i for i, j in enumerate(spec.modes)}
    u0 = _initial(spec, prop) if reference == "grid" else None
    grid_cache = {}

    def free_ratio(q, Z, ms_list, src):
        """grid / continuum free Green function product of the query factors."""
        if Z not in grid_cache:
            grid_cache[Z] = _ideal(spec, prop, u0, Z)
        ideal = grid_cache[Z]
        r = 1.0 + 0j
        for i, (j, f, s, x) in enumerate(zip(q.modes, q.freqs, q.sources, q.points)):
            on_grid = ideal[f, mode_pos[j] * ns + s, c.grid.index(x)]
            cont = ideal_transfer(ms_list[i], j, x, src[i], Z)
            fac = on_grid / cont
            r *= fac if i % 2 == 0 else np.conj(fac)
        return r

    out = {}
    for q in spec.queries:
        Z = z_final if q.z is None else q.z
        src = [spec.sources[s] for s in q.sources]
        om = [c.omegas[f] for f in q.freqs]
        ms = ModeSet(c.geometry, om[0])
        if q.kind == "projection":
            out[q.label] = complex(np.exp(-Z / scattering_mean_free_path(ker, ms, q.modes[0])))
            continue
        if spec.beam_width is not None:
            raise QueryMismatch("point-wise theory needs delta sources")
        P = q.points
        if q.kind == "mean":
            out[q.label] = complex(mean_transfer(ker, ms, q.modes[0], P[0], src[0], Z))
        elif q.kind == "second":
            j, l = q.modes
            if om[0] != om[1]:
                if j != l:
                    raise QueryMismatch("two-frequency moments need equal modes")
                w0, dw = 0.5 * (om[0] + om[1]), om[0] - om[1]
                out[q.label] = complex(two_freq_moment(ker, c.geometry, j, w0, dw, P[0], P[1],
                                                       src[0], src[1], Z, form="exact", warn=False))
            elif j == l:
                out[q.label] = complex(second_moment_exact(ker, ms, j, P[0], P[1], src[0], src[1], Z))
            else:
                out[q.label] = complex(two_mode_moment_full(ker, ms, j, l, P[0], P[1], src[0], src[1], Z))
        else:
            j, jb, J, Jb = q.modes
            if j != jb or J != Jb or len(set(om)) != 1:
                raise QueryMismatch("fourth moments need the (j, j, J, J) single-frequency pattern")
            pts = (P[0], P[1], src[0], src[1], P[2], P[3], src[2], src[3])
            out[q.label] = complex(fourth_moment(ker, ms, j, J, pts, Z, regime=q.regime or "case2"))
        if reference == "grid":
            out[q.label] *= free_ratio(q, Z, [ModeSet(c.geometry, w) for w in om], src)
    return out


@dataclass
class ComparisonReport:
    labels: tuple
    empirical: np.ndarray
    theory: np.ndarray
    standard_error: np.ndarray
    z: np.ndarray
    threshold: float
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> np.ndarray:
        return self.z <= self.threshold

    @property
    def pass_fraction(self) -> float:
        return float(np.mean(self.passed))

    def table(self) -> str:
        lines = ["label,empirical_re,empirical_im,theory_re,theory_im,standard_error,z,pass"]
        for l, e, t, s, z, p in zip(self.labels, self.empirical, self.theory, self.standard_error,
                                    self.z, self.passed):
            lines.append(f"{l},{e.real:.8g},{e.imag:.8g},{t.real:.8g},{t.imag:.8g},{s:.4g},{z:.3f},{int(p)}")
        return "\n".join(lines)


def compare_to_theory(acc: MomentAccumulator, theory: dict, threshold: float = 3.0,
                      rtol_deterministic: float = 1e-6) -> ComparisonReport:
    """Per-query z-scores ``|mean - theory| / standard_error``.

    With a zero standard error (deterministic ensembles) the score is 0 if
    the relative difference is below ``rtol_deterministic`` and infinite
    otherwise.
    """
    if set(theory) != set(acc.labels):
        raise QueryMismatch("theory and accumulator hold different queries")
    emp = acc.mean()
    th = np.array([theory[l] for l in acc.labels], dtype=complex)
    se = acc.standard_error()
    diff = np.abs(emp - th)
    scale = np.maximum(np.abs(th), np.abs(emp))
    tiny = se <= 1e-14 * np.maximum(scale, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(tiny, np.where(diff <= rtol_deterministic * np.maximum(scale, 1e-300), 0.0, np.inf),
                     diff / se)
    return ComparisonReport(acc.labels, emp, th, se, z, threshold)
