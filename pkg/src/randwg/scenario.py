"""Scenario files: a flat, commented ``key = value`` format with dotted keys.

Every value is JSON (numbers, strings in double quotes, ``null``, lists).
Lines starting with ``#`` and blank lines are ignored. Unknown keys and
ill-typed values are rejected with the dotted key in the message. Keys that
are absent take their defaults, so a scenario file only needs the entries it
changes. :meth:`Scenario.dumps` writes every key in schema order, which
makes serialize -> parse -> serialize byte-identical.

Schema (default in brackets):

waveguide.depth [1.0]            depth D
waveguide.sound_speed [1.0]      c
band.omega [60.0]                centre frequency (k = omega / c)
band.bandwidth [1.0]             total bandwidth B of the sampled band
band.samples [1]                 number of frequency samples in the band
kernel.sigma [0.25]              boundary fluctuation strength
kernel.ell [1.0]                 correlation length
kernel.family ["gaussian"]       covariance family
array.aperture [100.0]           |A_X|
array.z [100.0]                  range Z_A of the array
array.eta_min [0.0], array.eta_max [1.0]   depth coverage
array.center [0.0]               cross-range centre of the array
array.duration [null]            recording time T (null: record everything)
array.window ["indicator"]       "indicator" or "raised_cosine"
array.taper [0.2]                raised-cosine taper fraction
array.n_modes [null]             hard mode cutoff N_T
source.x [0.0], source.eta [0.5] source location
solver.width [64.0], solver.points [256]   cross-range grid
solver.z_end [null]              propagation range (null: array.z)
solver.modes [null]              propagated modes (null: all)
solver.dz [null]                 range step (null: from the phase bounds)
solver.phase_bound [0.1]         per-step noise phase bound
solver.store_every [0]           snapshot stride (0: final range only)
solver.source_band [0.6]         low-pass of point sources, fraction of Nyquist
solver.beam_width [null]         Gaussian source width instead of a point source
ensemble.realizations [200]
ensemble.chunk [32]
ensemble.seed [0]
ensemble.offsets [0, 1, 2, 4, 8] second-moment probe offsets in grid cells
imaging.cutoff [1.0]             CINT frequency window Omega
imaging.xd [null]                CINT cross-range windows (null: X_d,j)
imaging.shape ["indicator"]      CINT cross-range window shape
imaging.n_t [[5, 10, 19]]        mode cutoffs for figure data (checked by `figures`)
imaging.points [401]             samples per profile
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grid import GridSpec
from .imaging import ArraySpec, CINTParams, ImagingSetup
from .media import CovarianceKernel
from .solver import SolverConfig
from .waveguide import FrequencyBand, ModeSet, WaveguideGeometry

__all__ = ["Scenario", "SCHEMA", "parse_value"]

# key: (default, kind)
SCHEMA = {
    "waveguide.depth": (1.0, "pos"),
    "waveguide.sound_speed": (1.0, "pos"),
    "band.omega": (60.0, "pos"),
    "band.bandwidth": (1.0, "nonneg"),
    "band.samples": (1, "count"),
    "kernel.sigma": (0.25, "nonneg"),
    "kernel.ell": (1.0, "pos"),
    "kernel.family": ("gaussian", "str"),
    "array.aperture": (100.0, "pos"),
    "array.z": (100.0, "pos"),
    "array.eta_min": (0.0, "nonneg"),
    "array.eta_max": (1.0, "pos"),
    "array.center": (0.0, "float"),
    "array.duration": (None, "pos?"),
    "array.window": ("indicator", "str"),
    "array.taper": (0.2, "pos"),
    "array.n_modes": (None, "count?"),
    "source.x": (0.0, "float"),
    "source.eta": (0.5, "float"),
    "solver.width": (64.0, "pos"),
    "solver.points": (256, "count"),
    "solver.z_end": (None, "pos?"),
    "solver.modes": (None, "counts?"),
    "solver.dz": (None, "pos?"),
    "solver.phase_bound": (0.1, "pos?"),
    "solver.store_every": (0, "nonneg_int"),
    "solver.source_band": (0.6, "pos?"),
    "solver.beam_width": (None, "pos?"),
    "ensemble.realizations": (200, "count"),
    "ensemble.chunk": (32, "count"),
    "ensemble.seed": (0, "nonneg_int"),
    "ensemble.offsets": ([0, 1, 2, 4, 8], "ints"),
    "imaging.cutoff": (1.0, "nonneg"),
    "imaging.xd": (None, "floats?"),
    "imaging.shape": ("indicator", "str"),
    "imaging.n_t": ([5, 10, 19], "counts"),
    "imaging.points": (401, "count"),
}

_HEADER = "# randwg scenario: one 'key = value' per line, values are JSON\n"


def parse_value(text: str):
    """JSON value, or the bare text as a string if it is not valid JSON."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def _check(key, value, kind):
    """Validated, normalized value for ``kind``; raises :class:`ConfigError`."""
    optional = kind.endswith("?")
    base = kind.rstrip("?")
    if value is None:
        if optional:
            return None
        raise ConfigError(key, "a value is required")
    if base == "str":
        if not isinstance(value, str):
            raise ConfigError(key, "expected a string")
        return value
    if base in ("ints", "counts", "floats"):
        if not isinstance(value, list) or not value:
            raise ConfigError(key, "expected a non-empty list")
        item = {"ints": "nonneg_int", "counts": "count", "floats": "pos"}[base]
        return [_check(f"{key}[{i}]", v, item) for i, v in enumerate(value)]
    if base in ("count", "nonneg_int"):
        if not _is_int(value):
            raise ConfigError(key, "expected an integer")
        if value < (1 if base == "count" else 0):
            raise ConfigError(key, "out of range")
        return value
    if not _is_num(value):
        raise ConfigError(key, "expected a finite number")
    value = float(value)
    if base == "pos" and not value > 0:
        raise ConfigError(key, "must be positive")
    if base == "nonneg" and value < 0:
        raise ConfigError(key, "must be non-negative")
    return value


class Scenario:
    """A complete experiment description with defaults for absent keys.

    The builders (:meth:`geometry`, :meth:`kernel`, :meth:`setup`, ...) turn
    the entries into library objects; cross-field constraints are checked at
    construction so a loaded scenario is always usable.
    """

    def __init__(self, values: dict | None = None):
        vals = {k: d for k, (d, _) in SCHEMA.items()}
        for k, v in (values or {}).items():
            if k not in SCHEMA:
                raise ConfigError(k, "unknown key")
            vals[k] = v
        self.values = {k: _check(k, vals[k], SCHEMA[k][1]) for k in SCHEMA}
        self._validate()

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.dumps() == other.dumps()

    # ---------------------------------------------------------------- I/O

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        vals = {}
        for n, line in enumerate(text.splitlines(), 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            if "=" not in s:
                raise ConfigError(f"line {n}", "expected 'key = value'")
            key, raw = (p.strip() for p in s.split("=", 1))
            if key in vals:
                raise ConfigError(key, f"duplicate entry on line {n}")
            vals[key] = parse_value(raw)
        return cls(vals)

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.parse(Path(path).read_text())

    def dumps(self) -> str:
        lines = [_HEADER]
        section = None
        for k in SCHEMA:
            head = k.split(".", 1)[0]
            if head != section:
                lines.append(f"\n# [{head}]\n")
                section = head
            lines.append(f"{k} = {json.dumps(self.values[k])}\n")
        return "".join(lines)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    def with_overrides(self, items) -> "Scenario":
        """New scenario with ``key=value`` strings applied in order."""
        vals = dict(self.values)
        for item in items:
            if "=" not in item:
                raise ConfigError(item, "override must be key=value")
            key, raw = (p.strip() for p in item.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(key, "unknown key")
            vals[key] = parse_value(raw)
        return Scenario(vals)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    # ----------------------------------------------------------- builders

    def geometry(self) -> WaveguideGeometry:
        return WaveguideGeometry(self["waveguide.depth"], self["waveguide.sound_speed"])

    def kernel(self) -> CovarianceKernel:
        return CovarianceKernel(self["kernel.sigma"], self["kernel.ell"], self["kernel.family"])

    @property
    def omega(self) -> float:
        return self["band.omega"]

    def modes(self, omega: float | None = None) -> ModeSet:
        return ModeSet(self.geometry(), self.omega if omega is None else omega)

    def band(self) -> FrequencyBand:
        return FrequencyBand.uniform(self.geometry(), self.omega, self["band.bandwidth"],
                                     self["band.samples"])

    def array(self) -> ArraySpec:
        return ArraySpec(self["array.aperture"], self["array.z"],
                         (self["array.eta_min"], self["array.eta_max"]), self["array.center"],
                         self["array.duration"], self["array.window"], self["array.taper"],
                         self["array.n_modes"])

    def setup(self) -> ImagingSetup:
        return ImagingSetup(self.geometry(), self.kernel(), self.array(),
                            self["source.x"], self["source.eta"])

    def cint_params(self) -> CINTParams:
        xd = self["imaging.xd"]
        return CINTParams(self["imaging.cutoff"], None if xd is None else tuple(xd),
                          self["imaging.shape"])

    def grid(self) -> GridSpec:
        return GridSpec(self["solver.width"], self["solver.points"])

    def solver_config(self, seed: int | None = None) -> SolverConfig:
        modes = self["solver.modes"]
        return SolverConfig(self.grid(), self["solver.z_end"] or self["array.z"], self.geometry(),
                            self.kernel(), self.band().samples,
                            None if modes is None else tuple(modes), self["solver.dz"],
                            self["ensemble.seed"] if seed is None else seed,
                            self["solver.store_every"], self["solver.phase_bound"])

    # --------------------------------------------------------- validation

    def _validate(self):
        if not 0 < self["source.eta"] < self["waveguide.depth"]:
            raise ConfigError("source.eta", "must lie strictly inside (0, waveguide.depth)")
        builders = [("waveguide", self.geometry), ("kernel", self.kernel), ("band", self.band),
                    ("array", self.array), ("source", self.setup), ("solver", self.grid),
                    ("imaging", self.cint_params)]
        for section, build in builders:
            try:
                build()
            except ConfigError:
                raise
            except (ValueError, TypeError) as exc:
                raise ConfigError(section, str(exc)) from exc
        N = self.modes().N
        if self["array.eta_max"] <= self["array.eta_min"]:
            raise ConfigError("array.eta_max", "must exceed array.eta_min")
        for key in ("solver.modes",):
            v = self[key]
            if v is not None and max(v) > N:
                raise ConfigError(key, f"mode index above N = {N}")
        if self["solver.source_band"] is not None and self["solver.source_band"] > 1:
            raise ConfigError("solver.source_band", "must not exceed 1")
        if self["ensemble.realizations"] < 2:
            raise ConfigError("ensemble.realizations", "need at least two realizations")
        g = self.grid()
        try:
            g.index(self["source.x"])
        except ValueError as exc:
            raise ConfigError("source.x", "must lie on a grid node") from exc
