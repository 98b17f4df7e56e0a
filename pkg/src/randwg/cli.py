"""Command-line front end.

``randwg <command> [--scenario FILE] [--set key=value ...] [--seed N]
[--workers N] [--out DIR] [--format csv|json]``

Tables and profiles go to ``DIR`` (default ``$RANDWG_OUT``) when an output
directory is given, otherwise to standard output. Every file starts with
the scenario hash and seed, and the resolved scenario is written next to the
outputs as ``scenario.cfg``. No output depends on the wall clock, so a rerun
with the same scenario and seed reproduces every file byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .ensemble import (EnsembleSpec, Query, compare_to_theory, run_ensemble, spec_hash,
                       theory_values)
from .errors import ConfigError, ValidityWarning, WindowTooWide
from .imaging import (ImagingProfile, cint_depth_estimate, cint_mean_profiles, cint_model_weights,
                      critical_aperture, rtm_mean, rtm_range_profile, rtm_stability, tr_depth_profile, tr_mean_psf,
                      tr_resolution)
from .moments import (decoherence_length, mean_transfer, scales_report, second_moment_exact,
                      second_moment_narrow, two_freq_moment)
from .scenario import Scenario
from .solver import Propagator

OUT_ENV = "RANDWG_OUT"
REFERENCE_APERTURE = 220.0  # approximate critical aperture quoted for the default scenario


class Emitter:
    """Writes tables to files or standard output with a provenance header."""

    def __init__(self, scenario: Scenario, seed: int, out: str | None, fmt: str, stream=None):
        self.scenario = scenario
        self.seed = seed
        self.fmt = fmt
        self.stream = stream or sys.stdout
        self.out = Path(out) if out else None
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            scenario.save(self.out / "scenario.cfg")

    def header(self) -> dict:
        return {"scenario_hash": self.scenario.hash, "seed": self.seed}

    def table(self, name: str, columns, rows, meta: dict | None = None) -> None:
        meta = {**self.header(), **(meta or {})}
        rows = [[_plain(v) for v in r] for r in rows]
        if self.fmt == "json":
            text = json.dumps({"name": name, "meta": meta, "columns": list(columns), "rows": rows},
                              indent=1, sort_keys=True) + "\n"
        else:
            buf = io.StringIO()
            for k in sorted(meta):
                buf.write(f"# {k}={json.dumps(meta[k], sort_keys=True)}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(columns)
            w.writerows([_fmt(v) for v in r] for r in rows)
            text = buf.getvalue()
        if self.out is None:
            self.stream.write(f"## {name}\n{text}")
        else:
            (self.out / f"{name}.{self.fmt}").write_text(text)

    def profile(self, name: str, prof, meta: dict | None = None) -> None:
        v = np.asarray(prof.values, dtype=complex)
        rows = zip(prof.points, v.real, v.imag, np.abs(v))
        self.table(name, [prof.axis, "real", "imag", "abs"], rows,
                   {"n_modes": prof.n_modes, **_clean(prof.meta), **(meta or {})})


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _clean(meta: dict) -> dict:
    return {k: _plain(v) for k, v in meta.items()}


# --------------------------------------------------------------------------
# commands

def cmd_modes(sc: Scenario, em: Emitter, args) -> int:
    ms = sc.modes()
    j = ms.indices
    em.table("modes", ["j", "beta", "beta_prime"], zip(j.tolist(), ms.beta, ms.beta_prime(j)),
             {"N": ms.N, "alpha": ms.alpha, "k": ms.k})
    return 0


def cmd_scales(sc: Scenario, em: Emitter, args) -> int:
    ms = sc.modes()
    rep = scales_report(sc.kernel(), ms, sc["array.z"])
    crit = critical_aperture(sc.setup(), sc.omega)
    em.table("scales", ["j", "beta", "S", "Xd", "Omega_d", "Omega"], rep.rows(),
             {"N": rep.N, "alpha": rep.alpha, "gamma": rep.gamma, "S1": rep.S1, "SN": rep.SN,
              "critical_aperture": crit})
    if em.out is None or args.verbose:
        print(f"critical aperture: {crit:.2f} (reference: about {REFERENCE_APERTURE:.0f})")
    return 0


def cmd_moments(sc: Scenario, em: Emitter, args) -> int:
    ms = sc.modes()
    ker = sc.kernel()
    Z = sc["array.z"]
    j = args.mode
    if not 1 <= j <= ms.N:
        raise ConfigError("--mode", f"must lie in 1..{ms.N}")
    if args.kind == "second":
        X = np.asarray(args.points, dtype=float)
        mean = mean_transfer(ker, ms, j, X, 0.0, Z)
        exact = second_moment_exact(ker, ms, j, X, 0.0, 0.0, 0.0, Z)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ValidityWarning)
            narrow = second_moment_narrow(ker, ms, j, X, 0.0, 0.0, 0.0, Z)
        rows = zip(X, mean.real, mean.imag, exact.real, exact.imag, narrow.real, narrow.imag)
        em.table(f"moments_mode{j}", ["X", "mean_re", "mean_im", "second_re", "second_im",
                                      "narrow_re", "narrow_im"], rows,
                 {"mode": j, "Z": Z, "Xd": float(decoherence_length(ker, ms, j, Z))})
    else:
        rows = []
        for dw in args.points:
            v = complex(two_freq_moment(ker, sc.geometry(), j, sc.omega, dw, 0.0, 0.0, 0.0, 0.0, Z,
                                        form="exact", warn=False))
            rows.append((dw, v.real, v.imag, abs(v)))
        em.table(f"two_frequency_mode{j}", ["domega", "re", "im", "abs"], rows, {"mode": j, "Z": Z})
    return 0


def ensemble_spec(sc: Scenario, seed: int) -> EnsembleSpec:
    """Default probes: mean, second moments at ``ensemble.offsets`` and a projection per mode."""
    cfg = sc.solver_config(seed)
    g = cfg.grid
    x0 = sc["source.x"]
    prop = Propagator(cfg)
    qs = []
    for j in prop.modes:
        qs.append(Query("mean", (j,), (x0,)))
        for a in sc["ensemble.offsets"]:
            qs.append(Query("second", (j, j), (x0 + a * g.dx, x0)))
        half = g.points // 4
        qs.append(Query("projection", (j,), (g.x[half], g.x[3 * half])))
    return EnsembleSpec(cfg, sc["ensemble.realizations"], tuple(qs), seed, (x0,),
                        sc["solver.beam_width"],
                        None if sc["solver.beam_width"] else sc["solver.source_band"],
                        sc["ensemble.chunk"])


def _ensemble_dir(em: Emitter):
    return None if em.out is None else em.out / "ensemble"


def cmd_simulate(sc: Scenario, em: Emitter, args) -> int:
    spec = ensemble_spec(sc, em.seed)
    acc = run_ensemble(spec, _ensemble_dir(em), workers=args.workers)
    mean, se = acc.mean(), acc.standard_error()
    em.table("ensemble", ["label", "mean_re", "mean_im", "standard_error"],
             zip(acc.labels, mean.real, mean.imag, se),
             {"realizations": acc.count, "ensemble_hash": spec_hash(spec)})
    return 0


def invariant_checks(sc: Scenario):
    """``(name, value, tolerance)`` of the solver invariants on this scenario's grid."""
    cfg = sc.solver_config()
    g = cfg.grid
    out = []
    # zero noise: a Gaussian beam against the exact grid propagator
    quiet = replace(cfg, kernel=replace(cfg.kernel, sigma=0.0), store_every=0)
    p = Propagator(quiet)
    w0 = 4 * g.dx
    u0 = np.exp(-0.5 * (g.x / w0) ** 2) + 0j
    init = np.broadcast_to(u0, (1, len(cfg.omegas), len(p.modes), g.points))
    _, o = p.run(init, [0])
    Z = p.n_steps * p.dz
    ref = np.fft.ifft(np.fft.fft(u0) * np.exp(-0.5j * g.kappa ** 2 * Z / p.beta[..., None]), axis=-1)
    err = np.max(np.abs(o[0, -1] - ref)) / np.max(np.abs(ref))
    out.append(("zero_noise_rel_error", float(err), 1e-8))
    # pathwise energy conservation with noise
    p = Propagator(replace(cfg, store_every=0))
    _, o = p.run(init, [0, 1])
    e0 = np.sum(np.abs(u0) ** 2)
    drift = np.max(np.abs(np.sum(np.abs(o[:, -1]) ** 2, axis=-1) / e0 - 1))
    out.append(("energy_drift", float(drift), 1e-10))
    return out


def cmd_validate(sc: Scenario, em: Emitter, args) -> int:
    checks = invariant_checks(sc)
    spec = ensemble_spec(sc, em.seed)
    acc = run_ensemble(spec, _ensemble_dir(em), workers=args.workers)
    rep = compare_to_theory(acc, theory_values(spec, reference="grid"), threshold=args.threshold)
    rows = [(name, val, tol, int(val <= tol)) for name, val, tol in checks]
    rows += [(l, float(z), args.threshold, int(p)) for l, z, p in zip(rep.labels, rep.z, rep.passed)]
    em.table("validate", ["check", "value", "tolerance", "pass"], rows,
             {"realizations": acc.count, "ensemble_hash": spec_hash(spec)})
    inv_ok = all(r[3] for r in rows[:len(checks)])
    stat_ok = rep.pass_fraction >= args.min_pass
    ok = inv_ok and stat_ok
    print(f"validate: invariants {'ok' if inv_ok else 'FAILED'}, "
          f"{int(rep.passed.sum())}/{rep.z.size} moment checks within {args.threshold} SE"
          f" -> {'PASS' if ok else 'FAIL'}", file=sys.stderr)
    return 0 if ok else 1


def _axis(center, half, n):
    return center + np.linspace(-half, half, n)


def _tr_outputs(sc: Scenario, em: Emitter, setup, n_t, suffix=""):
    ms = setup.modes(sc.omega)
    n = sc["imaging.points"]
    eta = np.linspace(0, ms.depth, n)
    em.profile(f"tr_depth{suffix}", tr_depth_profile(setup, sc.omega, eta, n_t))
    Z = setup.array.z_array
    res, _ = tr_resolution(setup, sc.omega, 1)
    X = _axis(setup.source_x, 6 * float(res), n)
    vals = tr_mean_psf(setup, sc.omega, X)
    em.profile(f"tr_cross{suffix}", ImagingProfile("cross-range", X, vals,
                                                    setup.array.mode_cutoff(ms), {"Z": Z}))


def _with_nt(setup, n_t):
    return replace(setup, array=replace(setup.array, n_modes=n_t))


def cmd_timereversal(sc: Scenario, em: Emitter, args) -> int:
    setup = sc.setup()
    if args.n_t is not None:
        setup = _with_nt(setup, args.n_t)
    _tr_outputs(sc, em, setup, args.n_t)
    ms = setup.modes(sc.omega)
    rows = []
    for j in ms.indices:
        d, crit = tr_resolution(setup, sc.omega, j)
        rows.append((int(j), float(d)))
    em.table("tr_resolution", ["j", "cross_range_resolution"], rows,
             {"critical_aperture": float(crit)})
    return 0


def cmd_migrate(sc: Scenario, em: Emitter, args) -> int:
    setup = sc.setup()
    n = sc["imaging.points"]
    res, _ = tr_resolution(setup, sc.omega, 1)
    X = _axis(setup.source_x, 6 * float(res), n)
    ms = setup.modes(sc.omega)
    em.profile("rtm_cross", ImagingProfile("cross-range", X, rtm_mean(setup, sc.omega, X),
                                           setup.array.mode_cutoff(ms)))
    zmax = 6 * np.pi / (ms.beta[0] - ms.beta[-1]) if ms.N > 1 else 10.0
    em.profile("rtm_range", rtm_range_profile(setup, sc.omega, np.linspace(-zmax, zmax, n)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)  # recorded in the "valid" column
        st = rtm_stability(setup, sc.omega, sc["band.bandwidth"])
    em.table("rtm_stability", ["mean_sq", "second", "ratio", "valid"],
             [(st.mean_sq, st.second, st.ratio, int(st.valid))])
    return 0


def _cint_outputs(sc: Scenario, em: Emitter, setup, params, n_t, suffix=""):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        profs = cint_mean_profiles(setup, sc.omega, params=params, n_t=n_t,
                                   eta_s=np.linspace(0, setup.geometry.depth, sc["imaging.points"]))
    for axis, prof in profs.items():
        em.profile(f"cint_{axis.replace('-', '_')}{suffix}", prof)
    return profs


def cmd_cint(sc: Scenario, em: Emitter, args) -> int:
    setup = sc.setup()
    if args.n_t is not None:
        setup = _with_nt(setup, args.n_t)
    _cint_outputs(sc, em, setup, sc.cint_params(), args.n_t)
    return 0


def cmd_figures(sc: Scenario, em: Emitter, args) -> int:
    """Mean-profile data per figure panel and mode cutoff ``N_T``."""
    base = sc.setup()
    params = sc.cint_params()
    ms = base.modes(sc.omega)
    if max(sc["imaging.n_t"]) > ms.N:
        raise ConfigError("imaging.n_t", f"mode cutoff above N = {ms.N}")
    for n_t in sc["imaging.n_t"]:
        setup = _with_nt(base, n_t)
        sfx = f"_nt{n_t}"
        # time reversal: depth and cross-range
        _tr_outputs(sc, em, setup, n_t, "_fig_tr" + sfx)
        # CINT: range, cross-range and depth
        profs = _cint_outputs(sc, em, setup, params, n_t, "_fig_cint" + sfx)
        # CINT depth misfit for noiseless values at the true depth, plotted as 1/sqrt
        modes = np.arange(1, n_t + 1)
        G = cint_model_weights(setup, sc.omega, params, modes)
        data = G * ms.phi(modes, setup.source_eta) ** 2
        try:
            est = cint_depth_estimate(data, setup, sc.omega, params, modes, cells=sc["imaging.points"] - 1)
        except ValueError:
            continue
        mis = est.misfit.values
        floor = 1e-12 * max(float(mis.max()), 1e-300)
        em.profile("cint_depth_misfit_fig_cint" + sfx,
                   ImagingProfile("depth", est.misfit.points, 1 / np.sqrt(mis + floor), n_t,
                                  {"quantity": "1/sqrt(misfit)", "estimate": est.eta}))
    return 0


COMMANDS = {
    "modes": (cmd_modes, "mode count, fractional part and wavenumbers"),
    "scales": (cmd_scales, "scattering mean free paths, decoherence scales, critical aperture"),
    "moments": (cmd_moments, "closed-form first, second and two-frequency moments"),
    "simulate": (cmd_simulate, "run a Monte-Carlo ensemble"),
    "timereversal": (cmd_timereversal, "mean time-reversal profiles"),
    "migrate": (cmd_migrate, "mean migration profiles and stability ratio"),
    "cint": (cmd_cint, "mean CINT profiles"),
    "validate": (cmd_validate, "solver invariants and ensemble vs closed forms"),
    "figures": (cmd_figures, "profile data for each mode cutoff in imaging.n_t"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario file (defaults for absent keys)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one scenario entry (repeatable)")
    common.add_argument("--seed", type=int, help="master seed (overrides ensemble.seed)")
    common.add_argument("--workers", type=int, default=1, help="worker processes for ensembles")
    common.add_argument("--out", default=os.environ.get(OUT_ENV),
                        help=f"output directory (default ${OUT_ENV}; stdout if unset)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="randwg", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, parents=[common], help=help_text)
        if name == "moments":
            s.add_argument("--kind", choices=("second", "two-frequency"), default="second")
            s.add_argument("--mode", type=int, default=1)
            s.add_argument("--points", type=float, nargs="+", default=[0.0, 0.25, 0.5, 1.0],
                           help="cross-range offsets, or frequency offsets for two-frequency")
        if name in ("timereversal", "cint"):
            s.add_argument("--n-t", type=int, default=None, help="record modes 1..N_T only")
        if name == "validate":
            s.add_argument("--threshold", type=float, default=3.0, help="z-score bound")
            s.add_argument("--min-pass", type=float, default=0.9,
                           help="fraction of moment checks that must pass")
    return p


def load_scenario(args) -> Scenario:
    sc = Scenario.load(args.scenario) if args.scenario else Scenario()
    return sc.with_overrides(args.overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args)
        seed = sc["ensemble.seed"] if args.seed is None else args.seed
        if seed < 0:
            raise ConfigError("--seed", "must be non-negative")
        em = Emitter(sc, seed, args.out, args.format)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", WindowTooWide)
            return COMMANDS[args.command][0](sc, em, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
