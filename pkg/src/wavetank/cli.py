"""
Command-line driver: ``wavetank <config> [--kind K] [--out DIR] [--jobs J] [--seed S]``.

The configuration is an INI file with sections ``[run]``, ``[tank]``,
``[initial]``, ``[tolerances]`` and ``[scan]``.  Each run writes

* ``results.txt``: a ``schema=1`` header then one ``record=<kind> key=value ...``
  line per record, floats with 17 significant digits;
* ``series.dat``: whitespace-separated time series with a ``#`` header;
* ``summary.txt``: a short human-readable digest of ``results.txt``.

Exit status: 0 all checks pass, 1 a check failed, 2 invalid configuration
(nothing is written), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import grid as gr
from .errors import ConfigError, NumericalError
from .evolution import SurfaceState, integrate, linear_frequency
from .identities import (end_terms, corollary_bound, main_identity, pohozaev,
                         theta_series)
from .observability import InitialDataSpec, make_initial_data, run_experiment

SCHEMA = 1
KINDS = ("simulate", "pohozaev", "main-identity", "observability-scan", "dispersion")
PRESETS = ("rest", "standing", "random", "modes")
DEFAULT_TOLERANCES = {"energy": 1e-6, "pohozaev": 1e-5, "identity": 1e-4, "dispersion": 1e-3}

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


@dataclass
class RunConfig:
    """Validated contents of a configuration file."""

    kind: str
    tank: gr.TankConfig
    initial: dict
    out: str
    seed: int = 0
    jobs: int = 1
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    scan: tuple = (1, 2, 4, 8)


# -- configuration -------------------------------------------------------

_BOOL = {"true": True, "yes": True, "1": True, "on": True,
         "false": False, "no": False, "0": False, "off": False}


def _convert(value, kind, name):
    try:
        if kind is bool:
            return _BOOL[value.strip().lower()]
        return kind(value)
    except (KeyError, ValueError):
        raise ConfigError(f"cannot read {name} = {value!r} as {kind.__name__}") from None


def _tank_from_section(section):
    kinds = {f.name: f.type for f in fields(gr.TankConfig)}
    conv = {"float": float, "int": int, "bool": bool}
    values = {}
    for key, raw in section.items():
        if key not in kinds:
            raise ConfigError(f"unknown [tank] key {key!r}")
        values[key] = _convert(raw, conv[kinds[key]], f"tank.{key}")
    return gr.TankConfig(**values)


_INITIAL_KEYS = {
    "preset": str, "mode": str, "amplitude": float, "psi_amplitude": float,
    "N": int, "envelope": str, "c": float, "kappa": float, "beta": float, "K0": float,
    "eta_fraction": float, "psi_fraction": float, "periods": float, "T": float,
    "steps_per_period": int,
}


def _initial_from_section(section):
    out = {"preset": "standing", "mode": "1", "amplitude": 1e-3, "psi_amplitude": 0.0,
           "envelope": "one", "c": 0.03, "kappa": 4.0, "beta": 0.6, "K0": 2.0,
           "eta_fraction": 1.0, "psi_fraction": 0.0, "periods": 2.0,
           "steps_per_period": 200}
    lower = {k.lower(): k for k in _INITIAL_KEYS}
    for key, raw in section.items():
        if key.lower() not in lower:
            raise ConfigError(f"unknown [initial] key {key!r}")
        name = lower[key.lower()]
        out[name] = _convert(raw, _INITIAL_KEYS[name], f"initial.{name}")
    if out["preset"] not in PRESETS:
        raise ConfigError(f"initial.preset must be one of {PRESETS}")
    if out["periods"] <= 0 or out["steps_per_period"] <= 0:
        raise ConfigError("initial.periods and initial.steps_per_period must be positive")
    if "T" in out and out["T"] < 0:
        raise ConfigError("initial.T must be non-negative")
    return out


def load_config(path, overrides=None) -> RunConfig:
    """Parse and validate a configuration file; raises :class:`ConfigError`."""
    overrides = overrides or {}
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    for name in parser.sections():
        if name not in ("run", "tank", "initial", "tolerances", "scan"):
            raise ConfigError(f"unknown section [{name}]")

    run = parser["run"] if parser.has_section("run") else {}
    kind = overrides.get("kind") or run.get("kind", "simulate")
    if kind not in KINDS:
        raise ConfigError(f"run.kind must be one of {KINDS}, got {kind!r}")
    out = overrides.get("out") or run.get("out", "wavetank-out")
    seed = overrides.get("seed")
    seed = _convert(run.get("seed", "0"), int, "run.seed") if seed is None else seed
    jobs = overrides.get("jobs")
    jobs = _convert(run.get("jobs", "1"), int, "run.jobs") if jobs is None else jobs
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")

    tank = _tank_from_section(parser["tank"] if parser.has_section("tank") else {})
    initial = _initial_from_section(parser["initial"] if parser.has_section("initial") else {})

    tolerances = dict(DEFAULT_TOLERANCES)
    if parser.has_section("tolerances"):
        for key, raw in parser["tolerances"].items():
            if key not in tolerances:
                raise ConfigError(f"unknown tolerance {key!r}")
            tolerances[key] = _convert(raw, float, f"tolerances.{key}")
            if not tolerances[key] > 0:
                raise ConfigError(f"tolerance {key} must be positive")

    scan = (1, 2, 4, 8)
    if parser.has_section("scan") and "N" in parser["scan"]:
        try:
            scan = tuple(int(v) for v in parser["scan"]["N"].split(","))
        except ValueError:
            raise ConfigError("scan.N must be a comma-separated list of integers") from None
        if not scan or min(scan) < 0:
            raise ConfigError("scan.N must list non-negative band limits")

    if kind in ("simulate", "main-identity", "dispersion") and initial["preset"] == "rest" \
            and "T" not in initial:
        initial["T"] = 1.0
    _parse_mode(initial["mode"], tank.d)
    if kind == "dispersion" and initial["preset"] != "standing":
        raise ConfigError("dispersion runs need initial.preset = standing")
    return RunConfig(kind=kind, tank=tank, initial=initial, out=out, seed=seed, jobs=jobs,
                     tolerances=tolerances, scan=scan)


def _parse_mode(text, d):
    try:
        mode = tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise ConfigError(f"initial.mode must be integers, got {text!r}") from None
    if len(mode) == 1 and d == 2:
        mode = mode + (0,)
    if len(mode) != d or min(mode) < 0 or sum(mode) == 0:
        raise ConfigError(f"initial.mode {text!r} is not a nonzero mode for d={d}")
    return mode


# -- experiment pieces ----------------------------------------------------

def _mode_wavenumber(mode, grid):
    return float(np.sqrt(sum((np.pi * n / L) ** 2 for n, L in zip(mode, grid.lengths))))


def _initial_state(rc: RunConfig, grid, N=None):
    ini = rc.initial
    preset = ini["preset"]
    if preset == "rest":
        return SurfaceState.rest(grid)
    if preset == "standing":
        mode = _parse_mode(ini["mode"], grid.d)
        shape = np.ones(grid.shape)
        for n, x, L in zip(mode, grid.mesh, grid.lengths):
            shape = shape * np.cos(np.pi * n * x / L)
        eta = ini["amplitude"] * grid.h * shape
        psi = ini["psi_amplitude"] * grid.h * np.sqrt(grid.g * grid.h) * shape
        if eta.min() < -0.5 * grid.h:
            raise ConfigError("standing-wave amplitude violates eta >= -h/2")
        return SurfaceState(eta, psi)
    return make_initial_data(_spec(rc, grid.d, N), grid)


def _spec(rc: RunConfig, d, N=None):
    ini = rc.initial
    N = ini.get("N", 1) if N is None else N
    common = dict(envelope=ini["envelope"], c=ini["c"], kappa=ini["kappa"], beta=ini["beta"],
                  K0=ini["K0"])
    if ini["preset"] == "modes":
        cap = ini["c"] * max(N, 1) ** (-ini["kappa"])
        mode = (N,) + (0,) * (d - 1)
        return InitialDataSpec.single_mode(N, d=d, eta=cap * ini["eta_fraction"],
                                           psi=cap * ini["psi_fraction"], mode=mode, **common)
    return InitialDataSpec.random(N, d=d, seed=rc.seed + N, eta_fraction=ini["eta_fraction"],
                                  psi_fraction=ini["psi_fraction"], **common)


def _timing(rc: RunConfig, grid):
    """Horizon and step from the initial-data settings."""
    ini = rc.initial
    mode = _parse_mode(ini["mode"], grid.d)
    period = 2 * np.pi / float(linear_frequency(_mode_wavenumber(mode, grid), grid.h, grid.g))
    if "T" in ini:
        T = ini["T"]
        dt = min(rc.tank.dt, period / ini["steps_per_period"])
    else:
        T = ini["periods"] * period
        dt = period / ini["steps_per_period"]
    steps = max(int(np.ceil(T / dt - 1e-9)), 0)
    steps += steps % 2
    return T, (T / steps if steps else dt), steps, period


def _series_columns(traj, grid):
    theta = theta_series(traj)
    walls = [gr.wall_trace(traj.eta, grid, a) for a in range(grid.d)]
    wall_eta = walls[0] if grid.d == 1 else gr.integrate_wall(walls[0], grid, 0)
    H0 = traj.H[0]
    drift = (traj.H - H0) / H0 if H0 > 0 else np.zeros_like(traj.H)
    return {"t": traj.t, "H": traj.H, "energy_drift": drift, "theta_wall": theta,
            "wall_eta": wall_eta}


def _running_residual(traj, grid):
    """``B(t) - (t H/2 + P + I1 + I2 + I3)`` accumulated with the trapezoid rule."""
    c = 5.0 + 2.0 * grid.d
    integrand = (theta_series(traj) - 0.5 * traj.H[0] - traj.solid_boundary
                 - c / 8.0 * traj.bottom_moment + c / 4.0 * traj.slope_flux)
    acc = cumulative_trapezoid(integrand, dx=traj.dt, initial=0.0)
    a0, b0 = end_terms(traj.state(0), grid)
    ends = np.array([end_terms(traj.state(i), grid) for i in range(len(traj))])
    I3 = -(grid.d / 2.0 - 0.25) * (ends[:, 0] - a0) - (ends[:, 1] - b0)
    return acc - I3


class Outcome:
    """Records, series and checks produced by one run."""

    def __init__(self):
        self.records = []
        self.checks = []
        self.series = None
        self.children = []

    def record(self, name, **values):
        self.records.append((name, values))

    def check(self, name, value, tolerance, passed=None):
        ok = bool(value <= tolerance) if passed is None else bool(passed)
        self.checks.append((name, value, tolerance, ok))

    @property
    def passed(self):
        return all(c[3] for c in self.checks) and all(ch.passed for _, ch in self.children)


def _run_simulate(rc, grid):
    out = Outcome()
    state = _initial_state(rc, grid)
    T, dt, steps, _ = _timing(rc, grid)
    traj = integrate(state, T, grid, dt=dt)
    cols = _series_columns(traj, grid)
    out.series = cols
    drift = float(np.max(np.abs(cols["energy_drift"])))
    out.record("simulate", T=traj.T, dt=traj.dt, steps=steps, H0=float(traj.H[0]),
               H_final=float(traj.H[-1]), max_energy_drift=drift,
               max_slope=float(traj.max_slope.max()),
               max_elliptic_residual=float(traj.elliptic_residual.max()))
    out.check("energy_drift", drift, rc.tolerances["energy"])
    return out


def _run_pohozaev(rc, grid):
    out = Outcome()
    state = _initial_state(rc, grid)
    rep = pohozaev(state.eta, state.psi, grid)
    out.record("pohozaev", lhs=rep.lhs, wall_bottom=rep.wall_bottom, bulk=rep.bulk,
               surface=rep.surface, residual=rep.residual,
               reference_scale=rep.reference_scale, relative_residual=rep.relative_residual)
    out.check("pohozaev_relative_residual", rep.relative_residual, rc.tolerances["pohozaev"])
    return out


def _identity_records(out, rep, bound):
    out.record("identity", BT=rep.BT, TH_half=rep.TH_half, P=rep.P, I1=rep.I1, I2=rep.I2,
               I3=rep.I3, T=rep.T, H=rep.H, residual=rep.residual,
               reference_scale=rep.reference_scale, relative_residual=rep.relative_residual)
    out.record("bound", slope_bound=bound.slope_bound, A=bound.A, T=bound.T,
               T_required=bound.T_required, hypothesis_met=bound.hypothesis_met,
               lower_bound=bound.lower_bound, BT=bound.BT, H=bound.H, margin=bound.margin)


def _run_main_identity(rc, grid):
    out = Outcome()
    state = _initial_state(rc, grid)
    T, dt, steps, _ = _timing(rc, grid)
    traj = integrate(state, T, grid, dt=dt)
    rep = main_identity(traj)
    bound = corollary_bound(rep, traj)
    _identity_records(out, rep, bound)
    cols = _series_columns(traj, grid)
    cols.update(solid_boundary=traj.solid_boundary, bottom_moment=traj.bottom_moment,
                slope_flux=traj.slope_flux, running_residual=_running_residual(traj, grid))
    out.series = cols
    out.check("identity_relative_residual", rep.relative_residual, rc.tolerances["identity"])
    out.check("P_nonnegative", -rep.P, 0.0)
    return out


def _zero_crossings(t, v):
    s = np.sign(v)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    return t[idx] - v[idx] * (t[idx + 1] - t[idx]) / (v[idx + 1] - v[idx])


def measure_frequency(t, signal):
    """Angular frequency from the mean spacing of zero crossings."""
    crossings = _zero_crossings(np.asarray(t), np.asarray(signal) - np.mean(signal))
    if len(crossings) < 3:
        raise NumericalError("too few zero crossings to measure a frequency")
    half_period = (crossings[-1] - crossings[0]) / (len(crossings) - 1)
    return np.pi / half_period


def _run_dispersion(rc, grid):
    out = Outcome()
    state = _initial_state(rc, grid)
    mode = _parse_mode(rc.initial["mode"], grid.d)
    T, dt, steps, period = _timing(rc, grid)
    traj = integrate(state, T, grid, dt=dt)
    wall = gr.wall_trace(traj.eta, grid, 0)
    if grid.d == 2:
        wall = wall[:, -1]
    omega = measure_frequency(traj.t, wall)
    k = _mode_wavenumber(mode, grid)
    exact = float(linear_frequency(k, grid.h, grid.g))
    rel = abs(omega - exact) / exact
    out.record("dispersion", k=k, omega_measured=omega, omega_linear=exact,
               relative_error=rel, T=traj.T, dt=traj.dt)
    out.series = {"t": traj.t, "wall_eta": wall, "H": traj.H}
    out.check("dispersion_relative_error", rel, rc.tolerances["dispersion"])
    return out


def _scan_one(args):
    rc, N = args
    grid = gr.build_grid(rc.tank)
    spec = _spec(rc, grid.d, N)
    rep = run_experiment(spec, rc.tank, tol_identity=rc.tolerances["identity"],
                         keep_trajectory=True)
    out = Outcome()
    out.record("observability", N=N, H=rep.H, A_measured=rep.A_measured,
               B_measured=rep.B_measured, A_target=rep.A_target, T_used=rep.T_used,
               steps=rep.steps, dt=rep.dt, BT=rep.BT, margin=rep.margin, min_eta=rep.min_eta,
               wall_max=rep.wall_max, hypothesis_met=rep.hypothesis_met, passed=rep.passed)
    if rep.identity is not None:
        _identity_records(out, rep.identity, rep.bound)
        cols = _series_columns(rep.trajectory, grid)
        cols["running_residual"] = _running_residual(rep.trajectory, grid)
        out.series = cols
    out.check(f"observability_N{N}", 0.0, 0.0, passed=rep.passed)
    out.check(f"wall_trace_N{N}", 0.0, 0.0, passed=(rep.H <= 1e-12 or rep.wall_max > 0.0))
    return N, out


def _run_scan(rc, grid):
    out = Outcome()
    tasks = [(rc, N) for N in rc.scan]
    if rc.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=rc.jobs) as pool:
            results = list(pool.map(_scan_one, tasks))
    else:
        results = [_scan_one(t) for t in tasks]
    for N, child in results:
        out.children.append((f"N={N}", child))
        out.records.extend(child.records)
        out.checks.extend(child.checks)
    T_used = [r[1]["T_used"] for _, ch in results for r in ch.records if r[0] == "observability"]
    monotone = all(b >= a for a, b in zip(T_used, T_used[1:]))
    out.check("T_used_monotone", 0.0, 0.0, passed=monotone)
    return out


RUNNERS = {"simulate": _run_simulate, "pohozaev": _run_pohozaev,
           "main-identity": _run_main_identity, "observability-scan": _run_scan,
           "dispersion": _run_dispersion}


# -- output ----------------------------------------------------------------

def _format(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    text = str(value)
    return text.replace(" ", "_")


def _record_line(name, values):
    return " ".join([f"record={name}"] + [f"{k}={_format(v)}" for k, v in values.items()])


def _write_outcome(directory, rc, outcome, header=True):
    os.makedirs(directory, exist_ok=True)
    lines = [f"schema={SCHEMA}"]
    tank = {f.name: getattr(rc.tank, f.name) for f in fields(gr.TankConfig)}
    lines.append(_record_line("run", {"kind": rc.kind, "seed": rc.seed, **tank}))
    for name, values in outcome.records:
        lines.append(_record_line(name, values))
    for name, value, tol, ok in outcome.checks:
        lines.append(_record_line("check", {"name": name, "value": value, "tolerance": tol,
                                            "passed": ok}))
    lines.append(_record_line("status", {"passed": outcome.passed}))
    with open(os.path.join(directory, "results.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")

    if outcome.series is not None:
        names = list(outcome.series)
        data = np.column_stack([np.asarray(outcome.series[n], dtype=float) for n in names])
        with open(os.path.join(directory, "series.dat"), "w") as fh:
            fh.write("# columns: " + " ".join(names) + "\n")
            np.savetxt(fh, data, fmt="%.17g")

    summary = [f"wavetank {rc.kind}: {'PASS' if outcome.passed else 'FAIL'}"]
    for name, values in outcome.records:
        summary.append(f"[{name}]")
        for k, v in values.items():
            summary.append(f"  {k} = {_format(v)}")
    for name, value, tol, ok in outcome.checks:
        summary.append(f"check {name}: value={_format(value)} tolerance={_format(tol)} "
                       f"{'pass' if ok else 'FAIL'}")
    with open(os.path.join(directory, "summary.txt"), "w") as fh:
        fh.write("\n".join(summary) + "\n")

    for sub, child in outcome.children:
        _write_outcome(os.path.join(directory, sub), rc, child)


def execute(rc: RunConfig) -> int:
    """Run a validated configuration and write its artifacts."""
    grid = gr.build_grid(rc.tank)
    try:
        outcome = RUNNERS[rc.kind](rc, grid)
    except NumericalError as exc:
        os.makedirs(rc.out, exist_ok=True)
        with open(os.path.join(rc.out, "results.txt"), "w") as fh:
            fh.write(f"schema={SCHEMA}\n")
            fh.write(_record_line("failure", {"stage": exc.stage, "message": str(exc)}) + "\n")
        print(f"wavetank: numerical failure in {exc.stage}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write_outcome(rc.out, rc, outcome)
    print(open(os.path.join(rc.out, "summary.txt")).read(), end="")
    return EXIT_OK if outcome.passed else EXIT_CHECK


def build_parser():
    p = argparse.ArgumentParser(prog="wavetank", description=__doc__.split("\n\n")[0])
    p.add_argument("config", help="INI configuration file")
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="parallel runs for scans")
    p.add_argument("--seed", type=int, help="seed for randomised initial data")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = load_config(args.config, {"kind": args.kind, "out": args.out, "jobs": args.jobs,
                                       "seed": args.seed})
        # validate kind-specific inputs before touching the disk
        grid = gr.build_grid(rc.tank)
        if rc.kind != "observability-scan":
            _initial_state(rc, grid)
        else:
            for N in rc.scan:
                make_initial_data(_spec(rc, grid.d, N), grid)
    except ConfigError as exc:
        print(f"wavetank: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return execute(rc)


if __name__ == "__main__":
    sys.exit(main())
