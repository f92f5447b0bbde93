"""
Time integration of the free-surface equations

    d_t eta = G(eta) psi
    d_t psi = -g eta - |grad psi|^2 / 2 + (G psi + grad eta . grad psi)^2 / (2 (1 + |grad eta|^2))

with classical RK4, and the conserved energy ``H = 1/2 int (g eta^2 + psi G psi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dtn
from . import grid as gr
from .errors import ConfigError, InstabilityError


@dataclass(frozen=True)
class SurfaceState:
    """Surface elevation ``eta`` and surface potential ``psi`` at time ``t``."""

    eta: np.ndarray
    psi: np.ndarray
    t: float = 0.0

    @classmethod
    def rest(cls, grid: gr.Grid, t=0.0):
        return cls(np.zeros(grid.shape), np.zeros(grid.shape), t)


@dataclass(frozen=True)
class Evaluation:
    """Right-hand side together with the potential it was computed from."""

    d_eta: np.ndarray
    d_psi: np.ndarray
    potential: dtn.FlattenedPotential
    fields: dtn.SurfaceFields


def _dealias(v, grid, enabled):
    return gr.filter_modes(v, grid) if enabled else v


def evaluate_rhs(state: SurfaceState, grid: gr.Grid, dealias=None, guess=None) -> Evaluation:
    """Right-hand side plus the flattened potential and surface traces."""
    dealias = grid.cfg.dealias if dealias is None else dealias
    pot = dtn.harmonic_extension(state.eta, state.psi, grid, guess=guess)
    f = dtn.fields_from_potential(pot)
    grad_psi = gr.gradient(state.psi, grid)
    slope2 = sum(ge**2 for ge in pot.grad_eta)
    d_psi = (-grid.g * state.eta - 0.5 * sum(gp**2 for gp in grad_psi)
             + 0.5 * (1.0 + slope2) * f.B**2)
    return Evaluation(_dealias(f.G, grid, dealias), _dealias(d_psi, grid, dealias), pot, f)


def rhs(state: SurfaceState, grid: gr.Grid, dealias=None):
    """``(d_t eta, d_t psi)`` at ``state``."""
    ev = evaluate_rhs(state, grid, dealias)
    return ev.d_eta, ev.d_psi


def energy(state: SurfaceState, grid: gr.Grid, G=None) -> float:
    """``H = 1/2 int_Q (g eta^2 + psi G(eta) psi)``; ``G`` may be supplied."""
    if G is None:
        G = dtn.dtn_apply(state.eta, state.psi, grid)
    return 0.5 * float(gr.integrate_Q(grid.g * state.eta**2 + state.psi * G, grid))


def _remove_mean(eta, grid):
    return eta - gr.integrate_Q(eta, grid) / grid.area


def _check_finite(eta, psi, index):
    if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(psi))):
        raise InstabilityError(f"non-finite surface fields at step {index}", index)


def _rk4(state, dt, grid, first, guess, index=0):
    """One RK4 step given the first stage; returns the new state and the
    last potential (reused as a warm start)."""
    eta, psi = state.eta, state.psi

    def stage(k, frac, guess):
        s = SurfaceState(eta + frac * dt * k.d_eta, psi + frac * dt * k.d_psi)
        _check_finite(s.eta, s.psi, index)
        return evaluate_rhs(s, grid, guess=guess)

    k1 = first
    k2 = stage(k1, 0.5, guess)
    k3 = stage(k2, 0.5, k2.potential.phi)
    k4 = stage(k3, 1.0, k3.potential.phi)
    new_eta = eta + dt / 6.0 * (k1.d_eta + 2 * k2.d_eta + 2 * k3.d_eta + k4.d_eta)
    new_psi = psi + dt / 6.0 * (k1.d_psi + 2 * k2.d_psi + 2 * k3.d_psi + k4.d_psi)
    _check_finite(new_eta, new_psi, index)
    return SurfaceState(_remove_mean(new_eta, grid), new_psi, state.t + dt), k4.potential.phi


def step(state: SurfaceState, dt: float, grid: gr.Grid, index: int = 0) -> SurfaceState:
    """Advance ``state`` by one RK4 step (``dt`` may be negative)."""
    first = evaluate_rhs(state, grid)
    with np.errstate(invalid="ignore", over="ignore"):
        new, _ = _rk4(state, dt, grid, first, first.potential.phi, index)
    return new


def cfl_limit(grid: gr.Grid) -> float:
    """Largest stable step ``c_cfl / omega_max`` for the resolved modes."""
    kmax = float(np.sqrt(sum(k[-1] ** 2 for k in grid.k)))
    return grid.cfg.c_cfl / np.sqrt(grid.g * kmax * np.tanh(kmax * grid.h))


def linear_frequency(k, h, g):
    """Angular frequency of a linear standing wave, ``omega^2 = g k tanh(k h)``."""
    k = np.asarray(k, dtype=float)
    return np.sqrt(g * k * np.tanh(k * h))


@dataclass
class Trajectory:
    """Snapshots on a uniform time grid and the diagnostics recorded at each.

    Per-step arrays have the step index as their first axis.  ``d_psi`` and
    ``G`` come from the right-hand side at the snapshot.
    """

    grid: gr.Grid
    dt: float
    t: np.ndarray
    eta: np.ndarray
    psi: np.ndarray
    d_psi: np.ndarray
    G: np.ndarray
    H: np.ndarray
    solid_boundary: np.ndarray
    bottom_moment: np.ndarray
    slope_flux: np.ndarray
    max_slope: np.ndarray
    grad_psi_norm: np.ndarray
    elliptic_residual: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def T(self):
        return float(self.t[-1] - self.t[0])

    def state(self, i) -> SurfaceState:
        return SurfaceState(self.eta[i], self.psi[i], float(self.t[i]))

    def wall_elevation(self, axis=0):
        """Contact-line elevation ``eta`` on the wall ``x_axis = L_axis``."""
        return gr.wall_trace(self.eta, self.grid, axis)


_DIAGNOSTICS = ("d_psi", "G", "H", "solid_boundary", "bottom_moment", "slope_flux",
                "max_slope", "grad_psi_norm", "elliptic_residual")


def _diagnostics(state, ev, grid):
    pot = ev.potential
    grad_psi = gr.gradient(state.psi, grid)
    slope = np.sqrt(sum(ge**2 for ge in pot.grad_eta))
    return {
        "d_psi": ev.d_psi,
        "G": ev.fields.G,
        "H": energy(state, grid, G=ev.fields.G),
        "solid_boundary": pot.solid_boundary_term(),
        "bottom_moment": pot.bottom_moment(),
        "slope_flux": pot.slope_flux(),
        "max_slope": float(slope.max()),
        "grad_psi_norm": float(np.sqrt(gr.integrate_Q(sum(gp**2 for gp in grad_psi), grid))),
        "elliptic_residual": pot.residual,
    }


def integrate(state0: SurfaceState, T: float, grid: gr.Grid, dt=None, progress=None) -> Trajectory:
    """Integrate from ``state0`` over ``[t0, t0 + T]`` with ``T = n dt``.

    ``dt`` defaults to ``grid.cfg.dt``.  If ``T`` is not a multiple of
    ``dt`` the step is shrunk to the nearest multiple.  Diagnostics are
    recorded at every snapshot.
    """
    dt = grid.cfg.dt if dt is None else float(dt)
    if dt == 0.0 or not np.isfinite(dt):
        raise ConfigError("time step must be finite and nonzero")
    if T < 0:
        raise ConfigError("integration horizon must be non-negative")
    nsteps = int(round(T / abs(dt)))
    if nsteps > 0:
        dt = np.sign(dt) * T / nsteps
    state = SurfaceState(np.asarray(state0.eta, float), np.asarray(state0.psi, float), state0.t)
    _check_finite(state.eta, state.psi, 0)

    snaps = {"t": [], "eta": [], "psi": []}
    diag = {name: [] for name in _DIAGNOSTICS}
    guess = None
    for i in range(nsteps + 1):
        ev = evaluate_rhs(state, grid, guess=guess)
        snaps["t"].append(state.t)
        snaps["eta"].append(state.eta)
        snaps["psi"].append(state.psi)
        for key, val in _diagnostics(state, ev, grid).items():
            diag[key].append(val)
        if progress is not None:
            progress(i, nsteps)
        if i == nsteps:
            break
        with np.errstate(invalid="ignore", over="ignore"):
            state, guess = _rk4(state, dt, grid, ev, ev.potential.phi, i + 1)

    arrays = {k: np.asarray(v) for k, v in {**snaps, **diag}.items()}
    return Trajectory(grid=grid, dt=dt, **arrays)


@dataclass(frozen=True)
class GradientCheck:
    """Central-difference check of the energy gradients.

    ``residual_*`` is the mismatch between the difference quotient and the
    pairing with the analytic gradient; ``scale_*`` is ``eps^2`` times the
    size of the pairing, the expected size of an ``O(eps^2)`` error.
    ``noise_scale = H / eps`` converts a relative error in the computed
    energy into an error of the difference quotient, which sets the floor
    of the exact (quadratic) psi direction.
    """

    residual_psi: float
    residual_eta: float
    pairing_psi: float
    pairing_eta: float
    eps: float
    H: float = 0.0

    @property
    def scale_psi(self):
        return self.eps**2 * max(abs(self.pairing_psi), 1e-300)

    @property
    def scale_eta(self):
        return self.eps**2 * max(abs(self.pairing_eta), 1e-300)

    @property
    def noise_scale(self):
        return self.H / self.eps


def energy_gradients(state: SurfaceState, grid: gr.Grid):
    """``(dH/deta, dH/dpsi)``: ``g eta + |grad psi|^2/2 - (1+|grad eta|^2) B^2/2``
    and ``G(eta) psi``."""
    f = dtn.surface_fields(state.eta, state.psi, grid)
    grad_psi = gr.gradient(state.psi, grid)
    grad_eta = gr.gradient(state.eta, grid)
    slope2 = sum(ge**2 for ge in grad_eta)
    d_eta = (grid.g * state.eta + 0.5 * sum(gp**2 for gp in grad_psi)
             - 0.5 * (1.0 + slope2) * f.B**2)
    return d_eta, f.G


def hamiltonian_gradient_check(state: SurfaceState, d_eta, d_psi, eps: float,
                               grid: gr.Grid) -> GradientCheck:
    """Compare central differences of ``H`` along ``(d_eta, d_psi)`` with the
    analytic gradients."""
    d_eta = np.asarray(d_eta, dtype=float)
    d_psi = np.asarray(d_psi, dtype=float)
    grad_eta, grad_psi = energy_gradients(state, grid)
    pair_psi = float(gr.integrate_Q(grad_psi * d_psi, grid))
    pair_eta = float(gr.integrate_Q(grad_eta * d_eta, grid))

    def H(eta, psi):
        return energy(SurfaceState(eta, psi), grid)

    res_psi = res_eta = 0.0
    if np.any(d_psi):
        fd = (H(state.eta, state.psi + eps * d_psi) - H(state.eta, state.psi - eps * d_psi)) / (2 * eps)
        res_psi = abs(fd - pair_psi)
    if np.any(d_eta):
        fd = (H(state.eta + eps * d_eta, state.psi) - H(state.eta - eps * d_eta, state.psi)) / (2 * eps)
        res_eta = abs(fd - pair_eta)
    return GradientCheck(res_psi, res_eta, pair_psi, pair_eta, eps, H(state.eta, state.psi))
