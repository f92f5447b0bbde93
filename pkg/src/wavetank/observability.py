"""
Observability experiments: band-limited initial data, a horizon sized from
the steepness and gradient bounds, and a check that the wall functional
dominates the energy, ``B(T) >= H``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grid as gr
from .errors import ConfigError
from .evolution import SurfaceState, Trajectory, cfl_limit, energy, integrate
from .identities import BoundReport, IdentityReport, corollary_bound, main_identity

ENVELOPES = ("one", "bump")


def _mode_count(N, d):
    return (N + 1,) * d


def _band_mask(N, d):
    """Modes ``(n, m)`` with ``n + m <= N``."""
    idx = np.indices(_mode_count(N, d)).sum(axis=0)
    return idx <= N


@dataclass(frozen=True)
class InitialDataSpec:
    """Band-limited initial data

        eta0 = chi(x) sum a1[n, m] h cos(pi n x1/L1) cos(pi m x2/L2)
        psi0 = chi(x) sum a2[n, m] h sqrt(g h) cos(...) cos(...)

    over ``n + m <= N``.  ``a1`` and ``a2`` have shape ``(N+1,)`` when
    ``d = 1`` and ``(N+1, N+1)`` when ``d = 2``; entries outside the band
    must be zero.  Every coefficient is bounded by ``c N^-kappa``.
    ``K0`` and ``beta`` size the horizon through ``A_target = K0 N^beta``.
    """

    N: int
    a1: np.ndarray
    a2: np.ndarray
    envelope: str = "one"
    c: float = 1.0
    kappa: float = 4.0
    beta: float = 0.6
    K0: float = 2.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0:
            raise ConfigError(f"band limit N must be a non-negative integer, got {self.N}")
        if self.envelope not in ENVELOPES:
            raise ConfigError(f"envelope must be one of {ENVELOPES}, got {self.envelope!r}")
        if self.c <= 0 or self.K0 <= 0:
            raise ConfigError("amplitude cap c and K0 must be positive")
        if self.beta <= 0.5:
            raise ConfigError(f"beta must exceed 1/2, got {self.beta}")
        a1 = np.asarray(self.a1, dtype=float)
        a2 = np.asarray(self.a2, dtype=float)
        if a1.shape != a2.shape or a1.ndim not in (1, 2) or any(s != self.N + 1 for s in a1.shape):
            raise ConfigError(f"coefficient arrays must have shape (N+1,)*d, got {a1.shape}, {a2.shape}")
        mask = _band_mask(self.N, a1.ndim)
        if np.any(a1[~mask]) or np.any(a2[~mask]):
            raise ConfigError("coefficients outside the band n + m <= N must vanish")
        cap = self.amplitude_cap
        worst = max(np.abs(a1).max(), np.abs(a2).max())
        if worst > cap * (1 + 1e-12):
            raise ConfigError(f"coefficient {worst:.3e} exceeds the cap c N^-kappa = {cap:.3e}")
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)

    @property
    def d(self):
        return self.a1.ndim

    @property
    def amplitude_cap(self):
        return self.c * max(self.N, 1) ** (-self.kappa)

    @property
    def A_target(self):
        return self.K0 * max(self.N, 1) ** self.beta

    @classmethod
    def random(cls, N, d=1, seed=0, eta_fraction=1.0, psi_fraction=1.0, **kw):
        """Coefficients drawn uniformly in ``[-cap, cap]`` times the given
        fractions, with ``a1[0]`` zeroed (it is removed by the mean
        projection anyway)."""
        c, kappa = kw.get("c", 1.0), kw.get("kappa", 4.0)
        cap = c * max(N, 1) ** (-kappa)
        rng = np.random.default_rng(seed)
        mask = _band_mask(N, d)
        a1 = rng.uniform(-cap, cap, _mode_count(N, d)) * mask * eta_fraction
        a2 = rng.uniform(-cap, cap, _mode_count(N, d)) * mask * psi_fraction
        a1.flat[0] = 0.0
        return cls(N=N, a1=a1, a2=a2, **kw)

    @classmethod
    def single_mode(cls, N, d=1, eta=0.0, psi=0.0, mode=None, **kw):
        """One cosine mode (default ``(N,)`` or ``(N, 0)``) in each field."""
        mode = tuple(mode) if mode is not None else (N,) + (0,) * (d - 1)
        a1 = np.zeros(_mode_count(N, d))
        a2 = np.zeros(_mode_count(N, d))
        a1[mode] = eta
        a2[mode] = psi
        return cls(N=N, a1=a1, a2=a2, **kw)


def bump(grid: gr.Grid, support=0.8):
    """Tensor-product smooth bump ``prod exp(1 - 1/(1 - r^2))`` equal to one at
    the centre of Q and vanishing outside the central ``support`` fraction."""
    out = np.ones(grid.shape)
    for a, (x, L) in enumerate(zip(grid.mesh, grid.lengths)):
        r = (x - 0.5 * L) / (0.5 * support * L)
        inside = np.abs(r) < 1.0
        val = np.zeros_like(r)
        val[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        out = out * val
    return out


def _synthesise(coef, grid):
    out = np.zeros(grid.shape)
    for idx in zip(*np.nonzero(coef)):
        term = np.full(grid.shape, coef[idx])
        for a, n in enumerate(idx):
            term = term * np.cos(np.pi * n * grid.mesh[a] / grid.lengths[a])
        out += term
    return out


def make_initial_data(spec: InitialDataSpec, grid: gr.Grid) -> SurfaceState:
    """Assemble ``(eta0, psi0)`` on the grid; ``eta0`` is projected to zero mean."""
    if spec.d != grid.d:
        raise ConfigError(f"initial data is {spec.d}-dimensional but the grid is {grid.d}-dimensional")
    if any(spec.N > n for n in grid.n):
        raise ConfigError(f"band limit N={spec.N} exceeds the grid resolution {grid.n}")
    h, g = grid.h, grid.g
    eta = h * _synthesise(spec.a1, grid)
    psi = h * np.sqrt(g * h) * _synthesise(spec.a2, grid)
    if spec.envelope == "bump":
        chi = bump(grid)
        eta = gr.filter_modes(chi * eta, grid)
        psi = gr.filter_modes(chi * psi, grid)
    eta = eta - gr.integrate_Q(eta, grid) / grid.area
    if eta.min() < -0.5 * h:
        raise ConfigError(
            f"initial elevation reaches {eta.min():.3e} < -h/2 (largest coefficient "
            f"{np.abs(spec.a1).max():.3e})")
    return SurfaceState(eta, psi, 0.0)


def horizon(A, d, max_length, g):
    """``T(A) = 4 (1 + (2d+3) max L A / sqrt(g))``."""
    return 4.0 * (1.0 + (2.0 * d + 3.0) * max_length / np.sqrt(g) * A)


@dataclass
class ObservabilityReport:
    """Outcome of one experiment.

    ``wall_max`` is ``max_t |eta|`` on the walls ``x_a = L_a``; a run with
    nonzero energy should never have a vanishing wall trace.
    """

    N: int
    H: float
    A_measured: float
    B_measured: float
    A_target: float
    T_used: float
    steps: int
    dt: float
    BT: float
    min_eta: float
    wall_max: float
    hypothesis_met: bool
    passed: bool
    identity: IdentityReport = None
    bound: BoundReport = None
    trajectory: Trajectory = field(default=None, repr=False)

    @property
    def margin(self):
        return self.BT - self.H


def _wall_max(traj):
    grid = traj.grid
    return max(float(np.max(np.abs(gr.wall_trace(traj.eta, grid, a)))) for a in range(grid.d))


def run_experiment(spec: InitialDataSpec, cfg: gr.TankConfig, tol_identity=1e-4,
                   dt=None, keep_trajectory=False, progress=None) -> ObservabilityReport:
    """Integrate the initial data of ``spec`` up to ``T(K0 N^beta)`` and
    compare ``B(T)`` with ``H``.

    The step is ``min(dt or cfg.dt, CFL limit)`` shrunk so that the horizon
    is an even number of steps.  ``tol_identity`` bounds the allowed
    shortfall ``H - B(T)`` relative to the identity's reference scale.
    """
    grid = gr.build_grid(cfg)
    state0 = make_initial_data(spec, grid)
    T = horizon(spec.A_target, grid.d, max(grid.lengths), grid.g)
    dt = min(cfg.dt if dt is None else dt, cfl_limit(grid))
    steps = int(np.ceil(T / dt))
    steps += steps % 2
    dt = T / steps

    H0 = energy(state0, grid)
    if H0 == 0.0:
        return ObservabilityReport(N=spec.N, H=0.0, A_measured=0.0, B_measured=0.0,
                                   A_target=spec.A_target, T_used=T, steps=0, dt=dt, BT=0.0,
                                   min_eta=float(state0.eta.min()), wall_max=0.0,
                                   hypothesis_met=True, passed=True)

    traj = integrate(state0, T, grid, dt=dt, progress=progress)
    report = main_identity(traj)
    bound = corollary_bound(report, traj)
    min_eta = float(traj.eta.min())
    met = bool(bound.hypothesis_met and min_eta >= -4.0 * grid.h / 9.0)
    shortfall_ok = report.BT - report.H >= -tol_identity * report.reference_scale
    return ObservabilityReport(
        N=spec.N, H=report.H, A_measured=bound.A, B_measured=bound.slope_bound,
        A_target=spec.A_target, T_used=T, steps=steps, dt=dt, BT=report.BT,
        min_eta=min_eta, wall_max=_wall_max(traj), hypothesis_met=met,
        passed=bool(met and shortfall_ok), identity=report, bound=bound,
        trajectory=traj if keep_trajectory else None)


def initial_gradient_ratio(state: SurfaceState, grid: gr.Grid) -> float:
    """``|grad psi0|_L2 / sqrt(2 H)`` at the initial instant."""
    H = energy(state, grid)
    if H == 0.0:
        return 0.0
    grad = gr.gradient(state.psi, grid)
    return float(np.sqrt(gr.integrate_Q(sum(c**2 for c in grad), grid)) / np.sqrt(2.0 * H))
