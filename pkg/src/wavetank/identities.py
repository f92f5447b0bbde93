"""
Numerical evaluation of the exact integral identities satisfied by the
free-surface flow in the tank.

* the Pohozaev identity pairing ``G(eta) psi`` with the radial multiplier
  ``x . grad psi``;
* the boundary observability identity

      B(T) = T H / 2 + P + I1 + I2 + I3

  relating the wall functional ``B(T)`` built from
  ``Theta = -eta d_t psi - g eta^2 / 2`` to the energy;
* the pointwise algebraic identities between the surface traces, the
  depth-integration identities and the bottom/volume exchange identity used
  to derive it;
* the lower bound on ``B(T)`` that follows from the identity under a
  steepness condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import dtn
from . import grid as gr
from .evolution import SurfaceState, Trajectory, evaluate_rhs


# -- wall functional -----------------------------------------------------

def theta_field(state: SurfaceState, grid: gr.Grid, d_psi=None) -> np.ndarray:
    """``Theta = -eta d_t psi - g eta^2 / 2`` on Q.

    ``d_psi`` is taken from the right-hand side of the evolution equations
    unless supplied.
    """
    if d_psi is None:
        d_psi = evaluate_rhs(state, grid).d_psi
    return -state.eta * d_psi - 0.5 * grid.g * state.eta**2


def wall_integral(field_q, grid: gr.Grid):
    """Wall part of the boundary functional for one or many time levels.

    For ``d = 1`` this is ``L1 f(L1)``; for ``d = 2`` it is
    ``L1 int f(L1, x2) dx2 + L2 int f(x1, L2) dx1``.
    """
    field_q = np.asarray(field_q, dtype=float)
    total = 0.0
    for a, L in enumerate(grid.lengths):
        total = total + L * gr.integrate_wall(gr.wall_trace(field_q, grid, a), grid, a)
    return total


def _time_integral(values, dt):
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    if (len(values) - 1) % 2:
        raise ValueError("composite Simpson needs an even number of time steps, "
                         f"got {len(values) - 1}")
    return float(simpson(values, dx=dt))


def theta_series(traj: Trajectory):
    """Wall integral of ``Theta`` at every snapshot."""
    if traj.d_psi is None or len(traj.d_psi) != len(traj.t):
        raise ValueError("trajectory lacks the d_t psi diagnostics")
    theta = -traj.eta * traj.d_psi - 0.5 * traj.grid.g * traj.eta**2
    return np.atleast_1d(wall_integral(theta, traj.grid))


def boundary_functional(traj: Trajectory) -> float:
    """``B(T)``: time integral (composite Simpson) of the wall integral of
    ``Theta``."""
    return _time_integral(theta_series(traj), traj.dt)


# -- Pohozaev identity ---------------------------------------------------

def _radial(v_grad, grid):
    """``int_Q x . w`` for a gradient-like tuple ``w`` (odd along its own axis)."""
    return sum(float(gr.moment(w, grid, a)) for a, w in enumerate(v_grad))


@dataclass(frozen=True)
class PohozaevReport:
    """Terms of the identity

        int_Q G psi (x . grad psi) = wall_bottom + bulk + surface
    """

    lhs: float
    wall_bottom: float
    bulk: float
    surface: float

    @property
    def rhs(self):
        return self.wall_bottom + self.bulk + self.surface

    @property
    def residual(self):
        return self.lhs - self.rhs

    @property
    def reference_scale(self):
        return max(abs(self.lhs), abs(self.wall_bottom), abs(self.bulk), abs(self.surface))

    @property
    def relative_residual(self):
        scale = self.reference_scale
        return abs(self.residual) / scale if scale > 0 else 0.0


def pohozaev(eta, psi, grid: gr.Grid, tol=None) -> PohozaevReport:
    """Evaluate every term of the Pohozaev identity from one elliptic solve."""
    eta = np.asarray(eta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    pot = dtn.harmonic_extension(eta, psi, grid, tol=tol)
    f = dtn.fields_from_potential(pot)
    grad_psi = gr.gradient(psi, grid)
    lhs = _radial([f.G * gp for gp in grad_psi], grid)

    density = sum(v**2 for v in f.V) + f.B**2 - 2.0 * f.B * f.G
    surface = 0.5 * (float(gr.integrate_Q(eta * density, grid))
                     - _radial([ge * density for ge in pot.grad_eta], grid))
    bulk = -0.5 * (grid.d - 1) * pot.dirichlet_energy() if grid.d > 1 else 0.0
    return PohozaevReport(lhs=lhs, wall_bottom=pot.solid_boundary_term(), bulk=bulk,
                          surface=surface)


# -- main identity -------------------------------------------------------

@dataclass(frozen=True)
class IdentityReport:
    """Terms of ``B(T) = T H / 2 + P + I1 + I2 + I3``.

    ``per_step`` holds the time series that were integrated: the wall
    integral of ``Theta`` and the integrands of ``P``, ``I1`` and ``I2``.
    """

    BT: float
    TH_half: float
    P: float
    I1: float
    I2: float
    I3: float
    T: float
    H: float
    per_step: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def rhs(self):
        return self.TH_half + self.P + self.I1 + self.I2 + self.I3

    @property
    def residual(self):
        return self.BT - self.rhs

    @property
    def reference_scale(self):
        return max(abs(v) for v in (self.BT, self.TH_half, self.P, self.I1, self.I2, self.I3))

    @property
    def relative_residual(self):
        scale = self.reference_scale
        return abs(self.residual) / scale if scale > 0 else 0.0


def end_terms(state, grid):
    """``(int eta psi, int eta x . grad psi)`` at one instant."""
    grad_psi = gr.gradient(state.psi, grid)
    return (float(gr.integrate_Q(state.eta * state.psi, grid)),
            _radial([state.eta * gp for gp in grad_psi], grid))


def main_identity(traj: Trajectory, grid: gr.Grid = None) -> IdentityReport:
    """Evaluate both sides of the observability identity on a trajectory."""
    grid = traj.grid if grid is None else grid
    d = grid.d
    c = (5.0 + 2.0 * d)
    theta = theta_series(traj)
    BT = _time_integral(theta, traj.dt)
    H = float(traj.H[0])
    T = traj.T
    P = _time_integral(traj.solid_boundary, traj.dt)
    I1 = c / 8.0 * _time_integral(traj.bottom_moment, traj.dt)
    I2 = -c / 4.0 * _time_integral(traj.slope_flux, traj.dt)
    a0, b0 = end_terms(traj.state(0), grid)
    a1, b1 = end_terms(traj.state(len(traj) - 1), grid)
    I3 = -(d / 2.0 - 0.25) * (a1 - a0) - (b1 - b0)
    per_step = {"t": traj.t, "theta_wall": theta, "solid_boundary": traj.solid_boundary,
                "bottom_moment": traj.bottom_moment, "slope_flux": traj.slope_flux}
    return IdentityReport(BT=BT, TH_half=0.5 * T * H, P=P, I1=I1, I2=I2, I3=I3,
                          T=T, H=H, per_step=per_step)


def corner_theta(m, dm, g):
    """``Theta`` at the wall of a one-dimensional tank from the contact-line
    elevation ``m`` and its velocity ``dm``: ``(g m^2 - m dm^2) / 2``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (g * m**2 - m * np.asarray(dm, dtype=float) ** 2)


# -- elementary identities -----------------------------------------------

@dataclass(frozen=True)
class Check:
    """Two independently evaluated sides of one identity."""

    name: str
    lhs: object
    rhs: object

    @property
    def residual(self):
        return float(np.max(np.abs(np.asarray(self.lhs) - np.asarray(self.rhs))))

    @property
    def scale(self):
        return float(max(np.max(np.abs(self.lhs)), np.max(np.abs(self.rhs))))

    @property
    def relative(self):
        s = self.scale
        return self.residual / s if s > 0 else 0.0


def trace_identities(state: SurfaceState, grid: gr.Grid, tol=None):
    """Pointwise algebraic identities between the surface traces.

    ``trace-energy``: ``(V^2 + B^2 - 2 B G psi)/2 = -d_t psi - g eta``;
    ``trace-rearrangement``: ``|grad psi|^2/2 - (grad eta . grad psi + G psi)^2 / (2(1+|grad eta|^2))
    = V^2/2 + B V . grad eta - B^2/2``;
    ``trace-velocity``: ``-|grad psi|^2/2 + (1+|grad eta|^2) B^2/2`` against the
    same quantity formed from the velocity of the potential at the surface.
    """
    eta, psi = state.eta, state.psi
    pot = dtn.harmonic_extension(eta, psi, grid, tol=tol)
    f = dtn.fields_from_potential(pot)
    ev_dpsi = evaluate_rhs(state, grid, dealias=False).d_psi
    grad_psi = gr.gradient(psi, grid)
    grad_eta = pot.grad_eta
    slope2 = sum(ge**2 for ge in grad_eta)
    gpsi2 = sum(gp**2 for gp in grad_psi)
    V2 = sum(v**2 for v in f.V)
    BVe = f.B * sum(v * ge for v, ge in zip(f.V, grad_eta))
    u, w = pot.velocity
    u0, w0 = [c[0] for c in u], w[0]

    checks = [
        Check("trace-energy", 0.5 * (V2 + f.B**2 - 2.0 * f.B * f.G), -ev_dpsi - grid.g * eta),
        Check("trace-rearrangement",
              0.5 * gpsi2 - (sum(ge * gp for ge, gp in zip(grad_eta, grad_psi)) + f.G) ** 2
              / (2.0 * (1.0 + slope2)),
              0.5 * V2 + BVe - 0.5 * f.B**2),
        Check("trace-velocity", -0.5 * gpsi2 + 0.5 * (1.0 + slope2) * f.B**2,
              0.5 * (w0**2 - sum(c**2 for c in u0)
                     - 2.0 * w0 * sum(c * ge for c, ge in zip(u0, grad_eta)))),
    ]
    return checks


def bottom_exchange(pot: dtn.FlattenedPotential) -> Check:
    """Bottom/volume exchange identity on a solved potential:

        iint (phi_y^2 - |grad_x phi|^2) + int h |grad_x phi|^2(-h)
            = -int eta |grad_x phi|^2(-h) + 2 iint phi_y grad eta . grad_x phi
    """
    grid = pot.grid
    u, w = pot.velocity
    lhs = (pot.volume_integral(w**2 - sum(c**2 for c in u))
           + grid.h * float(gr.integrate_Q(pot.bottom_speed2(), grid)))
    rhs = -pot.bottom_moment() + 2.0 * pot.slope_flux()
    return Check("bottom-exchange", lhs, rhs)


def _gauss_box(grid, n_quad):
    xs, ws = [], []
    for L in grid.lengths:
        t, wt = np.polynomial.legendre.leggauss(n_quad)
        xs.append(0.5 * L * (t + 1.0))
        ws.append(0.5 * L * wt)
    return xs, ws


def depth_identities(eta, grid: gr.Grid, u, u_y, f, div_f, n_quad=48):
    """Depth-integration identities for caller-supplied test functions.

    ``u(x, y)``, ``u_y(x, y)``, ``f(x, y)`` (a tuple of ``d`` components)
    and ``div_f(x, y)`` take ``x`` as a tuple of coordinate arrays.  Returns
    checks for

        int u(x, eta) = iint u_y + int u(x, -h)                       (depth)
        int f(x, eta) . grad eta + iint div_x f = int_walls f . nu dS  (flux)

    and their sum.  Integrals use Gauss-Legendre rules in ``x`` and in
    ``y`` over each column, with ``eta`` interpolated spectrally.
    """
    eta = np.asarray(eta, dtype=float)
    h = grid.h
    d = grid.d
    t, wt = np.polynomial.legendre.leggauss(n_quad)
    xs, ws = _gauss_box(grid, n_quad)
    X = np.meshgrid(*xs, indexing="ij")
    W = ws[0] if d == 1 else np.multiply.outer(ws[0], ws[1])
    e = gr.evaluate(eta, grid, X)
    grad_e = [gr.evaluate_odd(ge, grid, X, a) for a, ge in enumerate(gr.gradient(eta, grid))]

    def column(func, Xc, top):
        # int_{-h}^{top} func(x, y) dy for every column
        Y = -h + 0.5 * (top + h)[..., None] * (t + 1.0)
        Xb = tuple(np.broadcast_to(c[..., None], Y.shape) for c in Xc)
        vals = func(Xb, Y)
        return 0.5 * (top + h) * np.sum(vals * wt, axis=-1)

    surface_u = float(np.sum(W * u(X, e)))
    volume_uy = float(np.sum(W * column(u_y, X, e)))
    bottom_u = float(np.sum(W * u(X, np.full_like(e, -h))))

    fs = f(X, e)
    surface_f = float(np.sum(W * sum(fa * ga for fa, ga in zip(fs, grad_e))))
    volume_div = float(np.sum(W * column(div_f, X, e)))

    wall = 0.0
    for a in range(d):
        for end, sign in ((0, -1.0), (-1, 1.0)):
            pos = 0.0 if end == 0 else grid.lengths[a]
            if d == 1:
                Xw = (np.array([pos]),)
                top = gr.evaluate(eta, grid, Xw)
                flux = column(lambda Xc, Y: f(Xc, Y)[a], Xw, top)
                wall += sign * float(flux[0])
            else:
                b = 1 - a
                coords = [None, None]
                coords[a] = np.full(n_quad, pos)
                coords[b] = xs[b]
                top = gr.evaluate(eta, grid, coords)
                flux = column(lambda Xc, Y: f(Xc, Y)[a], coords, top)
                wall += sign * float(np.sum(ws[b] * flux))

    return [
        Check("depth", surface_u, volume_uy + bottom_u),
        Check("flux", surface_f + volume_div, wall),
        Check("depth-flux", surface_u + surface_f, volume_uy - volume_div + bottom_u + wall),
    ]


def elementary_checks(state: SurfaceState, grid: gr.Grid, tests=None, tol=None):
    """Run all elementary identities on ``state``.

    ``tests`` optionally supplies ``(u, u_y, f, div_f)`` for the
    depth-integration identities.  Returns a list of :class:`Check`.
    """
    checks = trace_identities(state, grid, tol=tol)
    pot = dtn.harmonic_extension(state.eta, state.psi, grid, tol=tol)
    checks.append(bottom_exchange(pot))
    if tests is not None:
        checks.extend(depth_identities(state.eta, grid, *tests))
    return checks


# -- lower bound -----------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    """Consequences of the identity under the steepness hypothesis.

    ``slope_bound`` is ``sup_t |grad eta|_inf`` and ``A`` is
    ``sup_t |grad psi|_L2 / sqrt(2 H)``.
    """

    slope_bound: float
    A: float
    T: float
    T_required: float
    hypothesis_met: bool
    lower_bound: float
    BT: float
    H: float
    residual: float

    @property
    def margin(self):
        return self.BT - self.H

    @property
    def observed(self):
        """``B(T) >= H`` up to the identity residual."""
        return self.BT >= self.H - abs(self.residual)

    @property
    def bound_holds(self):
        """``B(T)`` dominates the lower bound up to the identity residual."""
        return self.BT >= self.lower_bound - abs(self.residual)


def required_time(slope_bound, A, d, max_length, g):
    """Smallest horizon allowed by the hypothesis:
    ``4 / (2 - (5+2d) B) * (1 + (2d+3) max L A / sqrt(g))``, or ``inf`` when
    ``B >= 2/(5+2d)``."""
    denom = 2.0 - (5.0 + 2.0 * d) * slope_bound
    if denom <= 0.0:
        return float("inf")
    return 4.0 / denom * (1.0 + (2.0 * d + 3.0) * max_length / np.sqrt(g) * A)


def lower_bound(T, slope_bound, A, H, d, max_length, g):
    """``(T/2 - (5+2d)/4 B T - (d + 3/2) max L (2/sqrt g) A) H``."""
    return (0.5 * T - (5.0 + 2.0 * d) / 4.0 * slope_bound * T
            - (d + 1.5) * max_length * 2.0 / np.sqrt(g) * A) * H


def measured_bounds(traj: Trajectory):
    """``(sup |grad eta|_inf, sup |grad psi|_L2 / sqrt(2H))`` over a trajectory."""
    H = float(traj.H[0])
    B = float(np.max(traj.max_slope))
    A = float(np.max(traj.grad_psi_norm) / np.sqrt(2.0 * H)) if H > 0 else 0.0
    return B, A


def corollary_bound(report: IdentityReport, traj: Trajectory, grid: gr.Grid = None) -> BoundReport:
    """Check the steepness hypothesis with measured sup-norms and evaluate the
    lower bound for ``B(T)``."""
    grid = traj.grid if grid is None else grid
    d, g = grid.d, grid.g
    Lmax = max(grid.lengths)
    B, A = measured_bounds(traj)
    T_req = required_time(B, A, d, Lmax, g)
    met = bool(B < 2.0 / (5.0 + 2.0 * d) and report.T >= T_req)
    return BoundReport(slope_bound=B, A=A, T=report.T, T_required=T_req, hypothesis_met=met,
                       lower_bound=lower_bound(report.T, B, A, report.H, d, Lmax, g),
                       BT=report.BT, H=report.H, residual=report.residual)
