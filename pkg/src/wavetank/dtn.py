"""
Harmonic extension of the surface potential and the Dirichlet-to-Neumann
operator.

The fluid domain ``-h <= y <= eta(x)`` is mapped to the strip
``-h <= z <= 0`` by ``y = rho(x, z) = (1 + z/h) eta(x) + z``.  In the
flattened variables Laplace's equation takes the divergence form

    div_x(J grad_x phi - R phi_z) + d_z(-R . grad_x phi + C phi_z) = 0

with ``J = d_z rho = 1 + eta/h``, ``R = grad_x rho = (1 + z/h) grad eta`` and
``C = (1 + |R|^2) / J``.  It is discretised with cosine collocation in x and
Chebyshev collocation in z, and solved by GMRES on the system
preconditioned by the flat-strip operator (``eta = 0``), which is diagonal
per cosine mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse.linalg as spla

from . import grid as gr
from .errors import AdmissibilityError, EllipticSolveError

ODD = gr.ODD


@dataclass(frozen=True)
class FlattenedPotential:
    """Velocity potential on the flattened grid.

    ``phi[j]`` is the potential on the level ``z = grid.z[j]``; level 0 is
    the free surface and level ``nz`` the bottom.
    """

    grid: gr.Grid
    eta: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    residual: float
    iterations: int

    @cached_property
    def J(self):
        return 1.0 + self.eta / self.grid.h

    @cached_property
    def grad_eta(self):
        return gr.gradient(self.eta, self.grid)

    @cached_property
    def stretch(self):
        """``1 + z/h`` shaped to broadcast against volume arrays."""
        s = 1.0 + self.grid.z / self.grid.h
        return s.reshape((-1,) + (1,) * self.grid.d)

    @property
    def rho(self):
        return self.stretch * self.eta + self.grid.z.reshape(self.stretch.shape)

    @cached_property
    def grad_rho(self):
        return tuple(self.stretch * ge for ge in self.grad_eta)

    @cached_property
    def phi_z(self):
        return np.tensordot(self.grid.Dz, self.phi, axes=(1, 0))

    @cached_property
    def phi_x(self):
        """Horizontal derivatives in flattened coordinates."""
        return gr.gradient(self.phi, self.grid)

    @cached_property
    def velocity(self):
        """Physical ``(grad_x phi, d_y phi)`` sampled on the flattened grid."""
        w = self.phi_z / self.J
        u = tuple(px - gR * w for px, gR in zip(self.phi_x, self.grad_rho))
        return u, w

    def volume_integral(self, f):
        """``iint_Omega f dy dx`` for an even volume field given on the grid."""
        column = np.tensordot(self.grid.wz, f, axes=(0, 0))
        return float(gr.integrate_Q(column * self.J, self.grid))

    def dirichlet_energy(self):
        """``iint_Omega |grad_{x,y} phi|^2``."""
        u, w = self.velocity
        return self.volume_integral(sum(c**2 for c in u) + w**2)

    def bottom_speed2(self):
        """``|grad_x phi|^2`` on the bottom ``y = -h`` (a surface field)."""
        u, _ = self.velocity
        return sum(c[-1] ** 2 for c in u)

    def solid_boundary_term(self):
        """``1/2 int_R |grad phi|^2 (x, y) . n dS`` over the walls and bottom.

        Only the faces ``x_a = L_a`` (weight ``L_a``) and the bottom (weight
        ``h``) contribute.  On the wall ``x_a = L_a`` the normal velocity is
        zero, so the integrand is the tangential speed squared; the vertical
        integral runs up to the contact line via the flattened column.
        """
        grid = self.grid
        u, w = self.velocity
        total = 0.5 * grid.h * float(gr.integrate_Q(self.bottom_speed2(), grid))
        for a, L in enumerate(grid.lengths):
            speed2 = w**2 + sum(c**2 for b, c in enumerate(u) if b != a)
            column = np.tensordot(grid.wz, speed2, axes=(0, 0))
            trace = gr.wall_trace(column * self.J, grid, a)
            total += 0.5 * L * float(gr.integrate_wall(trace, grid, a))
        return total

    def bottom_moment(self):
        """``int_Q eta |grad_x phi|^2(x, -h) dx``."""
        return float(gr.integrate_Q(self.eta * self.bottom_speed2(), self.grid))

    def slope_flux(self):
        """``iint_Omega (d_y phi)(grad eta . grad_x phi) dy dx``."""
        u, w = self.velocity
        return self.volume_integral(w * sum(ge * c for ge, c in zip(self.grad_eta, u)))


@dataclass(frozen=True)
class SurfaceFields:
    """Traces at the free surface: vertical velocity ``B``, horizontal
    velocity ``V`` (one component per axis) and ``G = G(eta) psi``."""

    B: np.ndarray
    V: tuple
    G: np.ndarray


class _FlatSolver:
    """Exact inverse of the flat-strip operator on the unknown levels 1..nz.

    Rows 1..nz-1 carry ``lap_x + d_zz``, row nz the bottom condition
    ``d_z = 0``; the surface level is Dirichlet and not an unknown.
    """

    def __init__(self, grid):
        self.grid = grid
        lam, V, Vinv = grid.vertical_eigensystem
        self.V, self.Vinv = V, Vinv
        N = grid.nz
        self.bottom_row = grid.Dz[N, 1:N]
        self.bottom_diag = grid.Dz[N, N]
        self.bottom_coupling = grid.Dzz[1:N, N] / grid.Dz[N, N]
        k2 = grid.k2_effective.reshape(-1)
        self.denom = lam[:, None] - k2[None, :]

    def solve(self, r):
        grid = self.grid
        N = grid.nz
        rhat = gr.cos_coefficients(r, grid).reshape(N, -1)
        r_int, r_bot = rhat[:-1], rhat[-1]
        inner = r_int - np.outer(self.bottom_coupling, r_bot)
        sol_int = self.V @ ((self.Vinv @ inner) / self.denom)
        sol_bot = (r_bot - self.bottom_row @ sol_int) / self.bottom_diag
        sol = np.vstack([sol_int, sol_bot[None, :]]).reshape(r.shape)
        return gr.from_cos_coefficients(sol, grid)


def _flat_solver(grid):
    solver = grid.__dict__.get("_flat_solver")
    if solver is None:
        solver = _FlatSolver(grid)
        grid.__dict__["_flat_solver"] = solver
    return solver


def _check_admissible(eta, grid):
    J = 1.0 + np.asarray(eta) / grid.h
    if not np.all(np.isfinite(J)):
        raise AdmissibilityError("surface elevation contains NaN or Inf")
    if J.min() <= 0.0:
        i = int(np.argmin(J))
        raise AdmissibilityError(
            f"flattening map degenerates: d_z rho = {J.min():.3e} <= 0 at node {i} "
            f"(eta = {np.asarray(eta).flat[i]:.3e}, h = {grid.h})")
    return J


def harmonic_extension(eta, psi, grid: gr.Grid, tol=None, guess=None) -> FlattenedPotential:
    """Solve for the potential with surface value ``psi`` under ``eta``.

    ``tol`` is the relative residual of the preconditioned system
    (defaults to ``grid.cfg.tol_elliptic``).  ``guess`` may be a previous
    ``phi`` on the same grid to warm-start the iteration.
    """
    eta = np.asarray(eta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    J = _check_admissible(eta, grid)
    tol = grid.cfg.tol_elliptic if tol is None else tol
    d, N = grid.d, grid.nz
    vol_shape = (N + 1,) + grid.shape

    grad_eta = gr.gradient(eta, grid)
    s = (1.0 + grid.z / grid.h).reshape((-1,) + (1,) * d)
    R = [s * ge for ge in grad_eta]
    C_minus_1 = (1.0 + sum(r**2 for r in R)) / J - 1.0
    J_minus_1 = J - 1.0
    Dz = grid.Dz
    flat = _flat_solver(grid)

    def dz(v):
        return (Dz @ v.reshape(N + 1, -1)).reshape(v.shape)

    def perturbation(phi):
        # (L - L_flat) phi, evaluated on rows 1..nz-1; bottom row is exact
        phi_z = dz(phi)
        phi_x = [gr.diff(phi, grid, a) for a in range(d)]
        out = dz(C_minus_1 * phi_z - sum(r * p for r, p in zip(R, phi_x)))
        for a in range(d):
            out += gr.diff(J_minus_1 * phi_x[a] - R[a] * phi_z, grid, a, ODD)
        out = out[1:]
        out[-1] = 0.0
        return out

    lift = np.broadcast_to(psi, vol_shape)
    forcing = np.broadcast_to(gr.laplacian(psi, grid), (N,) + grid.shape).copy()
    forcing[-1] = 0.0
    forcing += perturbation(lift)
    b = -flat.solve(forcing).reshape(-1)

    unknown_shape = (N,) + grid.shape

    def pad(x):
        full = np.zeros(vol_shape)
        full[1:] = x.reshape(unknown_shape)
        return full

    def matvec(x):
        return x + flat.solve(perturbation(pad(x))).reshape(-1)

    bnorm = np.linalg.norm(b)
    iterations = 0
    if bnorm == 0.0:
        x = np.zeros_like(b)
        residual = 0.0
    elif not np.any(eta):
        x = b
        residual = 0.0
    else:
        x0, rtol = None, tol
        if guess is not None:
            x0 = (np.asarray(guess) - lift)[1:].reshape(-1)
            # a warm start leaves the error rough in z, where the surface
            # derivative amplifies it; ask for two more digits
            rtol = max(1e-2 * tol, 1e-15)
        count = [0]

        def callback(_):
            count[0] += 1

        A = spla.LinearOperator((b.size, b.size), matvec=matvec, dtype=float)
        x, info = spla.gmres(A, b, x0=x0, rtol=rtol, atol=0.0, restart=60, maxiter=20,
                             callback=callback, callback_type="pr_norm")
        iterations = count[0]
        residual = float(np.linalg.norm(b - matvec(x)) / bnorm)
        if not np.all(np.isfinite(x)) or residual > 10.0 * tol:
            raise EllipticSolveError(
                f"harmonic extension stalled at relative residual {residual:.3e} "
                f"(tolerance {tol:.1e}, gmres info {info})", residual)
    phi = lift + pad(x)
    return FlattenedPotential(grid, eta, psi, phi, residual, iterations)


def _dtn_from_potential(pot: FlattenedPotential):
    grid = pot.grid
    grad_psi = gr.gradient(pot.psi, grid)
    slope2 = sum(ge**2 for ge in pot.grad_eta)
    return (1.0 + slope2) / pot.J * pot.phi_z[0] - sum(
        ge * gp for ge, gp in zip(pot.grad_eta, grad_psi))


def dtn_apply(eta, psi, grid: gr.Grid, tol=None) -> np.ndarray:
    """``G(eta) psi = (d_y phi - grad eta . grad_x phi)`` at ``y = eta``."""
    return _dtn_from_potential(harmonic_extension(eta, psi, grid, tol=tol))


def fields_from_potential(pot: FlattenedPotential) -> SurfaceFields:
    grid = pot.grid
    G = _dtn_from_potential(pot)
    grad_psi = gr.gradient(pot.psi, grid)
    slope2 = sum(ge**2 for ge in pot.grad_eta)
    B = (G + sum(ge * gp for ge, gp in zip(pot.grad_eta, grad_psi))) / (1.0 + slope2)
    V = tuple(gp - B * ge for gp, ge in zip(grad_psi, pot.grad_eta))
    return SurfaceFields(B=B, V=V, G=G)


def surface_fields(eta, psi, grid: gr.Grid, tol=None) -> SurfaceFields:
    """Surface traces ``B``, ``V`` and ``G(eta) psi``."""
    return fields_from_potential(harmonic_extension(eta, psi, grid, tol=tol))


def shape_derivative(eta, psi, d_eta, grid: gr.Grid, tol=None) -> np.ndarray:
    """Derivative of ``G(eta) psi`` in the direction ``d_eta``:
    ``-G(eta)(B d_eta) - div(V d_eta)``."""
    f = surface_fields(eta, psi, grid, tol=tol)
    d_eta = np.asarray(d_eta, dtype=float)
    out = -dtn_apply(eta, f.B * d_eta, grid, tol=tol)
    for a in range(grid.d):
        out -= gr.diff(f.V[a] * d_eta, grid, a, ODD)
    return out
