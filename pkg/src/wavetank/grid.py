"""
Collocation grids for a rectangular tank.

Horizontal fields live on the uniform nodes ``x_j = j L / n`` (j = 0..n),
both walls included.  Every surface field is the restriction of a function
that is even and 2L-periodic in each horizontal direction, so it expands in
``cos(pi k x / L)``; its horizontal derivative expands in sines.  Both
expansions are computed with real-to-real DCT-I / DST-I transforms, which
are the length-2n FFTs of the even/odd extensions.

The vertical coordinate of the flattened fluid strip ``z in [-h, 0]`` uses
Chebyshev-Gauss-Lobatto nodes ordered from the surface (index 0) to the
bottom (index nz).

Arrays
------
A surface field has shape ``grid.shape`` (``(n1+1,)`` or ``(n1+1, n2+1)``).
A volume field has shape ``(nz+1,) + grid.shape``.  All horizontal
operators act on the trailing ``d`` axes, so they accept both.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError

EVEN = "even"
ODD = "odd"


@dataclass(frozen=True)
class TankConfig:
    """Physical tank and discretization parameters.

    Lengths in metres, ``g`` in m/s^2, ``dt`` in seconds.  ``n1``/``n2`` are
    the number of cells along each horizontal axis (``n + 1`` nodes, cosine
    modes ``0..n``); ``nz`` is the Chebyshev degree in the vertical.
    """

    L1: float = 1.0
    L2: float = 1.0
    h: float = 1.0
    g: float = 9.81
    d: int = 1
    n1: int = 64
    n2: int = 16
    nz: int = 64
    dt: float = 1e-2
    dealias: bool = True
    c_cfl: float = 2.0
    tol_elliptic: float = 1e-12

    def __post_init__(self):
        for name in ("L1", "L2", "h", "g", "dt", "c_cfl", "tol_elliptic"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if self.d not in (1, 2):
            raise ConfigError(f"d must be 1 or 2, got {self.d!r}")
        counts = [("n1", self.n1)] + ([("n2", self.n2)] if self.d == 2 else [])
        for name, n in counts:
            if int(n) != n or n < 8 or (int(n) & (int(n) - 1)) != 0:
                raise ConfigError(f"{name} must be a power of two >= 8, got {n!r}")
        if int(self.nz) != self.nz or self.nz < 8:
            raise ConfigError(f"nz must be an integer >= 8, got {self.nz!r}")


def chebyshev(N):
    """Chebyshev-Gauss-Lobatto nodes on [-1, 1] (descending) and the
    first-derivative collocation matrix."""
    j = np.arange(N + 1)
    x = np.cos(np.pi * j / N)
    c = np.hstack([2.0, np.ones(N - 1), 2.0]) * (-1.0) ** j
    row, col = np.meshgrid(j, j, indexing="ij")
    # trigonometric form of x_i - x_j avoids cancellation near the ends
    dx = 2.0 * np.sin(np.pi * (row + col) / (2 * N)) * np.sin(np.pi * (col - row) / (2 * N))
    D = np.outer(c, 1.0 / c) / (dx + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def clenshaw_curtis(N):
    """Clenshaw-Curtis weights for the nodes returned by :func:`chebyshev`."""
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    v = np.ones(N - 1)
    inner = theta[1:-1]
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k**2 - 1)
        v -= np.cos(N * inner) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k**2 - 1)
    w[1:-1] = 2.0 * v / N
    return w


class Grid:
    """Nodes, wavenumbers, quadrature weights and vertical operators.

    Immutable after construction; the lazily built preconditioner data is
    deterministic so concurrent first access is harmless.
    """

    def __init__(self, cfg: TankConfig):
        self.cfg = cfg
        self.d = cfg.d
        self.h = cfg.h
        self.g = cfg.g
        if cfg.d == 1:
            self.lengths = (float(cfg.L1),)
            self.n = (int(cfg.n1),)
        else:
            self.lengths = (float(cfg.L1), float(cfg.L2))
            self.n = (int(cfg.n1), int(cfg.n2))
        self.shape = tuple(n + 1 for n in self.n)
        self.x = tuple(np.linspace(0.0, L, n + 1) for L, n in zip(self.lengths, self.n))
        self.k = tuple(np.pi * np.arange(n + 1) / L for L, n in zip(self.lengths, self.n))
        self.mesh = tuple(np.meshgrid(*self.x, indexing="ij"))

        xc, D = chebyshev(cfg.nz)
        self.nz = int(cfg.nz)
        self.z = 0.5 * cfg.h * (xc - 1.0)
        self.Dz = D * (2.0 / cfg.h)
        self.Dzz = self.Dz @ self.Dz
        self.wz = clenshaw_curtis(cfg.nz) * (0.5 * cfg.h)

        trap = []
        for L, n in zip(self.lengths, self.n):
            w = np.full(n + 1, L / n)
            w[0] = w[-1] = 0.5 * L / n
            trap.append(w)
        self._trap = trap
        self.weights = _outer(trap)
        self._moment = [_outer(trap[:a] + [_moment_weights(L, n)] + trap[a + 1:])
                        for a, (L, n) in enumerate(zip(self.lengths, self.n))]

    @property
    def area(self):
        return float(np.prod(self.lengths))

    def axis(self, a):
        """Array axis index of horizontal direction ``a`` (counted from the end)."""
        return a - self.d

    @cached_property
    def dealias_mask(self):
        """Boolean coefficient mask keeping modes ``k <= 2n/3`` on every axis."""
        masks = [np.arange(n + 1) <= (2 * n) // 3 for n in self.n]
        return _outer(masks).astype(bool)

    @cached_property
    def k2_effective(self):
        """|k|^2 of the discrete operator ``sum_a diff(diff(., a), a)``.

        The Nyquist cosine mode has no sine partner on the nodes, so its
        discrete first derivative (and hence its k^2) is zero.
        """
        parts = []
        for kk in self.k:
            kk = kk.copy()
            kk[-1] = 0.0
            parts.append(kk**2)
        if self.d == 1:
            return parts[0]
        return parts[0][:, None] + parts[1][None, :]

    @cached_property
    def vertical_eigensystem(self):
        """Diagonalisation of the flat-strip vertical operator.

        With the bottom Neumann row eliminated, ``d2/dz2`` on the unknowns at
        nodes ``1..nz-1`` (Dirichlet at the surface) is ``V diag(lam) V^-1``.
        """
        N = self.nz
        Dz, Dzz = self.Dz, self.Dzz
        A = Dzz[1:N, 1:N] - np.outer(Dzz[1:N, N], Dz[N, 1:N]) / Dz[N, N]
        lam, V = np.linalg.eig(A)
        lam, V = lam.real.copy(), np.ascontiguousarray(V.real)
        return lam, V, np.linalg.inv(V)


def _outer(vectors):
    out = vectors[0]
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return out


def _moment_weights(L, n):
    """Weights ``w`` with ``sum_j w_j u_j = int_0^L x u(x) dx`` for odd fields.

    Exact for sine series ``u = sum_{k=1}^{n-1} b_k sin(pi k x / L)``, using
    ``int_0^L x sin(pi k x / L) dx = L^2 (-1)^(k+1) / (pi k)``.
    """
    k = np.arange(1, n)
    mu = L**2 * (-1.0) ** (k + 1) / (np.pi * k)
    w = np.zeros(n + 1)
    w[1:n] = sfft.dst(mu, type=1) / n
    return w


def build_grid(cfg: TankConfig) -> Grid:
    """Build the collocation grid for ``cfg``."""
    if not isinstance(cfg, TankConfig):
        raise ConfigError("build_grid expects a TankConfig")
    return Grid(cfg)


# -- one-dimensional transforms along an arbitrary axis -------------------

def _along(func, v, axis):
    v = np.moveaxis(np.asarray(v, dtype=float), axis, -1)
    return np.moveaxis(func(v), -1, axis)


def _cos_coeffs_last(v):
    n = v.shape[-1] - 1
    a = sfft.dct(v, type=1, axis=-1) / n
    a[..., 0] *= 0.5
    a[..., n] *= 0.5
    return a


def _cos_synth_last(a):
    n = a.shape[-1] - 1
    c = a.copy()
    c[..., 0] *= 2.0
    c[..., n] *= 2.0
    return sfft.dct(c, type=1, axis=-1) * 0.5


def _sin_coeffs_last(u):
    n = u.shape[-1] - 1
    b = np.zeros_like(u)
    b[..., 1:n] = sfft.dst(u[..., 1:n], type=1, axis=-1) / n
    return b


def _sin_synth_last(b):
    n = b.shape[-1] - 1
    u = np.zeros_like(b)
    u[..., 1:n] = sfft.dst(b[..., 1:n], type=1, axis=-1) * 0.5
    return u


def _apply_matrix(M, v, ax):
    v = np.asarray(v, dtype=float)
    if ax == -1:
        return v @ M.T
    if ax == -2:
        return np.matmul(M, v)
    return np.moveaxis(np.moveaxis(v, ax, -1) @ M.T, -1, ax)


def _transform_matrix(func, n):
    return np.ascontiguousarray(func(np.eye(n + 1)).T)


_DENSE_LIMIT = 256


def _axis_matrix(grid, a, name, func):
    cache = grid.__dict__.setdefault("_transform_matrices", {})
    M = cache.get((a, name))
    if M is None:
        M = cache[(a, name)] = _transform_matrix(func, grid.n[a])
    return M


def _transform_all(v, grid, name, func):
    out = np.asarray(v, dtype=float)
    for a in range(grid.d):
        if grid.n[a] > _DENSE_LIMIT:
            out = _along(func, out, grid.axis(a))
        else:
            out = _apply_matrix(_axis_matrix(grid, a, name, func), out, grid.axis(a))
    return out


def cos_coefficients(v, grid: Grid):
    """Cosine coefficients ``a`` with ``v = sum a_k cos(k . x)`` on every axis."""
    return _transform_all(v, grid, "cos", _cos_coeffs_last)


def from_cos_coefficients(coef, grid: Grid):
    return _transform_all(coef, grid, "icos", _cos_synth_last)


def even_extend(v, grid: Grid):
    """Values of the even 2L-periodic extension on one full period.

    The result has ``2 n`` nodes per axis at ``x_j = j L / n``,
    ``j = 0..2n-1``; the point ``-x`` is found at index ``2n - j``.
    """
    out = np.asarray(v, dtype=float)
    for a, n in enumerate(grid.n):
        ax = grid.axis(a)
        mirrored = np.flip(np.take(out, np.arange(1, n), axis=ax), axis=ax)
        out = np.concatenate([out, mirrored], axis=ax)
    return out


def restrict(v_ext, grid: Grid):
    """Inverse of :func:`even_extend`: keep the nodes lying in Q."""
    out = np.asarray(v_ext)
    for a, n in enumerate(grid.n):
        out = np.take(out, np.arange(n + 1), axis=grid.axis(a))
    return out


def diff(v, grid: Grid, axis: int = 0, parity: str = EVEN):
    """Spectral derivative along horizontal direction ``axis``.

    ``parity`` is the symmetry of ``v`` about the walls along that axis.  An
    even field differentiates to an odd one (which vanishes on both walls)
    and vice versa.
    """
    k = grid.k[axis]
    if parity == EVEN:
        def op(u):
            return _sin_synth_last(-k * _cos_coeffs_last(u))
    elif parity == ODD:
        def op(u):
            return _cos_synth_last(k * _sin_coeffs_last(u))
    else:
        raise ValueError(f"unknown parity {parity!r}")
    n = grid.n[axis]
    if n > _DENSE_LIMIT:
        return _along(op, v, grid.axis(axis))
    # small grids: the same transform pair folded into one matrix, which
    # avoids per-call FFT overhead in the elliptic solver's inner loop
    cache = grid.__dict__.setdefault("_diff_matrices", {})
    M = cache.get((axis, parity))
    if M is None:
        M = cache[(axis, parity)] = _transform_matrix(op, n)
    return _apply_matrix(M, v, grid.axis(axis))


def gradient(v, grid: Grid):
    """Horizontal gradient of an even field, one component per axis."""
    return tuple(diff(v, grid, a) for a in range(grid.d))


def laplacian(v, grid: Grid):
    """Horizontal Laplacian of an even field (as ``div grad``)."""
    return sum(diff(diff(v, grid, a), grid, a, ODD) for a in range(grid.d))


def filter_modes(v, grid: Grid, parity=None):
    """2/3-rule truncation.  ``parity`` gives the symmetry per axis."""
    parity = parity or (EVEN,) * grid.d
    out = np.asarray(v, dtype=float)
    for a, n in enumerate(grid.n):
        keep = np.arange(n + 1) <= (2 * n) // 3
        if parity[a] == EVEN:
            def op(u, keep=keep):
                return _cos_synth_last(_cos_coeffs_last(u) * keep)
        else:
            def op(u, keep=keep):
                return _sin_synth_last(_sin_coeffs_last(u) * keep)
        out = _along(op, out, grid.axis(a))
    return out


def integrate_Q(v, grid: Grid):
    """Integral over Q of an even field (trapezoid rule on the even extension,
    exact for every cosine mode below 2n).  Volume arrays integrate over the
    trailing horizontal axes only."""
    v = np.asarray(v, dtype=float)
    axes = tuple(range(v.ndim - grid.d, v.ndim))
    return np.sum(v * grid.weights, axis=axes)


def moment(v, grid: Grid, axis: int):
    """``int_Q x_axis v dx`` for ``v`` odd along ``axis`` and even otherwise."""
    v = np.asarray(v, dtype=float)
    axes = tuple(range(v.ndim - grid.d, v.ndim))
    return np.sum(v * grid._moment[axis], axis=axes)


def integrate_wall(v, grid: Grid, axis: int):
    """Integral along the remaining coordinate of a wall trace (d = 2) or the
    trace itself (d = 1).  ``v`` is a field with the wall axis removed."""
    if grid.d == 1:
        return np.asarray(v, dtype=float)
    other = 1 - axis
    return np.sum(np.asarray(v) * grid._trap[other], axis=-1)


def wall_trace(v, grid: Grid, axis: int, end: int = -1):
    """Values on the wall ``x_axis = L_axis`` (``end=-1``) or ``x_axis = 0``."""
    return np.take(np.asarray(v), end, axis=grid.axis(axis))


def evaluate(v, grid: Grid, points):
    """Spectral interpolation of an even field at arbitrary points.

    ``points`` is a sequence of ``d`` coordinate arrays of equal shape.
    """
    coef = cos_coefficients(v, grid)
    basis = [np.cos(np.multiply.outer(np.asarray(p, dtype=float), k))
             for p, k in zip(points, grid.k)]
    if grid.d == 1:
        return basis[0] @ coef
    return np.einsum("...i,...j,ij->...", basis[0], basis[1], coef)


def evaluate_odd(u, grid: Grid, points, axis: int):
    """Spectral interpolation of a field odd along ``axis``, even otherwise."""
    coef = np.asarray(u, dtype=float)
    for a in range(grid.d):
        fn = _sin_coeffs_last if a == axis else _cos_coeffs_last
        coef = _along(fn, coef, grid.axis(a))
    basis = []
    for a, (p, k) in enumerate(zip(points, grid.k)):
        arg = np.multiply.outer(np.asarray(p, dtype=float), k)
        basis.append(np.sin(arg) if a == axis else np.cos(arg))
    if grid.d == 1:
        return basis[0] @ coef
    return np.einsum("...i,...j,ij->...", basis[0], basis[1], coef)


def coefficient_inner(u, v, grid: Grid):
    """Discrete Parseval pairing of two even fields from their cosine
    coefficients; equals ``integrate_Q(u * v)`` for band-limited fields."""
    cu, cv = cos_coefficients(u, grid), cos_coefficients(v, grid)
    ws = []
    for L, n in zip(grid.lengths, grid.n):
        w = np.full(n + 1, 0.5 * L)
        w[0] = w[-1] = L
        ws.append(w)
    return float(np.sum(cu * cv * _outer(ws)))
