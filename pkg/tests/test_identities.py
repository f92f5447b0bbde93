import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavetank import dtn, identities as idn
from wavetank.evolution import SurfaceState, integrate, linear_frequency
from wavetank.grid import TankConfig, build_grid, from_cos_coefficients, gradient, integrate_Q

G_EARTH = 9.81


def grid_1d(**kw):
    base = dict(L1=1.0, h=1.0, n1=32, nz=32)
    base.update(kw)
    return build_grid(TankConfig(**base))


def random_state(grid, rng, steepness=0.1, kmax=5, psi_scale=0.1):
    def field(k):
        coef = np.zeros(grid.shape)
        sl = tuple(slice(0, k + 1) for _ in grid.n)
        block = rng.standard_normal(coef[sl].shape)
        coef[sl] = block / (1.0 + np.indices(block.shape).sum(axis=0)) ** 2
        return from_cos_coefficients(coef, grid)

    eta = field(kmax)
    eta -= integrate_Q(eta, grid) / grid.area
    slope = np.sqrt(sum(g**2 for g in gradient(eta, grid))).max()
    return SurfaceState(eta * steepness / slope, psi_scale * field(kmax))


def short_run(grid, a=0.01, psi=0.0, periods=0.5, per_period=100):
    x = grid.x[0]
    state = SurfaceState(a * np.cos(np.pi * x) + 0.3 * a * np.cos(2 * np.pi * x),
                         psi * np.cos(np.pi * x))
    P = 2 * np.pi / float(linear_frequency(np.pi, grid.h, grid.g))
    return integrate(state, periods * P, grid, dt=P / per_period)


class TestTheta:
    def test_rest(self):
        grid = grid_1d()
        assert not np.any(idn.theta_field(SurfaceState.rest(grid), grid))

    def test_elevation_only(self):
        # psi = 0 gives d_t psi = -g eta, so Theta = g eta^2 / 2
        grid = grid_1d()
        a = 0.02
        state = SurfaceState(a * np.cos(np.pi * grid.x[0]), np.zeros(grid.shape))
        theta = idn.theta_field(state, grid)
        np.testing.assert_allclose(theta, 0.5 * G_EARTH * state.eta**2, atol=1e-14)
        assert idn.wall_integral(theta, grid) == pytest.approx(0.5 * G_EARTH * a**2, rel=1e-12)

    def test_wall_integral_two_dimensions(self):
        grid = build_grid(TankConfig(d=2, L1=1.0, L2=2.0, n1=8, n2=8, nz=8))
        # L1 * L2 + L2 * L1 for a unit field
        assert idn.wall_integral(np.ones(grid.shape), grid) == pytest.approx(4.0, rel=1e-14)


class TestBoundaryFunctional:
    def test_rest_is_zero(self):
        grid = grid_1d(n1=16, nz=16)
        traj = integrate(SurfaceState.rest(grid), 0.2, grid, dt=0.01)
        assert idn.boundary_functional(traj) == 0.0

    def test_constant_theta(self):
        # constant eta with d_psi chosen so that Theta = c exactly
        grid = grid_1d(n1=16, nz=16)
        traj = integrate(SurfaceState.rest(grid), 0.4, grid, dt=0.1)
        c, e = 0.7, 0.5
        traj.eta = np.full_like(traj.eta, e)
        traj.d_psi = np.full_like(traj.d_psi, -(c + 0.5 * G_EARTH * e**2) / e)
        assert idn.boundary_functional(traj) == pytest.approx(c * 1.0 * 0.4, rel=1e-13)

    def test_constant_theta_two_dimensions(self):
        grid = build_grid(TankConfig(d=2, L1=1.0, L2=1.0, n1=8, n2=8, nz=8))
        traj = integrate(SurfaceState.rest(grid), 0.4, grid, dt=0.1)
        c, e = 0.3, 0.2
        traj.eta = np.full_like(traj.eta, e)
        traj.d_psi = np.full_like(traj.d_psi, -(c + 0.5 * G_EARTH * e**2) / e)
        assert idn.boundary_functional(traj) == pytest.approx(2 * c * 0.4, rel=1e-13)

    def test_odd_step_count_rejected(self):
        grid = grid_1d(n1=16, nz=16)
        traj = integrate(SurfaceState.rest(grid), 0.3, grid, dt=0.1)
        with pytest.raises(ValueError, match="even"):
            idn.boundary_functional(traj)

    def test_simpson_exact_for_cubics(self):
        t = np.linspace(0, 2, 9)
        assert idn._time_integral(t**3, 0.25) == pytest.approx(4.0, rel=1e-14)


class TestPohozaev:
    def test_constant_potential(self):
        grid = grid_1d()
        state = random_state(grid, np.random.default_rng(0))
        rep = idn.pohozaev(state.eta, np.full(grid.shape, 2.0), grid)
        for v in (rep.lhs, rep.wall_bottom, rep.bulk, rep.surface):
            assert abs(v) <= 1e-10

    def test_flat_mode(self):
        grid = grid_1d(nz=40)
        x = grid.x[0]
        rep = idn.pohozaev(np.zeros(grid.shape), np.cos(2 * np.pi * x), grid)
        assert rep.relative_residual <= 1e-6
        assert rep.wall_bottom >= 0.0

    @settings(max_examples=5, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_generic_state(self, seed):
        grid = grid_1d(nz=48)
        state = random_state(grid, np.random.default_rng(seed), steepness=0.15)
        rep = idn.pohozaev(state.eta, state.psi, grid)
        assert rep.relative_residual <= 1e-5
        assert rep.wall_bottom >= 0.0

    def test_two_dimensions(self):
        grid = build_grid(TankConfig(d=2, L1=1.0, L2=1.0, n1=16, n2=16, nz=48))
        state = random_state(grid, np.random.default_rng(1), kmax=3)
        rep = idn.pohozaev(state.eta, state.psi, grid)
        assert rep.bulk < 0.0
        assert rep.relative_residual <= 1e-5


class TestMainIdentity:
    def test_rest(self):
        grid = grid_1d(n1=16, nz=16)
        rep = idn.main_identity(integrate(SurfaceState.rest(grid), 0.2, grid, dt=0.01))
        assert rep.BT == rep.rhs == 0.0 and rep.relative_residual == 0.0

    def test_short_run_closes(self):
        grid = grid_1d()
        rep = idn.main_identity(short_run(grid, psi=0.01))
        assert rep.relative_residual <= 1e-6
        assert rep.P >= 0.0
        assert rep.TH_half == pytest.approx(0.5 * rep.T * rep.H)

    def test_initial_slope_flux_vanishes_without_potential(self):
        grid = grid_1d()
        traj = short_run(grid, periods=0.1, per_period=100)
        assert traj.slope_flux[0] == 0.0 and traj.bottom_moment[0] == 0.0
        assert traj.slope_flux[-1] != 0.0

    def test_corner_formula(self):
        grid = grid_1d(n1=32, nz=32)
        traj = short_run(grid, psi=0.01)
        theta = -traj.eta * traj.d_psi - 0.5 * G_EARTH * traj.eta**2
        m, dm = traj.eta[:, -1], traj.G[:, -1]
        np.testing.assert_allclose(theta[:, -1], idn.corner_theta(m, dm, G_EARTH),
                                   rtol=1e-9, atol=1e-9 * np.abs(theta[:, -1]).max())


class TestElementary:
    @settings(max_examples=5, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_trace_identities(self, seed):
        grid = grid_1d()
        state = random_state(grid, np.random.default_rng(seed), steepness=0.2)
        for c in idn.trace_identities(state, grid):
            assert c.relative <= 1e-9, c.name

    def test_trace_names(self):
        grid = grid_1d(n1=16, nz=16)
        names = [c.name for c in idn.trace_identities(SurfaceState.rest(grid), grid)]
        assert names == ["trace-energy", "trace-rearrangement", "trace-velocity"]

    def test_bottom_exchange(self):
        grid = grid_1d(nz=48)
        state = random_state(grid, np.random.default_rng(3), steepness=0.2)
        pot = dtn.harmonic_extension(state.eta, state.psi, grid)
        c = idn.bottom_exchange(pot)
        assert c.relative <= 1e-6

    @pytest.mark.parametrize("d", [1, 2])
    def test_depth_identities_analytic(self, d):
        cfg = TankConfig(d=d, L1=1.0, L2=1.5, n1=16, n2=16, nz=8)
        grid = build_grid(cfg)
        state = random_state(grid, np.random.default_rng(4), steepness=0.2, kmax=4)

        def u(X, Y):
            return Y**2 + np.cos(X[0]) * Y

        def u_y(X, Y):
            return 2 * Y + np.cos(X[0])

        def f(X, Y):
            return tuple((1 + a) * X[a] ** 2 * Y for a in range(d))

        def div_f(X, Y):
            return sum(2 * (1 + a) * X[a] * Y for a in range(d))

        for c in idn.depth_identities(state.eta, grid, u, u_y, f, div_f):
            assert c.residual <= 1e-10 * max(c.scale, 1.0), c.name

    def test_elementary_checks_bundle(self):
        grid = grid_1d(n1=16, nz=24)
        state = random_state(grid, np.random.default_rng(5))
        tests = (lambda X, Y: Y, lambda X, Y: np.ones_like(Y),
                 lambda X, Y: (X[0] * Y,), lambda X, Y: Y)
        names = [c.name for c in idn.elementary_checks(state, grid, tests=tests)]
        assert names == ["trace-energy", "trace-rearrangement", "trace-velocity",
                         "bottom-exchange", "depth", "flux", "depth-flux"]


class TestBound:
    def test_required_time_example(self):
        assert idn.required_time(0.1, 1.0, 1, 1.0, G_EARTH) == pytest.approx(7.988852744723853,
                                                                              rel=1e-14)

    def test_required_time_infinite_beyond_steepness_limit(self):
        assert idn.required_time(2 / 7, 0.5, 1, 1.0, G_EARTH) == float("inf")
        assert idn.required_time(0.25, 0.5, 2, 1.0, G_EARTH) == float("inf")

    def test_lower_bound_linear_in_H(self):
        a = idn.lower_bound(10.0, 0.05, 1.0, 1.0, 1, 1.0, G_EARTH)
        b = idn.lower_bound(10.0, 0.05, 1.0, 3.0, 1, 1.0, G_EARTH)
        assert b == pytest.approx(3 * a)

    def test_lower_bound_positive_at_required_time(self):
        for d in (1, 2):
            T = idn.required_time(0.05, 2.0, d, 1.0, G_EARTH)
            assert idn.lower_bound(T, 0.05, 2.0, 1.0, d, 1.0, G_EARTH) >= 1.0 - 1e-12

    def test_rest_trivial(self):
        grid = grid_1d(n1=16, nz=16)
        traj = integrate(SurfaceState.rest(grid), 0.2, grid, dt=0.01)
        rep = idn.main_identity(traj)
        bound = idn.corollary_bound(rep, traj)
        assert bound.A == 0.0 and bound.slope_bound == 0.0
        assert bound.observed and bound.bound_holds
