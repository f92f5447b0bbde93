import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavetank import evolution as ev
from wavetank.errors import ConfigError, InstabilityError
from wavetank.evolution import SurfaceState
from wavetank.grid import TankConfig, build_grid, even_extend, integrate_Q

G_EARTH = 9.81


def grid_1d(**kw):
    base = dict(L1=1.0, h=1.0, n1=32, nz=32)
    base.update(kw)
    return build_grid(TankConfig(**base))


def standing(grid, a, mode=1):
    x = grid.x[0]
    return SurfaceState(a * grid.h * np.cos(mode * np.pi * x / grid.lengths[0]), np.zeros(grid.shape))


def period(grid, mode=1):
    k = mode * np.pi / grid.lengths[0]
    return 2 * np.pi / ev.linear_frequency(k, grid.h, grid.g)


class TestRhs:
    def test_rest_is_fixed_point(self):
        grid = grid_1d()
        d_eta, d_psi = ev.rhs(SurfaceState.rest(grid), grid)
        assert not np.any(d_eta) and not np.any(d_psi)

    def test_elevation_only(self):
        grid = grid_1d()
        a = 0.02
        state = standing(grid, a)
        d_eta, d_psi = ev.rhs(state, grid)
        assert np.abs(d_eta).max() <= 1e-14
        np.testing.assert_allclose(d_psi, -G_EARTH * state.eta, atol=1e-14)

    @pytest.mark.parametrize("dealias", [True, False])
    def test_flat_potential_oracle(self, dealias):
        L, h, a = 1.0, 0.6, 0.05
        grid = grid_1d(L1=L, h=h, nz=40)
        k = 2 * np.pi / L
        x = grid.x[0]
        state = SurfaceState(np.zeros(grid.shape), a * np.cos(k * x))
        d_eta, d_psi = ev.rhs(state, grid, dealias=dealias)
        th = np.tanh(k * h)
        np.testing.assert_allclose(d_eta, a * k * th * np.cos(k * x), atol=1e-11)
        expect = -0.5 * a**2 * k**2 * np.sin(k * x) ** 2 + 0.5 * a**2 * k**2 * th**2 * np.cos(k * x) ** 2
        np.testing.assert_allclose(d_psi, expect, atol=1e-11)

    @settings(max_examples=8, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_outputs_are_even(self, seed):
        grid = grid_1d(n1=16, nz=16)
        rng = np.random.default_rng(seed)
        x = grid.x[0]
        eta = 0.01 * sum(rng.standard_normal() * np.cos(k * np.pi * x) for k in range(1, 4))
        psi = 0.01 * sum(rng.standard_normal() * np.cos(k * np.pi * x) for k in range(4))
        for field in ev.rhs(SurfaceState(eta, psi), grid):
            ext = even_extend(field, grid)
            idx = np.arange(len(ext))
            np.testing.assert_array_equal(ext, ext[(-idx) % len(ext)])


class TestEnergy:
    def test_rest(self):
        grid = grid_1d()
        assert ev.energy(SurfaceState.rest(grid), grid) == 0.0

    def test_elevation_mode(self):
        L, a = 1.4, 0.03
        grid = grid_1d(L1=L)
        x = grid.x[0]
        state = SurfaceState(a * np.cos(np.pi * x / L), np.zeros(grid.shape))
        assert ev.energy(state, grid) == pytest.approx(G_EARTH * a**2 * L / 4, rel=1e-13)

    def test_potential_mode(self):
        L, h, a = 1.4, 0.9, 0.03
        grid = grid_1d(L1=L, h=h)
        k = 3 * np.pi / L
        x = grid.x[0]
        state = SurfaceState(np.zeros(grid.shape), a * np.cos(k * x))
        expect = 0.25 * a**2 * k * np.tanh(k * h) * L
        assert ev.energy(state, grid) == pytest.approx(expect, rel=1e-11)

    def test_nonnegative(self):
        grid = grid_1d(n1=16, nz=16)
        rng = np.random.default_rng(0)
        x = grid.x[0]
        for _ in range(5):
            eta = 0.02 * sum(rng.standard_normal() * np.cos(k * np.pi * x) for k in range(1, 4))
            psi = 0.1 * sum(rng.standard_normal() * np.cos(k * np.pi * x) for k in range(4))
            assert ev.energy(SurfaceState(eta, psi), grid) >= 0.0


class TestStep:
    def test_rest_stays_at_rest(self):
        grid = grid_1d()
        new = ev.step(SurfaceState.rest(grid), 0.01, grid)
        assert not np.any(new.eta) and not np.any(new.psi)
        assert new.t == pytest.approx(0.01)

    def test_energy_after_one_step(self):
        grid = grid_1d()
        state = standing(grid, 1e-3)
        dt = period(grid) / 200
        H0 = ev.energy(state, grid)
        H1 = ev.energy(ev.step(state, dt, grid), grid)
        assert abs(H1 - H0) <= 1e-10 * H0

    def test_linear_period(self):
        grid = grid_1d()
        a = 1e-4
        state = standing(grid, a)
        P = period(grid)
        traj = ev.integrate(state, P, grid, dt=P / 200)
        err = np.abs(traj.eta[-1] - state.eta).max()
        # O(a^2) nonlinear correction plus O(dt^4) phase error
        assert err <= 10 * a**2 + 1e-3 * a

    def test_mean_reprojected(self):
        grid = grid_1d()
        x = grid.x[0]
        state = SurfaceState(0.02 * np.cos(np.pi * x) + 0.01 * np.cos(2 * np.pi * x),
                             0.05 * np.cos(3 * np.pi * x))
        new = ev.step(state, 0.01, grid)
        assert abs(integrate_Q(new.eta, grid)) <= 1e-15

    def test_nan_aborts_with_index(self):
        grid = grid_1d(n1=16, nz=16)
        state = standing(grid, 0.01)
        with pytest.raises(InstabilityError) as err:
            ev.step(state, np.inf, grid, index=7)
        assert err.value.step_index == 7 and err.value.stage == "time-integration"

    def test_cfl_limit(self):
        grid = grid_1d(n1=32)
        kmax = 32 * np.pi
        expect = 2.0 / np.sqrt(G_EARTH * kmax * np.tanh(kmax))
        assert ev.cfl_limit(grid) == pytest.approx(expect)


class TestIntegrate:
    def test_zero_horizon(self):
        grid = grid_1d()
        traj = ev.integrate(standing(grid, 0.01), 0.0, grid)
        assert len(traj) == 1 and traj.T == 0.0

    def test_rest_diagnostics_vanish(self):
        grid = grid_1d(n1=16, nz=16)
        traj = ev.integrate(SurfaceState.rest(grid), 0.1, grid, dt=0.01)
        assert len(traj) == 11
        for name in ("H", "solid_boundary", "bottom_moment", "slope_flux", "max_slope",
                     "grad_psi_norm"):
            assert not np.any(getattr(traj, name)), name

    def test_uniform_increasing_times(self):
        grid = grid_1d(n1=16, nz=16)
        traj = ev.integrate(standing(grid, 0.01), 0.1, grid, dt=0.03)
        dts = np.diff(traj.t)
        assert np.all(dts > 0) and np.ptp(dts) <= 1e-15
        assert traj.t[-1] == pytest.approx(0.1)

    def test_rejects_zero_step(self):
        grid = grid_1d(n1=16, nz=16)
        with pytest.raises(ConfigError):
            ev.integrate(standing(grid, 0.01), 1.0, grid, dt=0.0)

    def test_five_period_energy_drift(self):
        grid = grid_1d(n1=64, nz=64)
        P = period(grid)
        traj = ev.integrate(standing(grid, 0.01), 5 * P, grid, dt=P / 200)
        drift = np.abs(traj.H - traj.H[0]).max() / traj.H[0]
        assert drift <= 1e-7

    def test_mean_and_symmetry_conserved(self):
        grid = grid_1d()
        x = grid.x[0]
        state = SurfaceState(0.02 * np.cos(np.pi * x) - 0.01 * np.cos(3 * np.pi * x),
                             0.03 * np.cos(2 * np.pi * x))
        traj = ev.integrate(state, 0.5, grid, dt=0.01)
        for eta in traj.eta:
            assert abs(integrate_Q(eta, grid)) <= 1e-10 * np.abs(eta).max()
        ext = even_extend(traj.psi, grid)
        n = ext.shape[-1]
        np.testing.assert_array_equal(ext, ext[:, (-np.arange(n)) % n])

    def test_reversible(self):
        grid = grid_1d(n1=16, nz=16)
        x = grid.x[0]
        state = SurfaceState(0.02 * np.cos(np.pi * x), 0.01 * np.cos(2 * np.pi * x))
        errs = []
        for dt in (0.02, 0.01):
            fwd = ev.integrate(state, 0.4, grid, dt=dt)
            back = ev.integrate(fwd.state(-1), 0.4, grid, dt=-dt)
            errs.append(np.abs(back.eta[-1] - state.eta).max())
        # fourth-order round trip error
        assert errs[1] <= errs[0] / 12 or errs[1] <= 1e-13

    def test_two_dimensional_mode(self):
        grid = build_grid(TankConfig(d=2, L1=1.0, L2=1.0, n1=8, n2=8, nz=16))
        X, Y = grid.mesh
        state = SurfaceState(0.005 * np.cos(np.pi * X) * np.cos(np.pi * Y), np.zeros(grid.shape))
        traj = ev.integrate(state, 0.2, grid, dt=0.005)
        assert np.abs(traj.H - traj.H[0]).max() <= 1e-8 * traj.H[0]
        assert abs(integrate_Q(traj.eta[-1], grid)) <= 1e-16


class TestGradientCheck:
    def test_zero_directions(self):
        grid = grid_1d(n1=16, nz=16)
        res = ev.hamiltonian_gradient_check(standing(grid, 0.01), np.zeros(grid.shape),
                                            np.zeros(grid.shape), 1e-3, grid)
        assert res.residual_psi == 0.0 and res.residual_eta == 0.0
        assert res.noise_scale == pytest.approx(ev.energy(standing(grid, 0.01), grid) / 1e-3)

    def test_rest_state(self):
        grid = grid_1d(n1=16, nz=16)
        x = grid.x[0]
        res = ev.hamiltonian_gradient_check(SurfaceState.rest(grid), np.cos(np.pi * x),
                                            np.cos(2 * np.pi * x), 1e-3, grid)
        assert res.residual_psi <= 1e-15
        # H(eps d_eta, 0) is exactly quadratic, so the central difference is exact
        assert res.residual_eta <= 1e-15

    def test_eta_residual_second_order(self):
        grid = grid_1d(n1=32, nz=32)
        x = grid.x[0]
        state = SurfaceState(0.05 * np.cos(np.pi * x) + 0.02 * np.cos(2 * np.pi * x),
                             0.3 * np.cos(np.pi * x) - 0.1 * np.cos(3 * np.pi * x))
        d_eta = np.cos(2 * np.pi * x) + 0.5 * np.cos(np.pi * x)
        d_psi = np.cos(np.pi * x)
        res = [ev.hamiltonian_gradient_check(state, d_eta, d_psi, eps, grid)
               for eps in (1e-2, 5e-3, 2.5e-3)]
        r = np.array([c.residual_eta for c in res])
        slope = np.polyfit(np.log([1e-2, 5e-3, 2.5e-3]), np.log(r), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.1)
        for c in res:
            assert c.residual_psi <= 1e-10 * abs(c.pairing_psi)
