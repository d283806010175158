"""Classical vorticity solver, trajectory integration, inverse maps, catalog."""

import numpy as np
import pytest

from el_euler.diagnostics import random_field
from el_euler.el import jacobian_determinant
from el_euler.errors import SolverError
from el_euler.oracle import (
    VorticityState,
    back_to_labels_from_trajectories,
    classical_solve,
    classical_step,
    exact_solution,
    integrate_trajectories,
    velocity_from_vorticity,
    vorticity_from_velocity,
)
from el_euler.spectral import SpectralField, hs_norm, l2_norm, to_physical, to_spectral
from el_euler.transport import FieldSeries

from conftest import shear_velocity, taylor_green_velocity


class TestVorticityInversion:
    def test_taylor_green_vorticity(self, grid32):
        x = grid32.nodes()
        w = vorticity_from_velocity(taylor_green_velocity(grid32))
        exact = 2 * np.sin(x[0]) * np.sin(x[1])
        assert np.abs(to_physical(w)[0] - exact).max() < 1e-13

    def test_shear_vorticity(self, grid32):
        x = grid32.nodes()
        w = vorticity_from_velocity(shear_velocity(grid32))
        assert np.abs(to_physical(w)[0] + np.cos(x[1])).max() < 1e-13

    def test_round_trip(self, grid32):
        u = taylor_green_velocity(grid32)
        back = velocity_from_vorticity(vorticity_from_velocity(u))
        assert np.abs(back.coeffs - u.coeffs).max() < 1e-14


class TestClassicalSolver:
    def test_taylor_green_steady(self, grid32):
        u_series, w_series = classical_solve(taylor_green_velocity(grid32), 0.5, 1e-3, store_every=500)
        drift = l2_norm(w_series.sample(-1) - w_series.sample(0)) / l2_norm(w_series.sample(0))
        assert drift < 1e-7

    def test_shear_steady(self, grid32):
        u_series, w_series = classical_solve(shear_velocity(grid32), 0.5, 1e-3, store_every=500)
        drift = l2_norm(w_series.sample(-1) - w_series.sample(0)) / l2_norm(w_series.sample(0))
        assert drift < 1e-7

    def test_zero_state(self, grid16):
        state = VorticityState(SpectralField.zeros(grid16, 1), 0.0)
        stepped = classical_step(state, 1e-2)
        assert np.abs(stepped.omega.coeffs).max() == 0.0

    def test_mean_flow_carried(self, grid32):
        base = taylor_green_velocity(grid32)
        coeffs = base.coeffs.copy()
        coeffs[:, 0, 0] = [0.21, -0.13]
        u0 = SpectralField._wrap(grid32, coeffs)
        u_series, _ = classical_solve(u0, 0.1, 1e-3, store_every=100)
        end = u_series.sample(-1)
        assert end.coeffs[0, 0, 0] == pytest.approx(0.21)
        assert end.coeffs[1, 0, 0] == pytest.approx(-0.13)

    def test_conservation_on_unsteady_flow(self, grid32):
        u0 = random_field(grid32, 19, divergence_free=True, cutoff=4, amplitude=0.4)
        u_series, w_series = classical_solve(u0, 0.5, 1e-3, store_every=500)
        e0, e1 = l2_norm(u_series.sample(0)), l2_norm(u_series.sample(-1))
        z0, z1 = l2_norm(w_series.sample(0)), l2_norm(w_series.sample(-1))
        assert abs(e1 - e0) / e0 < 1e-8
        assert abs(z1 * z1 - z0 * z0) / (z0 * z0) < 1e-8


class TestTrajectories:
    def test_zero_velocity(self, grid16):
        series = FieldSeries.constant(SpectralField.zeros(grid16, 2), [0.0, 1.0])
        ens = integrate_trajectories(series, 8, [1.0], dt=0.1)
        assert np.abs(ens.positions[0] - ens.labels).max() == 0.0
        assert np.abs(ens.jacobians[0] - np.eye(2)).max() == 0.0

    def test_shear_exact(self, grid32):
        series = FieldSeries.constant(shear_velocity(grid32), [0.0, 1.0])
        ens = integrate_trajectories(series, 16, [1.0], dt=2.5e-3)
        expected = ens.labels.copy()
        expected[:, 0] += np.sin(ens.labels[:, 1])
        assert np.abs(ens.positions[0] - expected).max() < 1e-11
        jac = np.zeros((len(ens.labels), 2, 2))
        jac[:, 0, 0] = jac[:, 1, 1] = 1.0
        jac[:, 0, 1] = np.cos(ens.labels[:, 1])
        assert np.abs(ens.jacobians[0] - jac).max() < 1e-11
        assert ens.det_residual() < 1e-11

    def test_translation(self, grid16):
        x = grid16.nodes()
        u = to_spectral(grid16, np.stack([np.full(grid16.shape, 0.3), np.full(grid16.shape, -0.2)]))
        series = FieldSeries.constant(u, [0.0, 1.0])
        ens = integrate_trajectories(series, 8, [1.0], dt=0.05)
        assert np.abs(ens.positions[0] - (ens.labels + np.array([0.3, -0.2]))).max() < 1e-12


class TestBackToLabels:
    def test_shear_inverse(self, grid32):
        series = FieldSeries.constant(shear_velocity(grid32), [0.0, 0.5])
        ens = integrate_trajectories(series, 32, [0.5], dt=2.5e-3)
        result = back_to_labels_from_trajectories(ens)
        x = grid32.nodes()
        exact = np.stack([-0.5 * np.sin(x[1]), np.zeros(grid32.shape)])
        assert result.newton_failures == 0
        assert result.composition_residual < 1e-8
        assert np.abs(to_physical(result.eta) - exact).max() < 1e-9

    def test_zero_velocity(self, grid16):
        series = FieldSeries.constant(SpectralField.zeros(grid16, 2), [0.0, 0.2])
        ens = integrate_trajectories(series, 16, [0.2], dt=0.05)
        result = back_to_labels_from_trajectories(ens)
        assert np.abs(result.eta.coeffs).max() < 1e-12

    def test_translation_mod_2pi(self, grid16):
        x = grid16.nodes()
        u = to_spectral(grid16, np.stack([np.full(grid16.shape, 0.4), np.full(grid16.shape, 0.0)]))
        series = FieldSeries.constant(u, [0.0, 1.0])
        ens = integrate_trajectories(series, 16, [1.0], dt=0.05)
        result = back_to_labels_from_trajectories(ens)
        assert np.abs(to_physical(result.eta) - np.array([-0.4, 0.0])[:, None, None]).max() < 1e-9


class TestExactSolutionCatalog:
    def test_zero(self, grid16):
        st = exact_solution("zero", 1.0, grid16)
        assert np.abs(st.u.coeffs).max() == 0.0
        assert np.abs(st.eta.coeffs).max() == 0.0

    def test_shear(self, grid32):
        st = exact_solution("shear", 0.5, grid32)
        x = grid32.nodes()
        assert np.abs(to_physical(st.u)[0] - np.sin(x[1])).max() < 1e-13
        assert np.abs(to_physical(st.eta)[0] + 0.5 * np.sin(x[1])).max() < 1e-13
        assert np.abs(st.v.coeffs - st.u.coeffs).max() < 1e-14

    def test_taylor_green_numeric_labels(self, grid32):
        st = exact_solution("taylor_green", 0.2, grid32)
        assert np.abs(jacobian_determinant(st.eta) - 1.0).max() < 1e-6
        assert hs_norm(st.eta, 0.0) > 0.01  # genuinely displaced

    def test_translation(self, grid16):
        st = exact_solution("translation:0.3,-0.2", 0.5, grid16)
        vals = to_physical(st.eta)
        assert np.abs(vals - np.array([-0.15, 0.1])[:, None, None]).max() < 1e-13

    def test_unknown_key(self, grid16):
        with pytest.raises(SolverError):
            exact_solution("vortex_street", 0.1, grid16)
