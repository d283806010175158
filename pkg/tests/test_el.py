"""Weber reconstruction, gradient swap, composition, pressure, residuals."""

import numpy as np
import pytest

from el_euler.diagnostics import random_field
from el_euler.el import (
    ELState,
    classical_residual,
    compose,
    jacobian_determinant,
    material_derivative,
    recover_pressure,
    weber_gradient_swap,
    weber_projected_product,
    weber_residual,
    weber_velocity,
)
from el_euler.errors import VolumePreservationWarning
from el_euler.spectral import (
    SpectralField,
    derivative,
    hs_norm,
    l2_norm,
    leray_project,
    to_physical,
    to_spectral,
    truncate,
)
from el_euler.transport import FieldSeries, TransportProblem, solve_galerkin


def vec(grid, a, b):
    return to_spectral(grid, np.stack([a, b]))


def shear_state(grid, t):
    x = grid.nodes()
    zero = np.zeros(grid.shape)
    u = vec(grid, np.sin(x[1]), zero)
    eta = vec(grid, -t * np.sin(x[1]), zero)
    return ELState(u=u, eta=eta, v=u, time=t)


def taylor_green_state(grid):
    x = grid.nodes()
    u = vec(grid, np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1]))
    return ELState(u=u, eta=SpectralField.zeros(grid, 2), v=u, time=0.0)


class TestWeberVelocity:
    def test_zero_displacement_is_projection(self, grid32):
        v = random_field(grid32, 5)
        w = weber_velocity(SpectralField.zeros(grid32, 2), v)
        assert np.abs(w.coeffs - leray_project(v).coeffs).max() < 1e-14

    def test_shear_reconstruction(self, grid32):
        st = shear_state(grid32, 0.7)
        w = weber_velocity(st.eta, st.v)
        # the extra term is a gradient that the projection removes
        assert np.abs(w.coeffs - st.u.coeffs).max() < 1e-13

    def test_gradient_virtual_velocity_killed(self, grid32):
        x = grid32.nodes()
        g = vec(grid32, np.cos(x[0]) * np.cos(x[1]), -np.sin(x[0]) * np.sin(x[1]))
        w = weber_velocity(SpectralField.zeros(grid32, 2), g)
        assert np.abs(w.coeffs).max() < 1e-14


class TestGradientSwap:
    def test_vanishes_on_zero_input(self, grid16):
        z = SpectralField.zeros(grid16, 2)
        v = random_field(grid16, 7)
        assert np.abs(weber_gradient_swap(z, v, 0).coeffs).max() == 0.0
        assert np.abs(weber_gradient_swap(v, z, 1).coeffs).max() == 0.0

    def test_identity_against_direct_derivative(self, grid16):
        # the swap must reproduce the derivative of the projected product
        for seed in range(100):
            eta = truncate(random_field(grid16, 1000 + seed), 5)
            v = truncate(random_field(grid16, 2000 + seed), 5)
            scale = max(hs_norm(eta, 1.0) * hs_norm(v, 1.0), 1e-30)
            for axis in range(2):
                lhs = derivative(weber_projected_product(eta, v), axis)
                rhs = weber_gradient_swap(eta, v, axis)
                assert np.abs(lhs.coeffs - rhs.coeffs).max() < 1e-10 * scale

    def test_antisymmetry(self, grid16):
        for seed in range(100):
            f = random_field(grid16, 3000 + seed)
            g = random_field(grid16, 4000 + seed)
            asym = weber_projected_product(f, g) + weber_projected_product(g, f)
            assert l2_norm(asym) < 1e-10 * hs_norm(f, 1.0) * hs_norm(g, 1.0)


class TestCompose:
    def test_identity_map(self, grid32):
        f = random_field(grid32, 11)
        out = compose(f, SpectralField.zeros(grid32, 2))
        assert np.abs(out.coeffs - f.coeffs).max() < 1e-13

    def test_constant_shift_preserves_norms(self, grid32):
        f = random_field(grid32, 12)
        shift = to_spectral(
            grid32, np.stack([np.full(grid32.shape, 1.3), np.full(grid32.shape, -0.4)])
        )
        out = compose(f, shift)
        for s in (0.0, 2.0, 3.0):
            assert abs(hs_norm(out, s) - hs_norm(f, s)) < 1e-12 * max(hs_norm(f, s), 1.0)

    def test_shear_fixes_its_own_profile(self, grid32):
        x = grid32.nodes()
        zero = np.zeros(grid32.shape)
        u0 = vec(grid32, np.sin(x[1]), zero)
        g = vec(grid32, -0.6 * np.sin(x[1]), zero)
        out = compose(u0, g)
        assert np.abs(out.coeffs - u0.coeffs).max() < 1e-13

    def test_volume_preservation_warning(self, grid32):
        x = grid32.nodes()
        f = random_field(grid32, 13)
        bad = vec(grid32, 0.3 * np.sin(x[0]), np.zeros(grid32.shape))
        with pytest.warns(VolumePreservationWarning):
            compose(f, bad)

    def test_shear_map_determinant_is_one(self, grid32):
        x = grid32.nodes()
        g = vec(grid32, -0.6 * np.sin(x[1]), np.zeros(grid32.shape))
        assert np.abs(jacobian_determinant(g) - 1.0).max() < 1e-14


class TestMaterialDerivative:
    def test_constant_field(self, grid16):
        f = random_field(grid16, 21, cutoff=4)
        u = SpectralField.zeros(grid16, 2)
        md = material_derivative(u, f, f, f, 0.1)
        assert np.abs(md.coeffs).max() < 1e-14

    def test_pure_time_derivative(self, grid16):
        h = random_field(grid16, 22, cutoff=4)
        md = material_derivative(SpectralField.zeros(grid16, 2), 0.5 * h, 0.0 * h, 1.0 * h, 0.5)
        assert np.abs(md.coeffs - h.coeffs).max() < 1e-13

    def test_transported_field_is_materially_constant(self, grid32):
        x = grid32.nodes()
        u = vec(grid32, np.sin(x[1]), np.zeros(grid32.shape))
        f0 = truncate(random_field(grid32, 23, cutoff=4), 4)
        dt = 1e-3
        sol = solve_galerkin(TransportProblem(
            velocity=FieldSeries.constant(u, [0.0, 10 * dt]), forcing="zero",
            initial=f0, horizon=10 * dt, dt=dt,
        ))
        md = material_derivative(u, sol.sample(5), sol.sample(4), sol.sample(6), dt)
        assert l2_norm(md) < 1e-6 * l2_norm(f0)

    def test_bad_dt(self, grid16):
        f = SpectralField.zeros(grid16, 2)
        with pytest.raises(ValueError):
            material_derivative(f, f, f, f, 0.0)


class TestPressure:
    def test_steady_shear_zero_pressure(self, grid32):
        st = shear_state(grid32, 0.5)
        pair = recover_pressure((st, st, st), 1e-3)
        assert np.abs(pair.p.coeffs).max() < 1e-14

    def test_taylor_green_closed_form(self, grid32):
        st = taylor_green_state(grid32)
        pair = recover_pressure((st, st, st), 1e-3)
        x = grid32.nodes()
        exact = (np.cos(2 * x[0]) + np.cos(2 * x[1])) / 4
        assert np.abs(to_physical(pair.p)[0] - exact).max() < 1e-13

    def test_zero_state(self, grid16):
        z = SpectralField.zeros(grid16, 2)
        st = ELState(u=z, eta=z, v=z, time=0.0)
        pair = recover_pressure((st, st, st), 1e-3)
        assert np.abs(pair.p.coeffs).max() == 0.0
        assert np.abs(pair.n_potential.coeffs).max() == 0.0

    def test_zero_means(self, grid32):
        st = shear_state(grid32, 0.3)
        pair = recover_pressure((st, st, st), 1e-3)
        assert pair.p.coeffs[0, 0, 0] == 0.0
        assert pair.n_potential.coeffs[0, 0, 0] == 0.0

    def test_gauge_relation(self, grid32):
        # eta = 0 and u = P v make grad n exactly the gradient part of v
        v = random_field(grid32, 31)
        st = ELState(u=leray_project(v), eta=SpectralField.zeros(grid32, 2), v=v, time=0.0)
        pair = recover_pressure((st, st, st), 1e-3)
        grad_n = np.stack(
            [to_physical(derivative(pair.n_potential, a))[0] for a in range(2)]
        )
        target = to_physical(v - leray_project(v))
        assert np.abs(grad_n - target).max() < 1e-12


class TestClassicalResidual:
    def test_steady_shear(self, grid32):
        st = shear_state(grid32, 0.2)
        assert classical_residual((st, st, st), 1e-3) < 1e-6

    def test_taylor_green_steady(self, grid32):
        st = taylor_green_state(grid32)
        assert classical_residual((st, st, st), 1e-3) < 1e-6

    def test_zero_state(self, grid16):
        z = SpectralField.zeros(grid16, 2)
        st = ELState(u=z, eta=z, v=z, time=0.0)
        assert classical_residual((st, st, st), 1e-3) == 0.0


class TestWeberResidual:
    def test_exact_shear_state(self, grid32):
        st = shear_state(grid32, 0.4)
        x = grid32.nodes()
        u0 = vec(grid32, np.sin(x[1]), np.zeros(grid32.shape))
        assert weber_residual(st, u0) < 1e-13
