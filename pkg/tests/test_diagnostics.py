"""Constant probes, held-out bound checks, Gronwall validation, sweeps."""

import numpy as np
import pytest

from el_euler.config import SolverConfig
from el_euler.diagnostics import (
    HELD_OUT_INEQUALITIES,
    INEQUALITIES,
    ConstantsReport,
    check_bound,
    exact_skew_ratio,
    gronwall_check,
    invariant_sweep,
    lipschitz_constant,
    probe_all,
    probe_constant,
    random_field,
    trajectory_rows,
)
from el_euler.errors import ConfigError
from el_euler.fixed_point import ELTrajectory, advance_windows
from el_euler.spectral import (
    SpectralField,
    WaveGrid,
    divergence,
    hs_norm,
    max_pointwise_norm,
    to_spectral,
)
from el_euler.transport import FieldSeries, advect

from conftest import shear_velocity


class TestRandomField:
    def test_deterministic(self, grid32):
        a = random_field(grid32, 7, divergence_free=True)
        b = random_field(grid32, 7, divergence_free=True)
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_divergence_free_flag(self, grid32):
        f = random_field(grid32, 8, divergence_free=True)
        assert hs_norm(divergence(f), 0.0) < 1e-12

    def test_cutoff_box(self, grid32):
        f = random_field(grid32, 9, decay=0.0, cutoff=1)
        k = np.fft.fftfreq(32, 1 / 32).astype(int)
        nz = np.argwhere(np.abs(f.coeffs).sum(axis=0) > 0)
        assert all(abs(k[i]) <= 1 and abs(k[j]) <= 1 for i, j in nz)

    def test_amplitude_normalization(self, grid32):
        f = random_field(grid32, 10, amplitude=0.5)
        assert max_pointwise_norm(f) == pytest.approx(0.5)

    def test_power_law_magnitudes(self, grid32):
        f = random_field(grid32, 11, ncomp=1, decay=4.0, cutoff=5)
        k = np.fft.fftfreq(32, 1 / 32).astype(int)
        c = f.coeffs[0]
        for i, j in ((1, 0), (2, 2), (0, 4), (3, 1)):
            expected = (1.0 + k[i] ** 2 + k[j] ** 2) ** -2.0
            assert abs(abs(c[i, j]) - expected) < 1e-14

    def test_grid_transferable(self, grid32, grid64):
        a = random_field(grid32, 12, cutoff=6)
        b = random_field(grid64, 12, cutoff=6)
        assert hs_norm(a, 3.0) == pytest.approx(hs_norm(b, 3.0), rel=1e-13)


class TestProbes:
    def test_single_trial_margin(self, grid32):
        constant, samples = probe_constant(grid32, "advection_hs", 1, 77, 3.0)
        assert len(samples) == 1
        assert constant == pytest.approx(1.2 * samples[0].ratio)

    def test_probe_reproduces_brute_force_ratio(self, grid16):
        # single-mode data where every norm in the ratio has a closed form
        s = 3.0
        x = grid16.nodes()
        zero = np.zeros(grid16.shape)
        u = to_spectral(grid16, np.stack([np.sin(x[0]), zero]))
        b = advect(u, u)  # (sin x1 cos x1, 0) = (sin(2 x1)/2, 0)
        lhs = hs_norm(b, s)
        brute_lhs = np.sqrt(2 * (1 / 16) * (1 + 4) ** s)
        brute_rhs = np.sqrt(2 * 0.25 * 2**s) * np.sqrt(2 * 0.25 * 2 ** (s + 1))
        assert lhs == pytest.approx(brute_lhs, rel=1e-12)
        ratio = lhs / (hs_norm(u, s) * hs_norm(u, s + 1))
        assert ratio == pytest.approx(brute_lhs / brute_rhs, rel=1e-12)

    def test_exact_skew_symmetry(self, grid32):
        assert exact_skew_ratio(grid32, 10, 55, 3.0) < 1e-10

    def test_held_out_bounds_pass(self, grid32, constants_32):
        from el_euler.diagnostics import _CONSTANT_FIELD

        for name in HELD_OUT_INEQUALITIES:
            constant = getattr(constants_32.constants, _CONSTANT_FIELD[name])
            chk = check_bound(grid32, name, constant, 60, 20 + 10_000, 3.0)
            assert chk.passed, f"{name} failed with margin {chk.worst_margin}"

    def test_zero_constant_fails(self, grid32):
        chk = check_bound(grid32, "advection_hs", 0.0, 3, 11, 3.0)
        assert not chk.passed
        assert chk.failing_seeds

    def test_unknown_inequality(self, grid16):
        with pytest.raises(ConfigError):
            probe_constant(grid16, "no_such_bound", 1, 0, 3.0)

    def test_constant_stability_across_resolutions(self, grid32, grid64):
        # matched continuum ensembles: the constants are grid artifacts free
        for name in ("advection_hs", "advection_pairing", "weber_hs"):
            c32, _ = probe_constant(grid32, name, 30, 42, 3.0, cutoff=8)
            c64, _ = probe_constant(grid64, name, 30, 42, 3.0, cutoff=8)
            assert abs(c64 - c32) / c32 < 0.2

    def test_probe_determinism(self, grid32):
        a = probe_all(grid32, 3.0, 8, 5)
        b = probe_all(grid32, 3.0, 8, 5)
        assert a.to_json() == b.to_json()

    def test_composition_requires_integer_s(self, grid16):
        with pytest.raises(ConfigError):
            probe_constant(grid16, "composition", 1, 0, 2.5)


class TestGronwall:
    def test_envelope_holds_with_probed_constant(self, grid32, constants_32):
        report = gronwall_check(grid32, constants_32.constants.c4, 20, 91_000, 3.0)
        assert report.passed, f"failing seeds {report.failing_seeds}"

    def test_tiny_constant_violated_by_growing_transport(self, grid32):
        # shear advection spreads sin(x1) across modes, so the H^3 norm grows;
        # a vanishing growth constant makes the envelope flat and must fail
        from el_euler.transport import TransportProblem, gronwall_envelope, solve_galerkin

        x = grid32.nodes()
        u = shear_velocity(grid32)
        f0 = to_spectral(grid32, np.stack([np.sin(x[0]), np.zeros(grid32.shape)]))
        sol = solve_galerkin(TransportProblem(
            velocity=FieldSeries.constant(u, [0.0, 0.2]), forcing="zero",
            initial=f0, horizon=0.2, dt=2e-3,
        ))
        bound = gronwall_envelope(hs_norm(f0, 3.0), hs_norm(u, 3.0), 0.0, 1e-9, 0.2)
        assert hs_norm(sol.sample(-1), 3.0) > bound


class TestLipschitz:
    def test_shear_closed_form(self, grid32):
        assert lipschitz_constant(shear_velocity(grid32)) == pytest.approx(1.0, rel=1e-12)

    def test_scales_linearly(self, grid32):
        assert lipschitz_constant(shear_velocity(grid32, amplitude=2.5)) == pytest.approx(
            2.5, rel=1e-12
        )


class TestConstantsReport:
    def test_json_round_trip(self, constants_32):
        back = ConstantsReport.from_json(constants_32.to_json())
        assert back.constants == constants_32.constants
        assert back.ratios == constants_32.ratios

    def test_malformed_rejected(self):
        with pytest.raises(ConfigError):
            ConstantsReport.from_json("{not json")
        with pytest.raises(ConfigError):
            ConstantsReport.from_json('{"constants": {"c1": 1}}')

    def test_c4_dominates_pairing(self, constants_32):
        assert constants_32.constants.c4 >= constants_32.constants.c2


class TestInvariantSweep:
    def test_steady_shear_all_clean(self, grid32):
        cfg = SolverConfig(N=32, dt=2e-3, total_T=0.1, window_T=0.1, fp_tol=1e-10).validate()
        traj = advance_windows(shear_velocity(grid32), cfg)
        report = invariant_sweep(traj, 3.0, {"div_residual": 1e-6})
        assert report.passed
        for row in report.rows:
            assert max(
                row.div_residual, row.energy_drift, row.det_residual,
                row.weber_residual, row.classical_residual,
            ) < 1e-6

    def test_zero_trajectory(self, grid16):
        zero = SpectralField.zeros(grid16, 2)
        times = np.array([0.0, 0.01, 0.02])
        data = np.stack([zero.coeffs] * 3)
        traj = ELTrajectory(
            u=FieldSeries(grid16, times, data),
            eta=FieldSeries(grid16, times, data.copy()),
            v=FieldSeries(grid16, times, data.copy()),
            u0=zero,
        )
        report = invariant_sweep(traj, 3.0)
        assert report.passed
        for row in report.rows:
            assert row.det_residual == 0.0 and row.weber_residual == 0.0

    def test_corrupted_displacement_flags_determinant(self, grid32):
        cfg = SolverConfig(N=32, dt=2e-3, total_T=0.05, window_T=0.05, min_window=2e-3).validate()
        traj = advance_windows(shear_velocity(grid32), cfg)
        x = grid32.nodes()
        bump = to_spectral(grid32, np.stack([0.1 * np.sin(x[0]), np.zeros(grid32.shape)]))
        bad_eta = traj.eta.data.copy()
        bad_eta[-1] += bump.coeffs
        corrupted = ELTrajectory(
            u=traj.u,
            eta=FieldSeries(grid32, traj.times, bad_eta),
            v=traj.v,
            u0=traj.u0,
            windows=traj.windows,
        )
        report = invariant_sweep(corrupted, 3.0)
        assert not report.passed
        assert any("det_residual" in flag for flag in report.flags)
