"""Shared fixtures: small grids, benchmark fields, and the expensive N=64
benchmark solves reused across the acceptance criteria."""

from __future__ import annotations

import time

import numpy as np
import pytest

from el_euler.config import SolverConfig
from el_euler.diagnostics import probe_all, random_field
from el_euler.fixed_point import advance_windows
from el_euler.oracle import _catalog_velocity
from el_euler.spectral import SpectralField, WaveGrid, to_spectral

PERT_SEED = 7


# ---------------------------------------------------------------------------
# acceptance criterion bookkeeping: one printed line per criterion at the end

_CRITERIA: list[tuple[int, str, bool, str]] = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    _CRITERIA.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_CRITERIA):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number} ({title}): {detail}")


# ---------------------------------------------------------------------------
# grids and benchmark fields

@pytest.fixture(scope="session")
def grid16():
    return WaveGrid(2, 16)


@pytest.fixture(scope="session")
def grid32():
    return WaveGrid(2, 32)


@pytest.fixture(scope="session")
def grid64():
    return WaveGrid(2, 64)


def shear_velocity(grid, amplitude=1.0):
    x = grid.nodes()
    return to_spectral(grid, np.stack([amplitude * np.sin(x[1]), np.zeros(grid.shape)]))


def taylor_green_velocity(grid):
    return _catalog_velocity("taylor_green", grid)


def perturbed_taylor_green(grid, seed=PERT_SEED):
    base = taylor_green_velocity(grid)
    pert = random_field(grid, seed, divergence_free=True, cutoff=4, amplitude=0.1)
    return SpectralField._wrap(grid, base.coeffs + pert.coeffs)


@pytest.fixture(scope="session")
def pert_u0_64(grid64):
    return perturbed_taylor_green(grid64)


# ---------------------------------------------------------------------------
# benchmark solves at acceptance scale (timed; shared by several criteria)

def _timed_run(u0, cfg, **kwargs):
    start = time.perf_counter()
    traj = advance_windows(u0, cfg, **kwargs)
    return traj, time.perf_counter() - start


@pytest.fixture(scope="session")
def shear_run_64(grid64):
    cfg = SolverConfig(
        N=64, s=3.0, dt=1e-3, total_T=0.5, window_T=0.25, fp_tol=1e-8, min_window=4e-3
    ).validate()
    return _timed_run(shear_velocity(grid64), cfg)


@pytest.fixture(scope="session")
def tg_run_64(grid64):
    cfg = SolverConfig(
        N=64, s=3.0, dt=1e-3, total_T=0.5, window_T=0.25, fp_tol=1e-8, min_window=4e-3
    ).validate()
    return _timed_run(taylor_green_velocity(grid64), cfg)


@pytest.fixture(scope="session")
def pert_run_64(grid64, pert_u0_64):
    cfg = SolverConfig(
        N=64, s=3.0, dt=1e-3, total_T=0.25, window_T=0.125, fp_tol=1e-8, min_window=4e-3
    ).validate()
    return _timed_run(pert_u0_64, cfg)


@pytest.fixture(scope="session")
def constants_32(grid32):
    return probe_all(grid32, 3.0, trials=40, seed=20)
