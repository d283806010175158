"""Eulerian-Lagrangian operators.

The velocity is reconstructed from the back-to-labels displacement eta and
the virtual velocity v through the divergence-free part of (grad eta)^T v + v
(the Weber formula).  This module also provides the gradient-swap identity
for derivatives of projected products, composition with volume-preserving
maps by exact trigonometric evaluation, material derivatives, pressure
recovery and the residual of the classical momentum equation.

Conventions: (grad a)^T b has components sum_j (d_i a_j) b_j; the
back-to-labels map is A = eta + identity and det(I + grad eta) = 1 for
volume-preserving flows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, VolumePreservationWarning
from .spectral import (
    SpectralField,
    WaveGrid,
    _pad_phys,
    _spec_from_pad,
    derivative,
    eval_at_points,
    hs_norm,
    l2_norm,
    leray_project,
    to_physical,
    to_spectral,
)
from .transport import advect

__all__ = [
    "ELState",
    "PressurePair",
    "weber_velocity",
    "weber_projected_product",
    "weber_gradient_swap",
    "compose",
    "jacobian_determinant",
    "material_derivative",
    "recover_pressure",
    "classical_residual",
    "momentum_residual",
    "weber_residual",
]


@dataclass(frozen=True)
class ELState:
    """Velocity, back-to-labels displacement and virtual velocity at one time."""

    u: SpectralField
    eta: SpectralField
    v: SpectralField
    time: float


@dataclass(frozen=True)
class PressurePair:
    """Pressure and the Weber gauge potential, both zero-mean scalars."""

    p: SpectralField
    n_potential: SpectralField


def _grad_transpose_coeffs(grid: WaveGrid, a_c: np.ndarray, b_c: np.ndarray) -> np.ndarray:
    """Coefficients of (grad a)^T b, componentwise sum_j (d_i a_j) b_j."""
    n = grid.dim
    keep = grid.dealias_keep
    ik = np.stack([1j * np.broadcast_to(grid.k_axes[a], grid.shape) for a in range(n)])
    am = np.where(keep, a_c, 0.0)
    derivs = ik[:, None] * am[None, :, :]                      # (i, j, grid)
    blocks = np.concatenate([derivs.reshape((n * n,) + grid.shape), np.where(keep, b_c, 0.0)])
    phys = _pad_phys(grid, blocks)
    pd = phys[: n * n].reshape((n, n) + phys.shape[1:])
    pb = phys[n * n :]
    prod = np.einsum("ij...,j...->i...", pd, pb)
    return np.ascontiguousarray(_spec_from_pad(grid, prod))


def _require_vector_pair(a: SpectralField, b: SpectralField) -> WaveGrid:
    if a.grid != b.grid:
        raise GridMismatchError("operands live on different grids")
    if a.ncomp != a.grid.dim or b.ncomp != b.grid.dim:
        raise GridMismatchError(
            f"expected {a.grid.dim}-component vector fields, got {a.ncomp} and {b.ncomp}"
        )
    return a.grid


def weber_projected_product(eta: SpectralField, v: SpectralField) -> SpectralField:
    """The divergence-free part of (grad eta)^T v alone."""
    grid = _require_vector_pair(eta, v)
    return leray_project(SpectralField._wrap(grid, _grad_transpose_coeffs(grid, eta.coeffs, v.coeffs)))


def weber_velocity(eta: SpectralField, v: SpectralField) -> SpectralField:
    """Velocity reconstruction P[(grad eta)^T v + v]; divergence-free."""
    grid = _require_vector_pair(eta, v)
    total = _grad_transpose_coeffs(grid, eta.coeffs, v.coeffs) + v.coeffs
    return leray_project(SpectralField._wrap(grid, total))


def weber_gradient_swap(eta: SpectralField, v: SpectralField, axis: int) -> SpectralField:
    """P[(grad eta)^T d_axis v - (grad v)^T d_axis eta].

    Equals the axis-derivative of weber_projected_product(eta, v): projecting
    again removes the gradient term produced by swapping the derivatives.
    """
    grid = _require_vector_pair(eta, v)
    dv = derivative(v, axis)
    de = derivative(eta, axis)
    inner = _grad_transpose_coeffs(grid, eta.coeffs, dv.coeffs) - _grad_transpose_coeffs(
        grid, v.coeffs, de.coeffs
    )
    return leray_project(SpectralField._wrap(grid, inner))


def jacobian_determinant(g: SpectralField) -> np.ndarray:
    """Grid values of det(I + grad g) for a displacement field g."""
    grid = g.grid
    n = grid.dim
    if g.ncomp != n:
        raise GridMismatchError(f"displacement needs {n} components, got {g.ncomp}")
    ik = np.stack([1j * np.broadcast_to(grid.k_axes[a], grid.shape) for a in range(n)])
    dcoeffs = (ik[:, None] * g.coeffs[None, :, :]).reshape((n * n,) + grid.shape)
    dphys = np.fft.ifftn(dcoeffs, axes=tuple(range(-n, 0))).real * grid.n_modes**n
    j = dphys.reshape((n, n) + grid.shape)
    if n == 2:
        return (1.0 + j[0, 0]) * (1.0 + j[1, 1]) - j[0, 1] * j[1, 0]
    a, b, c = j[0], j[1], j[2]
    return (
        (1.0 + a[0]) * ((1.0 + b[1]) * (1.0 + c[2]) - b[2] * c[1])
        - a[1] * (b[0] * (1.0 + c[2]) - b[2] * c[0])
        + a[2] * (b[0] * c[1] - (1.0 + b[1]) * c[0])
    )


def compose(
    f: SpectralField,
    g_displacement: SpectralField,
    det_tol: float = 1e-4,
) -> SpectralField:
    """Evaluate f at the displaced points x + g(x) and re-expand spectrally.

    f is interpreted as a function on the torus (arguments mod 2pi); the
    evaluation is the exact trigonometric sum over f's populated modes.  When
    g + identity fails the volume-preservation tolerance a
    VolumePreservationWarning is emitted: the composition is still computed
    but the H^s norm bound is no longer guaranteed.
    """
    grid = f.grid
    if g_displacement.grid != grid:
        raise GridMismatchError("field and displacement live on different grids")
    if g_displacement.ncomp != grid.dim:
        raise GridMismatchError("displacement must be a vector field")
    det_err = float(np.abs(jacobian_determinant(g_displacement) - 1.0).max())
    if det_err > det_tol:
        warnings.warn(
            f"composition map is not volume preserving to {det_tol:g} "
            f"(max |det - 1| = {det_err:.3e})",
            VolumePreservationWarning,
            stacklevel=2,
        )
    pts = grid.nodes_flat() + to_physical(g_displacement).reshape(grid.dim, -1).T
    vals = eval_at_points(grid, f.coeffs, pts)
    return to_spectral(grid, vals.reshape((f.ncomp,) + grid.shape))


def material_derivative(
    u: SpectralField,
    f_now: SpectralField,
    f_prev: SpectralField,
    f_next: SpectralField,
    dt: float,
) -> SpectralField:
    """d_t f + (u . grad) f with a centered difference in time."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    ddt = (f_next - f_prev) * (0.5 / dt)
    return ddt + advect(u, f_now)


def _solve_gradient_potential(grid: WaveGrid, w_c: np.ndarray) -> SpectralField:
    """Zero-mean scalar n with grad n equal to the gradient part of w."""
    kdotw = sum(w_c[a] * grid.k_axes[a] for a in range(grid.dim))
    n_c = -1j * kdotw * grid.inv_k_sq
    return SpectralField._wrap(grid, n_c[np.newaxis])


def recover_pressure(state_window: tuple[ELState, ELState, ELState], dt: float) -> PressurePair:
    """Pressure and Weber gauge at the middle state of a three-state window.

    p solves the Poisson problem Lap p = -div[(u . grad) u] (per mode
    p(k) = i k.B(k)/|k|^2, zero mean); the gauge n comes from spectrally
    inverting grad n = v + (grad eta)^T v - u.
    """
    state = state_window[1]
    grid = state.u.grid
    b = advect(state.u, state.u)
    kdotb = sum(b.coeffs[a] * grid.k_axes[a] for a in range(grid.dim))
    p_c = 1j * kdotb * grid.inv_k_sq
    p = SpectralField._wrap(grid, p_c[np.newaxis])
    w = (
        state.v.coeffs
        + _grad_transpose_coeffs(grid, state.eta.coeffs, state.v.coeffs)
        - state.u.coeffs
    )
    return PressurePair(p=p, n_potential=_solve_gradient_potential(grid, w))


def momentum_residual(
    states: tuple[ELState, ELState, ELState],
    times: tuple[float, float, float],
    at: int = 1,
) -> float:
    """Relative L2 residual of d_t u + (u.grad)u + grad p at states[at].

    The time derivative uses the three-point Lagrange formula, so the states
    need not be equispaced and `at` may be an endpoint (one-sided,
    second-order).  Zero velocity gives zero.
    """
    t0, t1, t2 = times
    now = states[at]
    grid = now.u.grid
    u_scale = l2_norm(now.u)
    if u_scale == 0.0:
        return 0.0
    ta = times[at]
    w = [
        (2 * ta - t1 - t2) / ((t0 - t1) * (t0 - t2)),
        (2 * ta - t0 - t2) / ((t1 - t0) * (t1 - t2)),
        (2 * ta - t0 - t1) / ((t2 - t0) * (t2 - t1)),
    ]
    ddt = sum(wi * st.u.coeffs for wi, st in zip(w, states))
    pair = recover_pressure((states[0], now, states[2]), t1 - t0 if t1 > t0 else 1.0)
    b = advect(now.u, now.u)
    grad_p = np.stack([(1j * grid.k_axes[a]) * pair.p.coeffs[0] for a in range(grid.dim)])
    r = ddt + b.coeffs + grad_p
    return float(np.sqrt(np.sum(np.abs(r) ** 2))) / u_scale


def classical_residual(state_window: tuple[ELState, ELState, ELState], dt: float) -> float:
    """Relative L2 residual of d_t u + (u.grad)u + grad p at the middle state.

    The time derivative is the centered difference of the outer states; the
    pressure comes from recover_pressure.  Zero velocity gives zero.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return momentum_residual(state_window, (0.0, dt, 2.0 * dt), at=1)


def weber_residual(state: ELState, u0: SpectralField) -> float:
    """Relative L2 distance between v and u0 composed with the labels map."""
    scale = l2_norm(u0)
    if scale == 0.0:
        return 0.0
    recon = compose(u0, state.eta, det_tol=np.inf)
    return l2_norm(state.v - recon) / scale
