"""Independent ground truth for validating the Eulerian-Lagrangian solver.

Three ingredients: a classical 2D pseudo-spectral solver in vorticity-stream
form, a particle-trajectory integrator with Jacobians (variational equation),
and the inverse-map construction of the back-to-labels displacement by Newton
iteration on the spectrally interpolated forward map.  A small catalog of
closed-form steady flows rounds things out for regression fixtures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .el import ELState
from .errors import CFLError, GridMismatchError, SolverError
from .spectral import (
    SpectralField,
    WaveGrid,
    _pad_phys,
    _spec_from_pad,
    eval_at_points,
    max_pointwise_norm,
    to_physical,
    to_spectral,
)
from .transport import CFL_LIMIT, FieldSeries

__all__ = [
    "VorticityState",
    "TrajectoryEnsemble",
    "BackToLabelsResult",
    "velocity_from_vorticity",
    "vorticity_from_velocity",
    "classical_step",
    "classical_solve",
    "integrate_trajectories",
    "back_to_labels_from_trajectories",
    "exact_solution",
    "CATALOG_KEYS",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class VorticityState:
    """Scalar 2D vorticity snapshot; zero-mean by construction."""

    omega: SpectralField
    time: float

    @property
    def enstrophy(self) -> float:
        return float(np.sum(np.abs(self.omega.coeffs) ** 2))


def velocity_from_vorticity(omega: SpectralField) -> SpectralField:
    """u = rot Lap^{-1} omega, per mode u(k) = i(k2, -k1) w(k)/|k|^2.

    With omega = d1 u2 - d2 u1 the streamfunction satisfies Lap psi = omega,
    so psi(k) = -w(k)/|k|^2 and u = (-d2 psi, d1 psi).
    """
    g = omega.grid
    if g.dim != 2 or omega.ncomp != 1:
        raise GridMismatchError("vorticity inversion is 2D scalar only")
    w = omega.coeffs[0]
    fac = 1j * g.inv_k_sq * w
    u = np.stack([g.k_axes[1] * fac, -g.k_axes[0] * fac])
    return SpectralField._wrap(g, u)


def vorticity_from_velocity(u: SpectralField) -> SpectralField:
    g = u.grid
    if g.dim != 2 or u.ncomp != 2:
        raise GridMismatchError("vorticity is defined for 2D vector fields")
    w = 1j * (g.k_axes[0] * u.coeffs[1] - g.k_axes[1] * u.coeffs[0])
    return SpectralField._wrap(g, w[np.newaxis])


def _vorticity_rhs(grid: WaveGrid, w_c: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """-(u . grad) omega with u = mean + rot Lap^{-1} omega, dealiased.

    The conserved mean flow advects linearly, so its contribution needs no
    product transform.
    """
    keep = grid.dealias_keep
    w = np.where(keep, w_c[0], 0.0)
    fac = 1j * grid.inv_k_sq * w
    ux, uy = grid.k_axes[1] * fac, -grid.k_axes[0] * fac
    dwx = 1j * grid.k_axes[0] * w
    dwy = 1j * grid.k_axes[1] * w
    phys = _pad_phys(grid, np.stack([ux, uy, dwx, dwy]))
    adv = phys[0] * phys[2] + phys[1] * phys[3]
    out = -_spec_from_pad(grid, adv[np.newaxis])
    out -= mean[0] * dwx[np.newaxis] + mean[1] * dwy[np.newaxis]
    return out


def classical_step(
    state: VorticityState, dt: float, mean_velocity: np.ndarray | None = None
) -> VorticityState:
    """One RK4 step of d_t omega + (u . grad) omega = 0.

    mean_velocity is the (conserved) spatial-mean flow that the vorticity
    cannot encode; it advects the vorticity alongside the induced field.
    """
    g = state.omega.grid
    mean = np.zeros(2) if mean_velocity is None else np.asarray(mean_velocity, dtype=float)
    u_max = max_pointwise_norm(velocity_from_vorticity(state.omega)) + float(
        np.sqrt((mean**2).sum())
    )
    if dt * u_max * g.n_modes / 2 > CFL_LIMIT:
        raise CFLError(
            f"vorticity step violates CFL: dt*max|u|*N/2 = {dt * u_max * g.n_modes / 2:.3f}"
        )
    w = state.omega.coeffs
    k1 = _vorticity_rhs(g, w, mean)
    k2 = _vorticity_rhs(g, w + (dt / 2) * k1, mean)
    k3 = _vorticity_rhs(g, w + (dt / 2) * k2, mean)
    k4 = _vorticity_rhs(g, w + dt * k3, mean)
    w_new = w + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(w_new)):
        raise SolverError(f"NaN in vorticity march at t = {state.time + dt:g}")
    return VorticityState(SpectralField._wrap(g, w_new), state.time + dt)


def classical_solve(
    u0: SpectralField, horizon: float, dt: float, store_every: int = 1
) -> tuple[FieldSeries, FieldSeries]:
    """March the 2D classical solver; returns (velocity, vorticity) series.

    The mean velocity of u0 is conserved by the periodic Euler dynamics and
    is carried through the march and restored in the returned velocities.
    """
    n_steps = int(round(horizon / dt))
    if abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise SolverError("horizon is not an integer number of steps")
    g = u0.grid
    mean = u0.coeffs[(slice(None),) + (0,) * g.dim].real.copy()
    state = VorticityState(vorticity_from_velocity(u0), 0.0)
    times = [0.0]
    omegas = [state.omega.coeffs]
    for i in range(n_steps):
        state = classical_step(state, dt, mean_velocity=mean)
        if (i + 1) % store_every == 0 or i == n_steps - 1:
            times.append(state.time)
            omegas.append(state.omega.coeffs)
    w_series = FieldSeries(g, np.asarray(times), np.stack(omegas))
    u_data = np.stack(
        [velocity_from_vorticity(w_series.sample(i)).coeffs for i in range(len(times))]
    )
    u_data[(slice(None), slice(None)) + (0,) * g.dim] = mean
    return FieldSeries(g, np.asarray(times), u_data), w_series


# ---------------------------------------------------------------------------
# particle trajectories

@dataclass
class TrajectoryEnsemble:
    """Forward flow map on a uniform label grid, with Jacobians.

    positions[j] and jacobians[j] correspond to output_times[j]; labels and
    positions are flattened (P, dim), jacobians (P, dim, dim).
    """

    grid: WaveGrid            # grid of the advecting velocity
    labels_per_dim: int
    labels: np.ndarray
    output_times: np.ndarray
    positions: list[np.ndarray]
    jacobians: list[np.ndarray]

    def det_residual(self) -> float:
        worst = 0.0
        for jac in self.jacobians:
            worst = max(worst, float(np.abs(np.linalg.det(jac) - 1.0).max()))
        return worst


def _velocity_and_gradient_at(
    u_series: FieldSeries, t: float, pts: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    g = u_series.grid
    n = g.dim
    u_c = u_series.coeffs_at(t)
    ik = [1j * np.broadcast_to(g.k_axes[a], g.shape) for a in range(n)]
    grads = np.stack([u_c[b] * ik[a] for b in range(n) for a in range(n)])
    stacked = eval_at_points(g, np.concatenate([u_c, grads]), pts)
    vel = stacked[:n].T                                    # (P, n)
    # stacked gradient order is index = i*n + j holding d u_i / d x_j
    grad_u = np.transpose(stacked[n:].reshape(n, n, -1), (2, 0, 1))
    return vel, grad_u


def integrate_trajectories(
    u_series: FieldSeries,
    labels_per_dim: int,
    output_times,
    dt: float | None = None,
) -> TrajectoryEnsemble:
    """RK4 integration of dX/dt = u(X, t) with the variational equation.

    Jacobians evolve by d(grad X)/dt = grad u(X, t) . grad X.  Velocity and
    its gradient at off-grid positions come from the exact trigonometric
    interpolant of the stored coefficients.
    """
    g = u_series.grid
    n = g.dim
    output_times = np.asarray(output_times, dtype=np.float64)
    if dt is None:
        dt = float(u_series.times[1] - u_series.times[0]) if u_series.n_samples > 1 else 1e-2
    axes = [TWO_PI * np.arange(labels_per_dim) / labels_per_dim] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    labels = np.stack(mesh).reshape(n, -1).T
    pos = labels.copy()
    jac = np.broadcast_to(np.eye(n), (len(labels), n, n)).copy()

    positions, jacobians = [], []
    t = float(u_series.times[0])
    for t_out in output_times:
        n_steps = int(round((t_out - t) / dt))
        if abs(t + n_steps * dt - t_out) > 1e-9:
            raise SolverError(f"output time {t_out} not reachable with dt = {dt}")
        for _ in range(n_steps):
            pos, jac = _trajectory_rk4_step(u_series, pos, jac, t, dt)
            t += dt
        positions.append(pos.copy())
        jacobians.append(jac.copy())
    return TrajectoryEnsemble(
        grid=g,
        labels_per_dim=labels_per_dim,
        labels=labels,
        output_times=output_times,
        positions=positions,
        jacobians=jacobians,
    )


def _trajectory_rk4_step(u_series, pos, jac, t, dt):
    def rate(p, j, s):
        vel, grad_u = _velocity_and_gradient_at(u_series, s, p)
        return vel, np.einsum("pij,pjk->pik", grad_u, j)

    v1, m1 = rate(pos, jac, t)
    v2, m2 = rate(pos + (dt / 2) * v1, jac + (dt / 2) * m1, t + dt / 2)
    v3, m3 = rate(pos + (dt / 2) * v2, jac + (dt / 2) * m2, t + dt / 2)
    v4, m4 = rate(pos + dt * v3, jac + dt * m3, t + dt)
    pos_new = pos + (dt / 6) * (v1 + 2 * v2 + 2 * v3 + v4)
    jac_new = jac + (dt / 6) * (m1 + 2 * m2 + 2 * m3 + m4)
    if not np.all(np.isfinite(pos_new)):
        raise SolverError("NaN in trajectory integration")
    return pos_new, jac_new


@dataclass
class BackToLabelsResult:
    eta: SpectralField
    newton_failures: int
    composition_residual: float


def back_to_labels_from_trajectories(
    ens: TrajectoryEnsemble,
    time_index: int = -1,
    out_grid: WaveGrid | None = None,
    tol: float = 1e-10,
    max_iter: int = 25,
) -> BackToLabelsResult:
    """Invert the forward map: eta(x) = A(x) - x with X(A(x)) = x.

    The displacement X - id sampled on the uniform label grid is spectrally
    interpolated (as are the stored Jacobian entries); each Eulerian node is
    seeded with its nearest forward image (periodic KD-tree) and refined by
    Newton steps.  Non-converged nodes are counted, and the composition
    residual max |X(A(x)) - x| is reported.
    """
    n = ens.grid.dim
    L = ens.labels_per_dim
    label_grid = WaveGrid(n, L)
    disp = (ens.positions[time_index] - ens.labels).T.reshape((n,) + (L,) * n)
    disp_field = to_spectral(label_grid, disp)
    jac_entries = ens.jacobians[time_index].transpose(1, 2, 0).reshape((n * n,) + (L,) * n)
    jac_minus_id = jac_entries - np.eye(n).reshape(n * n, *([1] * n))
    jac_field_c = to_spectral(label_grid, jac_minus_id).coeffs

    out_grid = out_grid or ens.grid
    x_nodes = out_grid.nodes_flat()

    def wrap(a):
        out = np.mod(a, TWO_PI)
        out[out >= TWO_PI] = 0.0  # mod can round up to the divisor itself
        return out

    tree = cKDTree(wrap(ens.positions[time_index]), boxsize=TWO_PI)
    _, nearest = tree.query(wrap(x_nodes.copy()))
    y = ens.labels[nearest].copy()

    eye = np.eye(n)
    active = np.ones(len(y), dtype=bool)
    for _ in range(max_iter):
        disp_at = eval_at_points(label_grid, disp_field.coeffs, y[active])
        resid = y[active] + disp_at.T - x_nodes[active]
        resid = (resid + math.pi) % TWO_PI - math.pi
        done = np.abs(resid).max(axis=1) < tol
        jac_at = eval_at_points(label_grid, jac_field_c, y[active])
        jac_mat = jac_at.reshape(n, n, -1).transpose(2, 0, 1) + eye
        step = np.linalg.solve(jac_mat, resid[..., None])[..., 0]
        y[active] -= step
        idx = np.where(active)[0]
        active[idx[done]] = False
        if not active.any():
            break
    failures = int(active.sum())

    disp_final = eval_at_points(label_grid, disp_field.coeffs, y)
    comp = y + disp_final.T - x_nodes
    comp = (comp + math.pi) % TWO_PI - math.pi
    comp_residual = float(np.abs(comp).max())

    eta_vals = y - x_nodes
    eta_vals = (eta_vals + math.pi) % TWO_PI - math.pi
    eta = to_spectral(out_grid, eta_vals.T.reshape((n,) + out_grid.shape))
    return BackToLabelsResult(eta=eta, newton_failures=failures, composition_residual=comp_residual)


# ---------------------------------------------------------------------------
# exact-solution catalog

CATALOG_KEYS = ("zero", "shear", "taylor_green", "translation")

_TG_CACHE: dict[tuple, SpectralField] = {}


def _parse_catalog_key(name: str) -> tuple[str, tuple[float, ...]]:
    base, _, arg = name.partition(":")
    base = base.strip()
    if base not in CATALOG_KEYS:
        raise SolverError(f"unknown exact-solution key {name!r}; choose from {CATALOG_KEYS}")
    if base == "translation":
        args = tuple(float(v) for v in arg.split(",")) if arg else (0.3, -0.2, 0.1)
    elif base == "shear":
        args = (float(arg),) if arg else (1.0,)
    else:
        args = ()
    return base, args


def _catalog_velocity(name: str, grid: WaveGrid) -> SpectralField:
    base, args = _parse_catalog_key(name)
    x = grid.nodes()
    zero = np.zeros(grid.shape)
    if base == "zero":
        return SpectralField.zeros(grid, grid.dim)
    if base == "shear":
        comps = [args[0] * np.sin(x[1]), zero] + [zero] * (grid.dim - 2)
        return to_spectral(grid, np.stack(comps))
    if base == "taylor_green":
        comps = [np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1])]
        comps += [zero] * (grid.dim - 2)
        return to_spectral(grid, np.stack(comps))
    c = args[: grid.dim]
    comps = [np.full(grid.shape, ci) for ci in c]
    return to_spectral(grid, np.stack(comps))


def _tg_displacement(grid: WaveGrid, t: float, dt: float) -> SpectralField:
    """Numerical Taylor-Green back-to-labels displacement (cached)."""
    key = (grid.dim, grid.n_modes, round(t, 12), round(dt, 12))
    if key in _TG_CACHE:
        return _TG_CACHE[key]
    if grid.dim != 2:
        raise SolverError("Taylor-Green displacement is computed for n = 2 only")
    u = _catalog_velocity("taylor_green", grid)
    series = FieldSeries.constant(u, [0.0, max(t, dt)])
    ens = integrate_trajectories(series, grid.n_modes, [t], dt=dt)
    eta = back_to_labels_from_trajectories(ens).eta
    _TG_CACHE[key] = eta
    return eta


def exact_solution(name: str, t: float, grid: WaveGrid, dt: float = 2e-3) -> ELState:
    """Analytic (or, for Taylor-Green labels, numerically exact) EL state.

    Catalog: zero; shear[:amplitude] with profile a sin(x2); taylor_green
    (steady, displacement integrated numerically and cached); and
    translation[:c1,c2(,c3)].
    """
    base, args = _parse_catalog_key(name)
    u = _catalog_velocity(name, grid)
    x = grid.nodes()
    zero = np.zeros(grid.shape)
    if base == "zero":
        return ELState(u=u, eta=SpectralField.zeros(grid, grid.dim), v=u, time=t)
    if base == "shear":
        comps = [-t * args[0] * np.sin(x[1]), zero] + [zero] * (grid.dim - 2)
        eta = to_spectral(grid, np.stack(comps))
        return ELState(u=u, eta=eta, v=u, time=t)
    if base == "translation":
        c = args[: grid.dim]
        vals = [np.full(grid.shape, (-t * ci + math.pi) % TWO_PI - math.pi) for ci in c]
        eta = to_spectral(grid, np.stack(vals))
        return ELState(u=u, eta=eta, v=u, time=t)
    if t == 0.0:
        eta = SpectralField.zeros(grid, grid.dim)
    else:
        eta = _tg_displacement(grid, t, dt)
    from .el import compose  # deferred: el imports nothing from here

    v = compose(u, eta, det_tol=np.inf) if t > 0 else u
    return ELState(u=u, eta=eta, v=v, time=t)
