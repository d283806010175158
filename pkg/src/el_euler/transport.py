"""Advection solvers for d_t f + (u . grad) f = g on the torus.

Two interchangeable backends solve the same problem: an explicit RK4 march of
the dealiased Galerkin system, and a method-of-characteristics solver that
integrates grid-node characteristics backward and evaluates the initial data
at the feet by exact trigonometric interpolation.  Velocities known only at
step times are extended in time by piecewise-linear interpolation of their
coefficients.

The module also exposes the exponential a-priori envelope for the H^s norm of
transported fields, used as a runtime check against probed growth constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CFLError, GridMismatchError, SolverError
from .spectral import (
    SpectralField,
    WaveGrid,
    _pad_phys,
    _spec_from_pad,
    _spatial_axes,
    divergence,
    eval_at_points,
    hs_norm,
    max_pointwise_norm,
    to_spectral,
)

__all__ = [
    "FieldSeries",
    "TransportProblem",
    "advect",
    "solve_galerkin",
    "solve_characteristics",
    "gronwall_envelope",
    "CFL_LIMIT",
]

CFL_LIMIT = 0.5


class FieldSeries:
    """Time samples of a spectral field with linear interpolation in between.

    Stores one complex array of shape (n_samples, ncomp, N, ..., N); sample
    times must be strictly increasing.
    """

    def __init__(self, grid: WaveGrid, times: np.ndarray, data: np.ndarray):
        times = np.asarray(times, dtype=np.float64)
        data = np.asarray(data, dtype=np.complex128)
        if data.ndim != grid.dim + 2 or data.shape[2:] != grid.shape:
            raise GridMismatchError(f"series data shape {data.shape} does not match {grid.shape}")
        if len(times) != data.shape[0]:
            raise GridMismatchError("sample count does not match time count")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise GridMismatchError("sample times must be strictly increasing")
        self.grid = grid
        self.times = times
        self.data = data
        data.flags.writeable = False
        times.flags.writeable = False

    @classmethod
    def from_fields(cls, fields: list[SpectralField], times) -> "FieldSeries":
        grid = fields[0].grid
        return cls(grid, np.asarray(times, float), np.stack([f.coeffs for f in fields]))

    @classmethod
    def constant(cls, f: SpectralField, times) -> "FieldSeries":
        times = np.asarray(times, dtype=np.float64)
        data = np.broadcast_to(f.coeffs, (len(times),) + f.coeffs.shape)
        return cls(f.grid, times, np.ascontiguousarray(data))

    @property
    def n_samples(self) -> int:
        return len(self.times)

    @property
    def ncomp(self) -> int:
        return self.data.shape[1]

    def sample(self, i: int) -> SpectralField:
        return SpectralField._wrap(self.grid, self.data[i])

    def __len__(self) -> int:
        return self.n_samples

    def __iter__(self):
        return (self.sample(i) for i in range(self.n_samples))

    def coeffs_at(self, t: float) -> np.ndarray:
        """Piecewise-linear interpolation of the coefficient array at time t."""
        times = self.times
        span = times[-1] - times[0] if len(times) > 1 else 1.0
        slack = 1e-9 * max(span, 1.0)
        if t < times[0] - slack or t > times[-1] + slack:
            raise SolverError(f"time {t} outside sampled range [{times[0]}, {times[-1]}]")
        t = min(max(t, times[0]), times[-1])
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), len(times) - 2) if len(times) > 1 else 0
        if len(times) == 1:
            return self.data[0]
        t0, t1 = times[i], times[i + 1]
        w = (t - t0) / (t1 - t0)
        if w <= 1e-12:
            return self.data[i]
        if w >= 1.0 - 1e-12:
            return self.data[i + 1]
        return (1.0 - w) * self.data[i] + w * self.data[i + 1]

    def at(self, t: float) -> SpectralField:
        return SpectralField._wrap(self.grid, np.ascontiguousarray(self.coeffs_at(t)))

    def sup_hs_norm(self, s: float) -> float:
        w = self.grid.sobolev_weight(s)
        per = np.sqrt(np.sum(w * np.abs(self.data) ** 2, axis=tuple(range(1, self.data.ndim))))
        return float(per.max())

    def sup_l2_distance(self, other: "FieldSeries") -> float:
        if other.data.shape != self.data.shape:
            raise GridMismatchError("series shapes differ")
        diff = self.data - other.data
        per = np.sqrt(np.sum(np.abs(diff) ** 2, axis=tuple(range(1, diff.ndim))))
        return float(per.max())


@dataclass
class TransportProblem:
    """One advection problem: velocity series, forcing, initial data, horizon.

    forcing is a FieldSeries, or one of the tags "zero" and "minus-velocity"
    (the latter meaning g = -u, as in the back-to-labels displacement
    equation).
    """

    velocity: FieldSeries
    forcing: FieldSeries | str
    initial: SpectralField
    horizon: float
    dt: float
    t0: float = 0.0
    sobolev_index: float = 1.0
    div_tol: float = 1e-10

    def __post_init__(self):
        if self.horizon <= 0:
            raise SolverError(f"horizon must be positive, got {self.horizon}")
        if self.dt <= 0:
            raise SolverError(f"dt must be positive, got {self.dt}")
        if isinstance(self.forcing, str) and self.forcing not in ("zero", "minus-velocity"):
            raise SolverError(f"unknown forcing tag {self.forcing!r}")
        if self.initial.grid != self.velocity.grid:
            raise GridMismatchError("initial data and velocity live on different grids")

    @property
    def n_steps(self) -> int:
        n = int(round(self.horizon / self.dt))
        if abs(n * self.dt - self.horizon) > 1e-9 * max(1.0, self.horizon) or n < 1:
            raise SolverError(
                f"horizon {self.horizon} is not an integer number of steps of dt={self.dt}"
            )
        return n

    def step_times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def validate(self) -> None:
        """Check the divergence-free and CFL preconditions."""
        g = self.velocity.grid
        s = self.sobolev_index
        for i in range(self.velocity.n_samples):
            d = divergence(self.velocity.sample(i))
            if hs_norm(d, s - 1.0) > self.div_tol:
                raise SolverError(
                    f"velocity sample {i} is not divergence-free "
                    f"(H^{s - 1:g} norm {hs_norm(d, s - 1.0):.3e})"
                )
        _check_cfl(self.velocity, self.dt)


def _check_cfl(u_series: FieldSeries, dt: float) -> float:
    """Refuse when dt * max|u| * N/2 exceeds the CFL limit; returns max|u|."""
    g = u_series.grid
    # cheap coefficient-sum bound first, exact grid max only when it matters
    comp_bounds = np.sum(np.abs(u_series.data), axis=tuple(range(2, u_series.data.ndim)))
    bound = float(np.sqrt((comp_bounds**2).sum(axis=1)).max())
    if dt * bound * g.n_modes / 2 <= CFL_LIMIT:
        return bound
    u_max = max(max_pointwise_norm(u_series.sample(i)) for i in range(u_series.n_samples))
    cfl = dt * u_max * g.n_modes / 2
    if cfl > CFL_LIMIT:
        raise CFLError(
            f"advective CFL {cfl:.3f} exceeds limit {CFL_LIMIT} "
            f"(dt={dt}, max|u|={u_max:.3f}, N={g.n_modes})"
        )
    return u_max


def advect(u: SpectralField, f: SpectralField) -> SpectralField:
    """The advection term (u . grad) f, with dealiased products.

    u must be a vector field; f may be scalar or vector valued.  For
    divergence-free u the result pairs to zero with f in L2 (exactly, up to
    rounding, thanks to the strict 2/3 cutoff).
    """
    if u.grid != f.grid:
        raise GridMismatchError("advect operands live on different grids")
    if u.ncomp != u.grid.dim:
        raise GridMismatchError(f"velocity needs {u.grid.dim} components, got {u.ncomp}")
    out = _advect_coeffs(u.grid, u.coeffs, f.coeffs)
    return SpectralField._wrap(u.grid, out)


def _advect_coeffs(grid: WaveGrid, u_c: np.ndarray, f_c: np.ndarray) -> np.ndarray:
    n, m = u_c.shape[0], f_c.shape[0]
    keep = grid.dealias_keep
    ik = np.stack([1j * np.broadcast_to(grid.k_axes[a], grid.shape) for a in range(n)])
    derivs = np.where(keep, f_c[:, None], 0.0) * ik[None, :]      # (m, n, grid)
    blocks = np.concatenate([np.where(keep, u_c, 0.0), derivs.reshape((m * n,) + grid.shape)])
    phys = _pad_phys(grid, blocks)
    pu = phys[:n]
    pd = phys[n:].reshape((m, n) + pu.shape[1:])
    prod = np.einsum("j...,ij...->i...", pu, pd)
    return np.ascontiguousarray(_spec_from_pad(grid, prod))


class _StageRHS:
    """Batched right-hand side for co-marched transport problems.

    All problems share the velocity, so one padded transform per stage covers
    the velocity and every problem's derivative block.
    """

    def __init__(self, grid: WaveGrid, u_series: FieldSeries, forcings: list):
        self.grid = grid
        self.u_series = u_series
        self.forcings = forcings
        n = grid.dim
        self.ik = np.stack([1j * np.broadcast_to(grid.k_axes[a], grid.shape) for a in range(n)])

    def __call__(self, t: float, states: list[np.ndarray]) -> list[np.ndarray]:
        grid = self.grid
        n = grid.dim
        keep = grid.dealias_keep
        u_c = self.u_series.coeffs_at(t)
        blocks = [np.where(keep, u_c, 0.0)]
        comps = []
        for f_c in states:
            m = f_c.shape[0]
            derivs = np.where(keep, f_c[:, None], 0.0) * self.ik[None, :]
            blocks.append(derivs.reshape((m * n,) + grid.shape))
            comps.append(m)
        phys = _pad_phys(grid, np.concatenate(blocks))
        pu = phys[:n]
        out = []
        offset = n
        prods = []
        for m in comps:
            pd = phys[offset : offset + m * n].reshape((m, n) + pu.shape[1:])
            offset += m * n
            prods.append(np.einsum("j...,ij...->i...", pu, pd))
        specs = _spec_from_pad(grid, np.concatenate(prods))
        offset = 0
        for i, m in enumerate(comps):
            rhs = -specs[offset : offset + m]
            offset += m
            forcing = self.forcings[i]
            if forcing == "minus-velocity":
                rhs = rhs - u_c
            elif forcing == "zero":
                pass
            else:
                rhs = rhs + forcing.coeffs_at(t)
            out.append(rhs)
        return out


def _march_rk4(
    grid: WaveGrid,
    u_series: FieldSeries,
    initials: list[np.ndarray],
    forcings: list,
    t0: float,
    dt: float,
    n_steps: int,
) -> list[np.ndarray]:
    """Classical RK4 march of the co-marched problems; returns stacked samples."""
    rhs = _StageRHS(grid, u_series, forcings)
    states = [np.array(f, dtype=np.complex128) for f in initials]
    stores = [np.empty((n_steps + 1,) + f.shape, dtype=np.complex128) for f in states]
    for st, f in zip(stores, states):
        st[0] = f
    for step in range(n_steps):
        t = t0 + step * dt
        k1 = rhs(t, states)
        k2 = rhs(t + dt / 2, [f + (dt / 2) * k for f, k in zip(states, k1)])
        k3 = rhs(t + dt / 2, [f + (dt / 2) * k for f, k in zip(states, k2)])
        k4 = rhs(t + dt, [f + dt * k for f, k in zip(states, k3)])
        for i, f in enumerate(states):
            f += (dt / 6) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
            if not np.all(np.isfinite(f)):
                raise SolverError(f"NaN or Inf detected at step {step + 1} (t={t + dt:g})")
            stores[i][step + 1] = f
    return stores


def solve_galerkin(problem: TransportProblem) -> FieldSeries:
    """RK4 march of the dealiased Galerkin truncation; samples at every step.

    For zero forcing and divergence-free velocity the L2 norm of the solution
    is conserved up to time-integration error.
    """
    problem.validate()
    grid = problem.initial.grid
    n_steps = problem.n_steps
    stores = _march_rk4(
        grid,
        problem.velocity,
        [problem.initial.coeffs],
        [problem.forcing],
        problem.t0,
        problem.dt,
        n_steps,
    )
    return FieldSeries(grid, problem.step_times(), stores[0])


def solve_galerkin_pair(
    problem_a: TransportProblem, problem_b: TransportProblem
) -> tuple[FieldSeries, FieldSeries]:
    """Co-march two problems sharing the same velocity, dt and window.

    Used by the fixed-point map, where the displacement and virtual-velocity
    transports always travel together; sharing the per-stage velocity
    transform roughly halves the cost.
    """
    if problem_a.velocity is not problem_b.velocity or problem_a.dt != problem_b.dt:
        raise SolverError("paired problems must share velocity and dt")
    problem_a.validate()
    grid = problem_a.initial.grid
    stores = _march_rk4(
        grid,
        problem_a.velocity,
        [problem_a.initial.coeffs, problem_b.initial.coeffs],
        [problem_a.forcing, problem_b.forcing],
        problem_a.t0,
        problem_a.dt,
        problem_a.n_steps,
    )
    times = problem_a.step_times()
    return FieldSeries(grid, times, stores[0]), FieldSeries(grid, times, stores[1])


def solve_characteristics(
    problem: TransportProblem, times: np.ndarray | None = None
) -> FieldSeries:
    """Method-of-characteristics backend.

    For each output time t and every grid node x the characteristic ODE
    dz/ds = u(z, s) is integrated backward from (x, t) to s = 0 with RK4; the
    initial data is evaluated at the foot by exact trigonometric summation
    and the forcing is accumulated along the path with the same RK4 stages.
    O(N^dim) work per node and output time, so callers usually request only
    the times they need.
    """
    problem.validate()
    grid = problem.initial.grid
    step_times = problem.step_times()
    if times is None:
        times = step_times
    times = np.asarray(times, dtype=np.float64)
    dt = problem.dt
    m = problem.initial.ncomp
    nodes = grid.nodes_flat()
    data = np.empty((len(times), m) + grid.shape, dtype=np.complex128)
    for it, t in enumerate(times):
        n_back = int(round((t - problem.t0) / dt))
        if abs(problem.t0 + n_back * dt - t) > 1e-9:
            raise SolverError(f"output time {t} is not on the step grid")
        if n_back == 0:
            data[it] = problem.initial.coeffs
            continue
        z = nodes.copy()
        q = np.zeros((m, len(nodes)))
        for j in range(n_back):
            s = t - j * dt
            z, q = _char_rk4_step(problem, z, q, s, -dt)
        # q holds the forcing integral from t down to 0, i.e. minus the
        # forward-in-time integral along the characteristic
        vals = eval_at_points(grid, problem.initial.coeffs, z) - q
        f_t = to_spectral(grid, vals.reshape((m,) + grid.shape))
        data[it] = f_t.coeffs
    return FieldSeries(grid, times, data)


def _char_velocity_forcing(problem, z, s):
    grid = problem.velocity.grid
    u_c = problem.velocity.coeffs_at(s)
    forcing = problem.forcing
    if forcing == "minus-velocity":
        vals = eval_at_points(grid, u_c, z)
        return vals.T, -vals
    if forcing == "zero":
        vals = eval_at_points(grid, u_c, z)
        return vals.T, None
    g_c = forcing.coeffs_at(s)
    stacked = eval_at_points(grid, np.concatenate([u_c, g_c]), z)
    return stacked[: grid.dim].T, stacked[grid.dim :]


def _char_rk4_step(problem, z, q, s, h):
    """One RK4 step of the augmented system (position, forcing integral)."""

    def rates(zc, sc):
        vel, g = _char_velocity_forcing(problem, zc, sc)
        return vel, (g if g is not None else 0.0)

    v1, g1 = rates(z, s)
    v2, g2 = rates(z + (h / 2) * v1, s + h / 2)
    v3, g3 = rates(z + (h / 2) * v2, s + h / 2)
    v4, g4 = rates(z + h * v3, s + h)
    z_new = z + (h / 6) * (v1 + 2 * v2 + 2 * v3 + v4)
    q_new = q + (h / 6) * (g1 + 2 * g2 + 2 * g3 + g4)
    if not np.all(np.isfinite(z_new)):
        raise SolverError("NaN in characteristic integration")
    return z_new, q_new


def gronwall_envelope(
    norm_at_r: float,
    u_norm: float,
    g_norm: float,
    c4: float,
    span: float,
    return_branch: bool = False,
):
    """Exponential envelope for the H^s norm of a transported field.

        (norm_at_r + g/(C4 u)) exp(C4 span u) - g/(C4 u)

    with u = sup-in-time H^s norm of the velocity and g that of the forcing.
    For u_norm = 0 the natural limit norm_at_r + g_norm * span is returned;
    set return_branch=True to learn which branch was used.
    """
    if c4 <= 0:
        raise ValueError(f"growth constant must be positive, got {c4}")
    if span < 0 or norm_at_r < 0 or g_norm < 0 or u_norm < 0:
        raise ValueError("norms and time span must be nonnegative")
    if u_norm == 0.0:
        value, branch = norm_at_r + g_norm * span, "zero-velocity-limit"
    else:
        ratio = g_norm / (c4 * u_norm)
        value = (norm_at_r + ratio) * math.exp(c4 * span * u_norm) - ratio
        branch = "standard"
    return (value, branch) if return_branch else value
