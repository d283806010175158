"""Constructive fixed-point iterations for the Eulerian-Lagrangian system.

Two schemes are provided.  The velocity scheme applies the map

    S u = P[(grad eta)^T v + v]

where eta solves the displacement transport (forcing -u, zero initial data)
and v the virtual-velocity transport (zero forcing, initial data u0) under
the current iterate u, and contracts in the sup-in-time L2 distance.  The
alternative scheme iterates on the displacement itself: v is reconstructed
by composing u0 with the labels map, u by the Weber formula, and the next
displacement solves its transport under that u (integer Sobolev index only).

Window lengths adapt: three consecutive non-contracting sweeps halve the
window and restart, honoring the fact that the map contracts on every
sufficiently short horizon without requiring sharp constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SolverConfig
from .el import ELState, compose, jacobian_determinant, weber_velocity
from .errors import ConvergenceError, SolverError
from .spectral import SpectralField, divergence, hs_norm, l2_norm
from .transport import (
    FieldSeries,
    TransportProblem,
    solve_characteristics,
    solve_galerkin,
    solve_galerkin_pair,
)

__all__ = [
    "SweepRecord",
    "IterationState",
    "IterationResult",
    "TheoremConstants",
    "TheoremConstantReport",
    "WindowRecord",
    "ELTrajectory",
    "s_map",
    "iterate_u_scheme",
    "iterate_a_scheme",
    "advance_windows",
    "theorem_constant",
]

BALL_SAFETY = 1.25
NONCONTRACTION_STREAK = 3
A_SCHEME_DET_TOL = 1e-5


@dataclass(frozen=True)
class SweepRecord:
    iterate_index: int
    l2_distance: float
    ratio: float            # nan for the first sweep
    hs_sup: float


@dataclass
class IterationState:
    """The live iterate: field series over the window plus its metrics."""

    iterate_index: int
    u: FieldSeries
    eta: FieldSeries
    v: FieldSeries
    l2_distance: float
    hs_sup: float
    ball_M: float


@dataclass
class IterationResult:
    state: IterationState
    sweeps: list[SweepRecord]
    window: tuple[float, float]
    halvings: int
    converged: bool


@dataclass(frozen=True)
class TheoremConstants:
    """Empirically probed constants entering the contraction prefactor."""

    c1: float
    c2: float
    c3: float
    c3_prime: float
    c4: float
    c5: float
    c6: float
    c_lip: float
    provenance: str = ""

    def __post_init__(self):
        for name in ("c1", "c2", "c3", "c3_prime", "c4", "c5", "c6", "c_lip"):
            if not getattr(self, name) > 0:
                raise ValueError(f"constant {name} must be strictly positive")


@dataclass(frozen=True)
class TheoremConstantReport:
    value: float
    ball_lhs: float
    ball_holds: bool


def theorem_constant(
    c: TheoremConstants, big_m: float, horizon: float, u0_norm: float
) -> TheoremConstantReport:
    """Contraction prefactor C(u0, M, T) and the ball self-map condition.

        C = 2T[(C5(C3'M+1)|u0| + C3'C5M/C4) exp(C4 T M) + C3'M(1/2 - C5/C4)]

    and the ball condition exp(C4TM)|u0|(C3/C4[exp(C4TM)-1]+1) <= M.  The
    iteration never gates on these; they are diagnostics relating the run to
    the existence theory.
    """
    e = math.exp(c.c4 * horizon * big_m)
    value = 2.0 * horizon * (
        (c.c5 * (c.c3_prime * big_m + 1.0) * u0_norm + c.c3_prime * c.c5 * big_m / c.c4) * e
        + c.c3_prime * big_m * (0.5 - c.c5 / c.c4)
    )
    ball_lhs = e * u0_norm * ((c.c3 / c.c4) * (e - 1.0) + 1.0)
    return TheoremConstantReport(value=value, ball_lhs=ball_lhs, ball_holds=ball_lhs <= big_m)


def _require_div_free(u0: SpectralField, s: float, tol: float = 1e-8) -> None:
    d = hs_norm(divergence(u0), max(s - 1.0, 0.0))
    if d > tol:
        raise SolverError(f"initial velocity is not divergence-free (residual {d:.3e})")


def s_map(
    u: FieldSeries,
    u0: SpectralField,
    dt: float,
    sobolev_index: float = 3.0,
    backend: str = "galerkin",
) -> tuple[FieldSeries, FieldSeries, FieldSeries]:
    """One application of the velocity map: returns (Su, eta, v) series.

    eta solves the displacement transport (forcing -u, eta(t0) = 0) and v the
    virtual-velocity transport (forcing 0, v(t0) = u0) under u; Su applies
    the Weber reconstruction at every sample time.  Su(t0) equals u0 (up to
    projection rounding) no matter what u(t0) was.
    """
    grid = u0.grid
    t0, t1 = float(u.times[0]), float(u.times[-1])
    eta_problem = TransportProblem(
        velocity=u,
        forcing="minus-velocity",
        initial=SpectralField.zeros(grid, grid.dim),
        horizon=t1 - t0,
        dt=dt,
        t0=t0,
        sobolev_index=sobolev_index,
    )
    v_problem = TransportProblem(
        velocity=u,
        forcing="zero",
        initial=u0,
        horizon=t1 - t0,
        dt=dt,
        t0=t0,
        sobolev_index=sobolev_index,
    )
    if backend == "galerkin":
        eta_series, v_series = solve_galerkin_pair(eta_problem, v_problem)
    elif backend == "characteristics":
        eta_series = solve_characteristics(eta_problem)
        v_series = solve_characteristics(v_problem)
    else:
        raise SolverError(f"unknown transport backend {backend!r}")
    su = np.empty_like(v_series.data)
    for i in range(eta_series.n_samples):
        su[i] = weber_velocity(eta_series.sample(i), v_series.sample(i)).coeffs
    return FieldSeries(grid, eta_series.times, su), eta_series, v_series


def _constant_series(u0: SpectralField, times: np.ndarray) -> FieldSeries:
    data = np.broadcast_to(u0.coeffs, (len(times),) + u0.coeffs.shape)
    return FieldSeries(u0.grid, times, np.ascontiguousarray(data))


def _window_times(t0: float, n_steps: int, dt: float) -> np.ndarray:
    return t0 + dt * np.arange(n_steps + 1)


def _halve(n_steps: int, dt: float, min_window: float, halvings: int) -> int:
    n_new = n_steps // 2
    if n_new < 1 or n_new * dt < min_window - 1e-12:
        raise ConvergenceError(
            f"window halved {halvings} times to {n_steps * dt:g} without contraction; "
            f"refusing to shrink below min_window = {min_window:g} "
            "(interpreted as approaching the local-existence horizon)"
        )
    return n_new


def iterate_u_scheme(
    u0: SpectralField,
    cfg: SolverConfig,
    t0: float = 0.0,
    window_T: float | None = None,
) -> IterationResult:
    """Picard iteration of the velocity map from the constant-in-time seed.

    Converges when the sup-in-time L2 distance between successive iterates
    drops below cfg.fp_tol; three consecutive sweeps with distance ratio
    >= 1 halve the window and restart.  Raises ConvergenceError when the
    window would shrink below cfg.min_window or max_iters is exhausted.
    """
    _require_div_free(u0, cfg.s)
    width = cfg.window_T if window_T is None else window_T
    n_steps = int(round(width / cfg.dt))
    halvings = 0
    u0_hs = hs_norm(u0, cfg.s)
    while True:
        times = _window_times(t0, n_steps, cfg.dt)
        u_series = _constant_series(u0, times)
        sweeps: list[SweepRecord] = []
        prev_distance = math.inf
        bad_streak = 0
        ball_m = BALL_SAFETY * u0_hs
        restart = False
        for k in range(1, cfg.max_iters + 1):
            su, eta, v = s_map(
                u_series, u0, cfg.dt, sobolev_index=cfg.s, backend=cfg.transport_backend
            )
            d = su.sup_l2_distance(u_series)
            hs_sup = su.sup_hs_norm(cfg.s)
            ratio = d / prev_distance if math.isfinite(prev_distance) and prev_distance > 0 else math.nan
            if k == 1:
                ball_m = BALL_SAFETY * max(u0_hs, hs_sup)
            sweeps.append(SweepRecord(k, d, ratio, hs_sup))
            u_series = su
            if d < cfg.fp_tol:
                state = IterationState(k, su, eta, v, d, hs_sup, ball_m)
                return IterationResult(state, sweeps, (times[0], times[-1]), halvings, True)
            if math.isfinite(ratio) and ratio >= 1.0:
                bad_streak += 1
                if bad_streak >= NONCONTRACTION_STREAK:
                    halvings += 1
                    n_steps = _halve(n_steps, cfg.dt, cfg.min_window, halvings)
                    restart = True
                    break
            else:
                bad_streak = 0
            prev_distance = d
        if restart:
            continue
        raise ConvergenceError(
            f"velocity iteration did not reach fp_tol={cfg.fp_tol:g} in {cfg.max_iters} sweeps "
            f"(last distance {sweeps[-1].l2_distance:.3e}, window {n_steps * cfg.dt:g})"
        )


def _a_scheme_reconstruct(
    eta_series: FieldSeries, u0: SpectralField
) -> tuple[FieldSeries, FieldSeries]:
    """v = u0 o (eta + id) and u = P[(grad eta)^T v + v] at every sample."""
    grid = u0.grid
    v_data = np.empty_like(eta_series.data)
    u_data = np.empty_like(eta_series.data)
    for i in range(eta_series.n_samples):
        eta_i = eta_series.sample(i)
        v_i = compose(u0, eta_i, det_tol=np.inf)
        v_data[i] = v_i.coeffs
        u_data[i] = weber_velocity(eta_i, v_i).coeffs
    times = eta_series.times
    return FieldSeries(grid, times, v_data), FieldSeries(grid, times, u_data)


def iterate_a_scheme(
    u0: SpectralField,
    cfg: SolverConfig,
    t0: float = 0.0,
    window_T: float | None = None,
) -> IterationResult:
    """Fixed-point iteration on the back-to-labels displacement.

    Requires an integer Sobolev index (the composition bound hypothesis).
    Every iterate's labels map must stay volume preserving to 1e-5; drift
    beyond that tolerance is a failure.
    """
    if not float(cfg.s).is_integer():
        raise SolverError(f"a_scheme requires integer Sobolev index, got s = {cfg.s}")
    _require_div_free(u0, cfg.s)
    grid = u0.grid
    width = cfg.window_T if window_T is None else window_T
    n_steps = int(round(width / cfg.dt))
    halvings = 0
    u0_hs = hs_norm(u0, cfg.s)
    while True:
        times = _window_times(t0, n_steps, cfg.dt)
        eta_series = _constant_series(SpectralField.zeros(grid, grid.dim), times)
        sweeps: list[SweepRecord] = []
        prev_distance = math.inf
        bad_streak = 0
        ball_m = BALL_SAFETY * u0_hs
        restart = False
        for k in range(1, cfg.max_iters + 1):
            v_series, u_series = _a_scheme_reconstruct(eta_series, u0)
            problem = TransportProblem(
                velocity=u_series,
                forcing="minus-velocity",
                initial=SpectralField.zeros(grid, grid.dim),
                horizon=times[-1] - times[0],
                dt=cfg.dt,
                t0=times[0],
                sobolev_index=cfg.s,
            )
            if cfg.transport_backend == "galerkin":
                eta_new = solve_galerkin(problem)
            else:
                eta_new = solve_characteristics(problem)
            det_drift = max(
                float(np.abs(jacobian_determinant(eta_new.sample(i)) - 1.0).max())
                for i in range(eta_new.n_samples)
            )
            if det_drift > A_SCHEME_DET_TOL:
                raise ConvergenceError(
                    f"labels-map iterate lost volume preservation: max |det - 1| = "
                    f"{det_drift:.3e} > {A_SCHEME_DET_TOL:g}"
                )
            d = eta_new.sup_l2_distance(eta_series)
            hs_sup = u_series.sup_hs_norm(cfg.s)
            ratio = d / prev_distance if math.isfinite(prev_distance) and prev_distance > 0 else math.nan
            if k == 1:
                ball_m = BALL_SAFETY * max(u0_hs, hs_sup)
            sweeps.append(SweepRecord(k, d, ratio, hs_sup))
            eta_series = eta_new
            if d < cfg.fp_tol:
                v_final, u_final = _a_scheme_reconstruct(eta_series, u0)
                state = IterationState(
                    k, u_final, eta_series, v_final, d, u_final.sup_hs_norm(cfg.s), ball_m
                )
                return IterationResult(state, sweeps, (times[0], times[-1]), halvings, True)
            if math.isfinite(ratio) and ratio >= 1.0:
                bad_streak += 1
                if bad_streak >= NONCONTRACTION_STREAK:
                    halvings += 1
                    n_steps = _halve(n_steps, cfg.dt, cfg.min_window, halvings)
                    restart = True
                    break
            else:
                bad_streak = 0
            prev_distance = d
        if restart:
            continue
        raise ConvergenceError(
            f"labels iteration did not reach fp_tol={cfg.fp_tol:g} in {cfg.max_iters} sweeps "
            f"(last distance {sweeps[-1].l2_distance:.3e}, window {n_steps * cfg.dt:g})"
        )


@dataclass
class WindowRecord:
    t_start: float
    t_end: float
    sweeps: list[SweepRecord]
    halvings: int
    energy_drift: float
    det_residual: float

    @property
    def final_ratio(self) -> float:
        for rec in reversed(self.sweeps):
            if math.isfinite(rec.ratio):
                return rec.ratio
        return math.nan


@dataclass
class ELTrajectory:
    """Global solution over [0, total_T]: kept samples of u, eta, v."""

    u: FieldSeries
    eta: FieldSeries
    v: FieldSeries
    u0: SpectralField
    windows: list[WindowRecord] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return self.u.times

    @property
    def n_samples(self) -> int:
        return self.u.n_samples

    def state(self, i: int) -> ELState:
        return ELState(
            u=self.u.sample(i),
            eta=self.eta.sample(i),
            v=self.v.sample(i),
            time=float(self.u.times[i]),
        )

    def window_ratio_at(self, t: float) -> float:
        for w in self.windows:
            if t <= w.t_end + 1e-12:
                return w.final_ratio
        return self.windows[-1].final_ratio if self.windows else math.nan


def advance_windows(
    u0: SpectralField,
    cfg: SolverConfig,
    total_T: float | None = None,
    store_every: int = 1,
    checkpoint_cb=None,
    t_start: float = 0.0,
    u_start: SpectralField | None = None,
    eta_start: SpectralField | None = None,
    v_start: SpectralField | None = None,
    include_start: bool = True,
) -> ELTrajectory:
    """Chain converged windows into a global trajectory on [t_start, total_T].

    Each window re-seeds the scheme with the previous end velocity; the
    global displacement composes the accumulated labels map with the local
    one, and the global virtual velocity continues by one extra transport
    solve under the converged window velocity.  Energy and volume residuals
    are recorded at every join; checkpoint_cb(time, fields) fires there too.

    u0 is always the time-zero data (it anchors the Weber residual); passing
    u_start/eta_start/v_start resumes from a checkpointed global state, with
    include_start=False suppressing the already-emitted starting sample.
    """
    total = cfg.total_T if total_T is None else total_T
    grid = u0.grid
    iterate = iterate_a_scheme if cfg.scheme == "a_scheme" else iterate_u_scheme

    zero = SpectralField.zeros(grid, grid.dim)
    u_cur = u0 if u_start is None else u_start
    eta_base = zero if eta_start is None else eta_start
    v_base = u0 if v_start is None else v_start
    resumed = eta_start is not None and l2_norm(eta_start) > 0.0
    kept_times = [t_start] if include_start else []
    kept_u = [u_cur.coeffs] if include_start else []
    kept_eta = [eta_base.coeffs] if include_start else []
    kept_v = [v_base.coeffs] if include_start else []
    windows: list[WindowRecord] = []

    t = t_start
    energy0 = l2_norm(u0)
    first = not resumed
    while t < total - 1e-9:
        width = min(cfg.window_T, total - t)
        res = iterate(u_cur, cfg, t0=t, window_T=width)
        u_loc, eta_loc, v_loc = res.state.u, res.state.eta, res.state.v
        t_end = res.window[1]

        if first:
            eta_glob = eta_loc
            v_glob = v_loc
        else:
            # compose the accumulated labels map with the window-local one
            glob_data = np.empty_like(eta_loc.data)
            for i in range(eta_loc.n_samples):
                eta_i = eta_loc.sample(i)
                glob_data[i] = compose(eta_base, eta_i, det_tol=np.inf).coeffs + eta_i.coeffs
            eta_glob = FieldSeries(grid, eta_loc.times, glob_data)
            v_problem = TransportProblem(
                velocity=u_loc,
                forcing="zero",
                initial=v_base,
                horizon=t_end - t,
                dt=cfg.dt,
                t0=t,
                sobolev_index=cfg.s,
            )
            v_glob = solve_galerkin(v_problem)

        for i in range(1, u_loc.n_samples):
            if i % store_every == 0 or i == u_loc.n_samples - 1:
                kept_times.append(float(u_loc.times[i]))
                kept_u.append(u_loc.data[i])
                kept_eta.append(eta_glob.data[i])
                kept_v.append(v_glob.data[i])

        u_cur = u_loc.sample(-1)
        eta_base = eta_glob.sample(-1)
        v_base = v_glob.sample(-1)
        energy_drift = abs(l2_norm(u_cur) - energy0) / energy0 if energy0 > 0 else 0.0
        det_res = float(np.abs(jacobian_determinant(eta_base) - 1.0).max())
        windows.append(
            WindowRecord(t, t_end, res.sweeps, res.halvings, energy_drift, det_res)
        )
        if checkpoint_cb is not None:
            checkpoint_cb(t_end, {"u0": u0, "u": u_cur, "eta": eta_base, "v": v_base})
        t = t_end
        first = False

    times = np.asarray(kept_times)
    return ELTrajectory(
        u=FieldSeries(grid, times, np.stack(kept_u)),
        eta=FieldSeries(grid, times, np.stack(kept_eta)),
        v=FieldSeries(grid, times, np.stack(kept_v)),
        u0=u0,
        windows=windows,
    )
