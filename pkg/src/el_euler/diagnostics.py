"""Empirical estimation of the analysis constants and runtime inequality checks.

Every norm inequality used by the contraction argument is probed on seeded
random ensembles: the constant is the worst observed ratio times a 1.2 safety
margin, and a held-out ensemble with disjoint seeds must then satisfy the
bound.  Constants are empirical maxima, not analytic values; the theory only
needs their existence.

Inequality ids:
    advection_hs          |(u.grad)v|_{H^s}      <= C1 |u|_{H^s} |v|_{H^{s+1}}
    advection_pairing     |((u.grad)v, v)_{H^s}| <= C2 |u|_{H^s} |v|_{H^s}^2
    weber_hs              |P[(grad e)^T v]|_{H^r} <= C3 |e|_{H^s} |v|_{H^r}, r in {s-1, s}
    weber_lipschitz       difference version on unit balls, X in {L^2, H^{s-1}}
    transport_growth      d|f|_{H^s}/dt <= C4 |u|_{H^s} |f|_{H^s} along transports
    transport_difference  |f1-f2|_{L^2} <= C5 |f1+f2| |u1-u2|_{L^2,sup} t
    composition           |f o (g+id)|_{H^s} <= C6 |f|_{H^s}(|g|_{H^s}+(2pi)^n)^s
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .el import ELState, compose, jacobian_determinant, momentum_residual, weber_projected_product, weber_residual
from .errors import ConfigError, SolverError
from .fixed_point import ELTrajectory, TheoremConstants
from .spectral import (
    SpectralField,
    WaveGrid,
    derivative,
    divergence,
    hs_norm,
    l2_norm,
    leray_project,
    max_pointwise_norm,
    to_physical,
    to_spectral,
)
from .transport import FieldSeries, TransportProblem, advect, gronwall_envelope, solve_galerkin

__all__ = [
    "ProbeSample",
    "BoundCheck",
    "GronwallCheck",
    "ConstantsReport",
    "SweepRow",
    "SweepReport",
    "INEQUALITIES",
    "HELD_OUT_INEQUALITIES",
    "probe_trials_for",
    "random_field",
    "probe_constant",
    "check_bound",
    "exact_skew_ratio",
    "lipschitz_constant",
    "gronwall_check",
    "probe_all",
    "invariant_sweep",
    "trajectory_rows",
]

INEQUALITIES = (
    "advection_hs",
    "advection_pairing",
    "weber_hs",
    "weber_lipschitz",
    "transport_growth",
    "transport_difference",
    "composition",
)

# bounds validated on fresh held-out ensembles; the growth constant is
# validated through the Gronwall envelope instead (gronwall_check)
HELD_OUT_INEQUALITIES = (
    "advection_hs",
    "advection_pairing",
    "weber_hs",
    "weber_lipschitz",
    "transport_difference",
    "composition",
)

SAFETY_MARGIN = 1.2
HELD_OUT_SEED_OFFSET = 10_000

# ratio distributions with heavy tails need larger probe ensembles for the
# max statistic to be stable across seed ranges; these trials are cheap
# (no transport solves), so the boost costs little
PROBE_BOOST = {"advection_pairing": 8, "weber_lipschitz": 8}


def probe_trials_for(inequality: str, base_trials: int) -> int:
    return base_trials * PROBE_BOOST.get(inequality, 1)


@dataclass(frozen=True)
class ProbeSample:
    inequality: str
    lhs: float
    rhs_without_constant: float
    ratio: float
    field_seed: int
    spectrum: str


@dataclass
class BoundCheck:
    inequality: str
    constant: float
    n_trials: int
    passed: bool
    worst_margin: float          # max lhs/(constant*rhs) over trials, <= 1 means pass
    failing_seeds: list[int] = field(default_factory=list)


@dataclass
class GronwallCheck:
    passed: bool
    n_problems: int
    worst_margin: float          # max |f(t)|_{H^s} / envelope(t)
    failing_seeds: list[int] = field(default_factory=list)


def random_field(
    grid: WaveGrid,
    seed: int,
    ncomp: int | None = None,
    decay: float = 4.0,
    cutoff: int | None = None,
    divergence_free: bool = False,
    amplitude: float | None = None,
) -> SpectralField:
    """Seeded random band-limited field with |c(k)| ~ (1+|k|^2)^{-decay/2}.

    Phases are uniform and drawn per mode of the cutoff box in a canonical
    (grid-independent) order, so the same (seed, decay, cutoff) names the
    same continuum field on every resolution that carries it.  Hermitian
    symmetry comes from half-space mirroring, leaving the magnitudes on the
    power law exactly; the cutoff defaults to N/4.  divergence_free applies
    the Leray projection; amplitude rescales to that max pointwise norm.
    """
    if cutoff is None:
        cutoff = grid.n_modes // 4
    if cutoff > grid.n_modes // 2 - 1:
        raise ConfigError(
            f"cutoff {cutoff} collides with the Nyquist modes of N = {grid.n_modes}"
        )
    n = grid.dim
    if ncomp is None:
        ncomp = n
    if divergence_free and ncomp != n:
        raise ConfigError("divergence_free requires one component per dimension")

    side = np.arange(-cutoff, cutoff + 1)
    box = np.meshgrid(*(side,) * n, indexing="ij")
    box_sq = sum(b * b for b in box)
    magnitude = (1.0 + box_sq) ** (-decay / 2.0)
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(ncomp,) + magnitude.shape)
    raw = magnitude * np.exp(1j * phases)

    # lexicographic half space; conjugate-mirror the rest, k = 0 made real
    half = np.zeros(magnitude.shape, dtype=bool)
    undecided = np.ones(magnitude.shape, dtype=bool)
    for b in box:
        half |= undecided & (b > 0)
        undecided &= b == 0
    mirrored = np.conj(raw[(slice(None),) + (slice(None, None, -1),) * n])
    values = np.where(half, raw, mirrored)
    zero_idx = (slice(None),) + (cutoff,) * n
    values[zero_idx] = magnitude[(cutoff,) * n] * np.sign(np.cos(phases[zero_idx]))

    coeffs = np.zeros((ncomp,) + grid.shape, dtype=np.complex128)
    place = np.ix_(range(ncomp), *((side % grid.n_modes),) * n)
    coeffs[place] = values
    f = SpectralField._wrap(grid, coeffs)
    if divergence_free:
        f = leray_project(f)
    if amplitude is not None:
        m = max_pointwise_norm(f)
        if m > 0:
            f = f * (amplitude / m)
    return f


def lipschitz_constant(u0: SpectralField) -> float:
    """Grid maximum of the Frobenius norm of grad u0 (exact for band-limited data)."""
    grads = np.stack(
        [to_physical(derivative(u0, a)) for a in range(u0.grid.dim)]
    )  # (axis, comp, grid)
    return float(np.sqrt((grads**2).sum(axis=(0, 1))).max())


def exact_skew_ratio(grid: WaveGrid, trials: int, seed: int, s: float) -> float:
    """Worst |((u.grad)v, v)_{L2}| ratio for divergence-free u; exactly zero
    in the continuum, rounding-level for the dealiased discrete product."""
    worst = 0.0
    for k in range(trials):
        u = random_field(grid, seed + 3 * k, divergence_free=True)
        v = random_field(grid, seed + 3 * k + 1)
        pairing = abs(
            float(np.real(np.sum(advect(u, v).coeffs * np.conj(v.coeffs))))
        )
        scale = hs_norm(u, s) * hs_norm(v, 1.0) ** 2
        if scale > 0:
            worst = max(worst, pairing / scale)
    return worst


# ---------------------------------------------------------------------------
# per-inequality trial machinery

def _spectrum_tag(grid: WaveGrid, decay: float, cutoff: int | None) -> str:
    cut = grid.n_modes // 4 if cutoff is None else cutoff
    return f"decay={decay:g},cutoff={cut},N={grid.n_modes},n={grid.dim}"


def _unit_ball(f: SpectralField, s: float) -> SpectralField:
    norm = hs_norm(f, s)
    return f * (1.0 / norm) if norm > 1.0 else f


def _composition_catalog(grid: WaveGrid, index: int, rng: np.random.Generator) -> SpectralField:
    """Volume-preserving displacement maps: shears in both directions and
    Taylor-Green forward flow maps at a few times."""
    from .oracle import _catalog_velocity, integrate_trajectories  # no cycle at runtime

    x = grid.nodes()
    zero = np.zeros(grid.shape)
    kind = index % 4
    a = rng.uniform(0.2, 1.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    if kind == 0:
        comps = [a * np.sin(x[1] + phase), zero] + [zero] * (grid.dim - 2)
        return to_spectral(grid, np.stack(comps))
    if kind == 1:
        comps = [zero, a * np.sin(x[0] + phase)] + [zero] * (grid.dim - 2)
        return to_spectral(grid, np.stack(comps))
    if kind == 2:
        shift = rng.uniform(-1.0, 1.0, size=grid.dim)
        return to_spectral(grid, np.stack([np.full(grid.shape, c) for c in shift]))
    t_map = 0.08 * (1 + index % 3)
    key = (grid.dim, grid.n_modes, t_map)
    cached = _TG_MAP_CACHE.get(key)
    if cached is None:
        u = _catalog_velocity("taylor_green", grid)
        series = FieldSeries.constant(u, [0.0, t_map])
        ens = integrate_trajectories(series, grid.n_modes, [t_map], dt=4e-3)
        disp = (ens.positions[0] - ens.labels).T.reshape((grid.dim,) + grid.shape)
        cached = to_spectral(grid, disp)
        _TG_MAP_CACHE[key] = cached
    return cached


_TG_MAP_CACHE: dict[tuple, SpectralField] = {}


def _transport_trial(grid, s, seed, dt, horizon, cutoff=None, two_velocities=False):
    u1 = random_field(grid, seed, divergence_free=True, amplitude=0.5, cutoff=cutoff)
    f0 = random_field(grid, seed + 1, cutoff=cutoff)
    times = [0.0, horizon]
    prob1 = TransportProblem(
        velocity=FieldSeries.constant(u1, times), forcing="zero", initial=f0,
        horizon=horizon, dt=dt, sobolev_index=s,
    )
    if not two_velocities:
        return u1, f0, solve_galerkin(prob1)
    u2 = random_field(grid, seed + 2, divergence_free=True, amplitude=0.5, cutoff=cutoff)
    prob2 = TransportProblem(
        velocity=FieldSeries.constant(u2, times), forcing="zero", initial=f0,
        horizon=horizon, dt=dt, sobolev_index=s,
    )
    return (u1, u2), f0, (solve_galerkin(prob1), solve_galerkin(prob2))


def _trial_sample(
    grid: WaveGrid,
    inequality: str,
    s: float,
    seed: int,
    dt: float,
    horizon: float,
    cutoff: int | None = None,
) -> ProbeSample:
    tag = _spectrum_tag(grid, 4.0, cutoff)
    if inequality == "advection_hs":
        u = random_field(grid, seed, cutoff=cutoff)
        v = random_field(grid, seed + 1, cutoff=cutoff)
        lhs = hs_norm(advect(u, v), s)
        rhs = hs_norm(u, s) * hs_norm(v, s + 1.0)
    elif inequality == "advection_pairing":
        u = random_field(grid, seed, divergence_free=True, cutoff=cutoff)
        v = random_field(grid, seed + 1, cutoff=cutoff)
        lhs = abs(
            float(np.real(np.sum(grid.sobolev_weight(s) * advect(u, v).coeffs * np.conj(v.coeffs))))
        )
        rhs = hs_norm(u, s) * hs_norm(v, s) ** 2
    elif inequality == "weber_hs":
        eta = random_field(grid, seed, cutoff=cutoff)
        v = random_field(grid, seed + 1, cutoff=cutoff)
        w = weber_projected_product(eta, v)
        lhs, rhs = 0.0, 1.0
        ratio = 0.0
        for r in (s, s - 1.0):
            rr = hs_norm(eta, s) * hs_norm(v, r)
            ll = hs_norm(w, r)
            if rr > 0 and ll / rr > ratio:
                lhs, rhs, ratio = ll, rr, ll / rr
    elif inequality == "weber_lipschitz":
        eta1 = _unit_ball(random_field(grid, seed, cutoff=cutoff), s)
        eta2 = _unit_ball(random_field(grid, seed + 1, cutoff=cutoff), s)
        v1 = _unit_ball(random_field(grid, seed + 2, cutoff=cutoff), s)
        v2 = _unit_ball(random_field(grid, seed + 3, cutoff=cutoff), s)
        diff = weber_projected_product(eta1, v1) - weber_projected_product(eta2, v2)
        lhs, rhs = 0.0, 1.0
        best = 0.0
        for r in (0.0, s - 1.0):
            rr = hs_norm(eta1 - eta2, r) + hs_norm(v1 - v2, r)
            ll = hs_norm(diff, r)
            if rr > 0 and ll / rr > best:
                lhs, rhs, best = ll, rr, ll / rr
    elif inequality == "transport_growth":
        u, f0, series = _transport_trial(grid, s, seed, dt, horizon, cutoff=cutoff)
        u_hs = hs_norm(u, s)
        norms = np.array([hs_norm(series.sample(i), s) for i in range(series.n_samples)])
        t = series.times
        best = 0.0
        for i in range(1, len(t) - 1):
            rate = (norms[i + 1] - norms[i - 1]) / (t[i + 1] - t[i - 1])
            denom = u_hs * norms[i]
            if denom > 0:
                best = max(best, rate / denom)
        lhs, rhs = best, 1.0
    elif inequality == "transport_difference":
        (u1, u2), f0, (s1, s2) = _transport_trial(
            grid, s, seed, dt, horizon, cutoff=cutoff, two_velocities=True
        )
        du = l2_norm(u1 - u2)
        best, lhs, rhs = 0.0, 0.0, 1.0
        sum_sup = max(
            hs_norm(s1.sample(i) + s2.sample(i), s) for i in range(s1.n_samples)
        )
        for i in range(1, s1.n_samples):
            t = float(s1.times[i])
            ll = l2_norm(s1.sample(i) - s2.sample(i))
            rr = sum_sup * du * t
            if rr > 0 and ll / rr > best:
                lhs, rhs, best = ll, rr, ll / rr
    elif inequality == "composition":
        if not float(s).is_integer():
            raise ConfigError("composition bound requires integer s")
        rng = np.random.default_rng(seed)
        f = random_field(grid, seed + 1, cutoff=cutoff)
        g_map = _composition_catalog(grid, seed % 12, rng)
        lhs = hs_norm(compose(f, g_map), s)
        rhs = hs_norm(f, s) * (hs_norm(g_map, s) + (2.0 * math.pi) ** grid.dim) ** s
        tag += ",maps=shear+tg"
    else:
        raise ConfigError(f"unknown inequality {inequality!r}; choose from {INEQUALITIES}")
    ratio = lhs / rhs if rhs > 0 else 0.0
    return ProbeSample(inequality, float(lhs), float(rhs), float(ratio), seed, tag)


def probe_constant(
    grid: WaveGrid,
    inequality: str,
    trials: int,
    seed: int,
    s: float,
    dt: float = 2e-3,
    horizon: float = 0.1,
    cutoff: int | None = None,
) -> tuple[float, list[ProbeSample]]:
    """Worst ratio over the trial ensemble, reported with the 1.2x margin."""
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    samples = [
        _trial_sample(grid, inequality, s, seed + 101 * k, dt, horizon, cutoff=cutoff)
        for k in range(trials)
    ]
    worst = max(sample.ratio for sample in samples)
    return SAFETY_MARGIN * max(worst, 1e-12), samples


def check_bound(
    grid: WaveGrid,
    inequality: str,
    constant: float,
    fresh_trials: int,
    seed: int,
    s: float,
    dt: float = 2e-3,
    horizon: float = 0.1,
    cutoff: int | None = None,
) -> BoundCheck:
    """Assert lhs <= constant * rhs on a fresh ensemble (disjoint seeds).

    Zero-over-zero trials count as passes; any violation records the seed so
    the failure is reproducible.
    """
    failing = []
    worst = 0.0
    for k in range(fresh_trials):
        trial_seed = seed + 101 * k
        sample = _trial_sample(grid, inequality, s, trial_seed, dt, horizon, cutoff=cutoff)
        if sample.lhs == 0.0:
            continue  # vacuous trial (zero over zero counts as a pass)
        denom = constant * sample.rhs_without_constant
        margin = sample.lhs / denom if denom > 0.0 else math.inf
        worst = max(worst, margin)
        if margin > 1.0:
            failing.append(trial_seed)
    return BoundCheck(
        inequality=inequality,
        constant=constant,
        n_trials=fresh_trials,
        passed=not failing,
        worst_margin=worst,
        failing_seeds=failing,
    )


def gronwall_check(
    grid: WaveGrid,
    c4: float,
    n_problems: int,
    seed: int,
    s: float,
    dt: float = 2e-3,
    horizon: float = 0.1,
) -> GronwallCheck:
    """Envelope validation: |f(t)|_{H^s} <= envelope(t) on random transports.

    Cycles zero, constant-field and minus-velocity forcings.
    """
    failing = []
    worst = 0.0
    for k in range(n_problems):
        trial_seed = seed + 101 * k
        u = random_field(grid, trial_seed, divergence_free=True, amplitude=0.5)
        f0 = random_field(grid, trial_seed + 1)
        times = [0.0, horizon]
        choice = k % 3
        if choice == 0:
            forcing, g_norm = "zero", 0.0
        elif choice == 1:
            g = random_field(grid, trial_seed + 2)
            forcing, g_norm = FieldSeries.constant(g, times), hs_norm(g, s)
        else:
            forcing, g_norm = "minus-velocity", hs_norm(u, s)
        problem = TransportProblem(
            velocity=FieldSeries.constant(u, times), forcing=forcing, initial=f0,
            horizon=horizon, dt=dt, sobolev_index=s,
        )
        series = solve_galerkin(problem)
        u_norm = hs_norm(u, s)
        f0_norm = hs_norm(f0, s)
        # skip t = 0 where the envelope equals the data norm by construction
        for i in range(1, series.n_samples):
            span = float(series.times[i])
            bound = gronwall_envelope(f0_norm, u_norm, g_norm, c4, span)
            value = hs_norm(series.sample(i), s)
            if bound > 0:
                worst = max(worst, value / bound)
            if value > bound * (1.0 + 1e-12):
                failing.append(trial_seed)
                break
    return GronwallCheck(
        passed=not failing, n_problems=n_problems, worst_margin=worst, failing_seeds=failing
    )


# ---------------------------------------------------------------------------
# assembled constants report

@dataclass
class ConstantsReport:
    """Probed constants with the ensemble description that produced them.

    The theorem_* fields are filled by the probe command: the contraction
    prefactor evaluated for the configured data, ball radius and horizon.
    """

    constants: TheoremConstants
    grid_n: int
    dim: int
    s: float
    trials: int
    seed: int
    ratios: dict[str, list[float]] = field(default_factory=dict)
    theorem_value: float | None = None
    ball_lhs: float | None = None
    ball_holds: bool | None = None
    big_m: float | None = None
    horizon: float | None = None

    def to_json(self) -> str:
        payload = {
            "constants": asdict(self.constants),
            "grid_n": self.grid_n,
            "dim": self.dim,
            "s": self.s,
            "trials": self.trials,
            "seed": self.seed,
            "ratios": self.ratios,
            "theorem_value": self.theorem_value,
            "ball_lhs": self.ball_lhs,
            "ball_holds": self.ball_holds,
            "big_m": self.big_m,
            "horizon": self.horizon,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConstantsReport":
        try:
            payload = json.loads(text)
            constants = TheoremConstants(**payload["constants"])
            return cls(
                constants=constants,
                grid_n=int(payload["grid_n"]),
                dim=int(payload["dim"]),
                s=float(payload["s"]),
                trials=int(payload["trials"]),
                seed=int(payload["seed"]),
                ratios={k: list(map(float, v)) for k, v in payload.get("ratios", {}).items()},
                theorem_value=payload.get("theorem_value"),
                ball_lhs=payload.get("ball_lhs"),
                ball_holds=payload.get("ball_holds"),
                big_m=payload.get("big_m"),
                horizon=payload.get("horizon"),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"malformed constants report: {exc}") from exc


_CONSTANT_FIELD = {
    "advection_hs": "c1",
    "advection_pairing": "c2",
    "weber_hs": "c3",
    "weber_lipschitz": "c3_prime",
    "transport_growth": "c4",
    "transport_difference": "c5",
    "composition": "c6",
}


def probe_all(
    grid: WaveGrid,
    s: float,
    trials: int,
    seed: int,
    u0: SpectralField | None = None,
    dt: float = 2e-3,
) -> ConstantsReport:
    """Probe every inequality and assemble the constants report.

    The Lipschitz constant comes from u0 when given (grid max of |grad u0|),
    otherwise from a representative random divergence-free field.
    """
    values = {}
    ratios = {}
    for name in INEQUALITIES:
        constant, samples = probe_constant(
            grid, name, probe_trials_for(name, trials), seed, s, dt=dt
        )
        values[_CONSTANT_FIELD[name]] = constant
        ratios[name] = [sample.ratio for sample in samples]
    # the transport growth constant is the trilinear pairing constant sampled
    # along flows; anchor it with the random-pair ensemble as well
    values["c4"] = max(values["c4"], values["c2"])
    ref = u0 if u0 is not None else random_field(grid, seed, divergence_free=True, amplitude=0.5)
    values["c_lip"] = max(lipschitz_constant(ref), 1e-12)
    provenance = (
        f"{_spectrum_tag(grid, 4.0, None)},trials={trials},seed={seed},"
        f"margin={SAFETY_MARGIN},lipschitz_from={'u0' if u0 is not None else 'random'}"
    )
    constants = TheoremConstants(provenance=provenance, **values)
    return ConstantsReport(
        constants=constants, grid_n=grid.n_modes, dim=grid.dim, s=s, trials=trials, seed=seed,
        ratios=ratios,
    )


# ---------------------------------------------------------------------------
# trajectory invariant sweep

@dataclass(frozen=True)
class SweepRow:
    time: float
    div_residual: float
    energy_drift: float
    det_residual: float
    weber_residual: float
    classical_residual: float


@dataclass
class SweepReport:
    rows: list[SweepRow]
    tolerances: dict[str, float]
    flags: list[str]

    @property
    def passed(self) -> bool:
        return not self.flags


DEFAULT_SWEEP_TOLERANCES = {
    "div_residual": 1e-8,
    "energy_drift": 1e-7,
    "det_residual": 1e-5,
    "weber_residual": 1e-4,
    "classical_residual": 1e-3,
}


def trajectory_rows(traj: ELTrajectory, s: float) -> list[SweepRow]:
    """Per-sample invariant columns for a solved trajectory."""
    rows = []
    energy0 = l2_norm(traj.u0)
    m = traj.n_samples
    times = traj.times
    for i in range(m):
        state = traj.state(i)
        div_res = hs_norm(divergence(state.u), s - 1.0)
        energy = l2_norm(state.u)
        drift = abs(energy - energy0) / energy0 if energy0 > 0 else abs(energy)
        det_res = float(np.abs(jacobian_determinant(state.eta) - 1.0).max())
        weber_res = weber_residual(state, traj.u0)
        if m >= 3:
            j = min(max(i, 1), m - 2)
            window = (traj.state(j - 1), traj.state(j), traj.state(j + 1))
            tt = (float(times[j - 1]), float(times[j]), float(times[j + 1]))
            classical = momentum_residual(window, tt, at=1 + (i - j))
        else:
            classical = 0.0
        rows.append(SweepRow(float(times[i]), div_res, drift, det_res, weber_res, classical))
    return rows


def invariant_sweep(
    traj: ELTrajectory, s: float, tolerances: dict[str, float] | None = None
) -> SweepReport:
    """Tabulate the per-time invariants and flag any column beyond tolerance."""
    tols = dict(DEFAULT_SWEEP_TOLERANCES)
    if tolerances:
        tols.update(tolerances)
    rows = trajectory_rows(traj, s)
    flags = []
    for name, tol in tols.items():
        worst = max(getattr(row, name) for row in rows) if rows else 0.0
        if worst > tol:
            flags.append(f"{name}: max {worst:.3e} exceeds {tol:g}")
    return SweepReport(rows=rows, tolerances=tols, flags=flags)
