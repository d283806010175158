"""Command line interface: el-euler {run, verify, probe} <config>.

Exit codes: 0 success, 1 configuration error, 2 solver or verification
failure, 3 I/O error; every failure prints one machine-parsable line on
standard error.  EL_EULER_THREADS caps the BLAS/OpenMP thread pools and must
take effect before numpy loads, so the numeric modules are imported lazily
inside the subcommands.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from .config import SolverConfig, load_config
from .errors import CFLError, ConfigError, ELEulerError, SolverError

__all__ = ["main"]

PROBE_TRIALS = 40
HELD_OUT_TRIALS = 100
GRONWALL_PROBLEMS = 20


def _apply_thread_env() -> None:
    threads = os.environ.get("EL_EULER_THREADS")
    if not threads:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, threads)


def _fail(kind: str, code: int, message: str) -> int:
    flat = " ".join(str(message).split())
    print(f"el-euler: error kind={kind} exit={code} msg={flat}", file=sys.stderr)
    return code


def _ensure_outdir(cfg: SolverConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_initial(cfg: SolverConfig, grid):
    """Initial velocity from a catalog key or a checkpoint file."""
    from .checkpoint import is_checkpoint, load_checkpoint
    from .diagnostics import random_field
    from .oracle import _catalog_velocity
    from .spectral import SpectralField

    ic = cfg.initial_condition
    path = Path(ic)
    if path.exists() and path.is_file():
        if not is_checkpoint(path):
            raise ConfigError(f"initial_condition file {ic} is not a checkpoint")
        chk = load_checkpoint(path)
        if chk.dim != cfg.n or chk.n_modes != cfg.N:
            raise ConfigError(
                f"checkpoint grid ({chk.dim}, {chk.n_modes}) does not match config "
                f"({cfg.n}, {cfg.N})"
            )
        missing = {"u0", "u", "eta", "v"} - set(chk.fields)
        if missing:
            raise ConfigError(f"checkpoint lacks fields: {sorted(missing)}")
        return chk.fields["u0"], chk
    if "/" in ic or ic.endswith(".elck"):
        raise ConfigError(f"checkpoint path {ic} does not exist")
    if ic == "random":
        return random_field(grid, cfg.seed, divergence_free=True, cutoff=4, amplitude=0.5), None
    if ic == "perturbed_taylor_green":
        base = _catalog_velocity("taylor_green", grid)
        pert = random_field(grid, cfg.seed, divergence_free=True, cutoff=4, amplitude=0.1)
        return SpectralField._wrap(grid, base.coeffs + pert.coeffs), None
    try:
        return _catalog_velocity(ic, grid), None
    except SolverError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_run(config_path: str) -> int:
    cfg = load_config(config_path)
    from .spectral import WaveGrid

    grid = WaveGrid(cfg.n, cfg.N)
    out = _ensure_outdir(cfg)
    if cfg.scheme == "classical_oracle":
        rows = _run_classical(cfg, grid, out)
    else:
        rows = _run_el(cfg, grid, out)
    from .reporting import write_csv, write_plots

    write_csv(out / "timeseries.csv", rows)
    write_plots(out, rows)
    print(f"run complete: {len(rows)} rows -> {out / 'timeseries.csv'}")
    return 0


def _run_el(cfg: SolverConfig, grid, out: Path) -> list[dict]:
    from .checkpoint import save_checkpoint
    from .fixed_point import advance_windows
    from .reporting import trajectory_table

    u0, chk = _resolve_initial(cfg, grid)

    def checkpoint_cb(time, fields):
        save_checkpoint(out / f"checkpoint_t{time:.6f}.elck", cfg.s, time, fields)

    if chk is None:
        traj = advance_windows(u0, cfg, store_every=1, checkpoint_cb=checkpoint_cb)
    else:
        if abs(chk.s - cfg.s) > 1e-12:
            raise ConfigError(f"checkpoint s = {chk.s} does not match config s = {cfg.s}")
        if chk.time >= cfg.total_T - 1e-12:
            raise ConfigError(
                f"checkpoint time {chk.time} is already at or past total_T = {cfg.total_T}"
            )
        # keep the checkpointed sample so residual stencils match the
        # original run, but re-emit only the rows strictly after it
        traj = advance_windows(
            u0,
            cfg,
            store_every=1,
            checkpoint_cb=checkpoint_cb,
            t_start=chk.time,
            u_start=chk.fields["u"],
            eta_start=chk.fields["eta"],
            v_start=chk.fields["v"],
            include_start=True,
        )
        rows = trajectory_table(traj, cfg.s)
        return [row for row in rows if row["time"] > chk.time + 1e-12]
    return trajectory_table(traj, cfg.s)


def _run_classical(cfg: SolverConfig, grid, out: Path) -> list[dict]:
    from .el import ELState, momentum_residual
    from .oracle import classical_solve
    from .spectral import SpectralField, divergence, hs_norm, l2_norm

    u0, chk = _resolve_initial(cfg, grid)
    if chk is not None:
        raise ConfigError("classical_oracle does not support checkpoint resume")
    u_series, _ = classical_solve(u0, cfg.total_T, cfg.dt)
    zero = SpectralField.zeros(grid, grid.dim)
    rows = []
    m = u_series.n_samples

    def state(i):
        return ELState(u=u_series.sample(i), eta=zero, v=u_series.sample(i),
                       time=float(u_series.times[i]))

    for i in range(m):
        u_i = u_series.sample(i)
        if m >= 3:
            j = min(max(i, 1), m - 2)
            tt = tuple(float(u_series.times[j + o]) for o in (-1, 0, 1))
            classical = momentum_residual((state(j - 1), state(j), state(j + 1)), tt, at=1 + i - j)
        else:
            classical = 0.0
        rows.append(
            {
                "time": float(u_series.times[i]),
                "energy": l2_norm(u_i) ** 2,
                "u_hs": hs_norm(u_i, cfg.s),
                "eta_hs": math.nan,
                "div_residual": hs_norm(divergence(u_i), cfg.s - 1.0),
                "det_residual": math.nan,
                "weber_residual": math.nan,
                "classical_residual": classical,
                "contraction_ratio": math.nan,
            }
        )
    return rows


def _cmd_probe(config_path: str) -> int:
    cfg = load_config(config_path)
    from .diagnostics import probe_all
    from .fixed_point import theorem_constant
    from .spectral import WaveGrid, hs_norm

    grid = WaveGrid(cfg.n, cfg.N)
    out = _ensure_outdir(cfg)
    u0, _ = _resolve_initial(cfg, grid)
    report = probe_all(grid, cfg.s, PROBE_TRIALS, cfg.seed, u0=u0)
    u0_norm = hs_norm(u0, cfg.s)
    big_m = 1.25 * max(u0_norm, 1e-12)
    tc = theorem_constant(report.constants, big_m, cfg.window_T, u0_norm)
    report.theorem_value = tc.value
    report.ball_lhs = tc.ball_lhs
    report.ball_holds = tc.ball_holds
    report.big_m = big_m
    report.horizon = cfg.window_T
    path = out / "constants_report.json"
    path.write_text(report.to_json())
    c = report.constants
    print(
        f"probed constants: c1={c.c1:.4g} c2={c.c2:.4g} c3={c.c3:.4g} "
        f"c3'={c.c3_prime:.4g} c4={c.c4:.4g} c5={c.c5:.4g} c6={c.c6:.4g} "
        f"c_lip={c.c_lip:.4g}"
    )
    print(
        f"contraction prefactor C(u0, M={big_m:.4g}, T={cfg.window_T:g}) = {tc.value:.4g}; "
        f"ball condition {'holds' if tc.ball_holds else 'fails'} "
        f"(lhs {tc.ball_lhs:.4g})"
    )
    print(f"wrote {path}")
    return 0


def _check_line(results: list, name: str, passed: bool, detail: str) -> None:
    results.append((name, passed))
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


def _cmd_verify(config_path: str) -> int:
    cfg = load_config(config_path)
    from .spectral import WaveGrid

    grid = WaveGrid(cfg.n, cfg.N)
    out = _ensure_outdir(cfg)
    results: list[tuple[str, bool]] = []
    if cfg.n == 2:
        _verify_2d(cfg, grid, out, results)
    else:
        _verify_catalog_only(cfg, grid, results)
    failed = [name for name, ok in results if not ok]
    if failed:
        raise SolverError(f"verification failed: {', '.join(failed)}")
    print(f"all {len(results)} verification checks passed")
    return 0


def _verify_2d(cfg: SolverConfig, grid, out: Path, results: list) -> None:
    from .diagnostics import (
        ConstantsReport,
        HELD_OUT_INEQUALITIES,
        HELD_OUT_SEED_OFFSET,
        _CONSTANT_FIELD,
        check_bound,
        exact_skew_ratio,
        gronwall_check,
        invariant_sweep,
        probe_all,
    )
    from .fixed_point import advance_windows
    from .oracle import classical_solve
    from .spectral import l2_norm

    report_path = out / "constants_report.json"
    if report_path.exists():
        report = ConstantsReport.from_json(report_path.read_text())
        print(f"loaded constants from {report_path}")
    else:
        report = probe_all(grid, cfg.s, PROBE_TRIALS, cfg.seed)
        report_path.write_text(report.to_json())
        print(f"probed constants with {PROBE_TRIALS} trials (seed {cfg.seed})")

    for name in HELD_OUT_INEQUALITIES:
        constant = getattr(report.constants, _CONSTANT_FIELD[name])
        chk = check_bound(
            grid, name, constant, HELD_OUT_TRIALS, cfg.seed + HELD_OUT_SEED_OFFSET, cfg.s
        )
        _check_line(
            results, f"bound:{name}", chk.passed,
            f"constant {constant:.4g}, worst margin {chk.worst_margin:.3f} over {chk.n_trials}",
        )

    skew = exact_skew_ratio(grid, 20, cfg.seed + 777, cfg.s)
    _check_line(results, "exact-skew-symmetry", skew < 1e-10, f"worst ratio {skew:.3e}")

    gron = gronwall_check(grid, report.constants.c4, GRONWALL_PROBLEMS, cfg.seed + 999, cfg.s)
    _check_line(
        results, "gronwall-envelope", gron.passed,
        f"worst margin {gron.worst_margin:.4f} over {gron.n_problems} problems",
    )

    for key in ("shear", "taylor_green"):
        u0, _ = _resolve_initial(_with_ic(cfg, key), grid)
        traj = advance_windows(u0, cfg)
        sweep = invariant_sweep(traj, cfg.s)
        detail = "; ".join(sweep.flags) if sweep.flags else "all columns within tolerance"
        _check_line(results, f"benchmark:{key}", sweep.passed, detail)

    u0p, _ = _resolve_initial(_with_ic(cfg, "perturbed_taylor_green"), grid)
    horizon = min(cfg.total_T, 0.25)
    traj = advance_windows(u0p, cfg, total_T=horizon)
    sweep = invariant_sweep(traj, cfg.s)
    detail = "; ".join(sweep.flags) if sweep.flags else "all columns within tolerance"
    _check_line(results, "benchmark:perturbed_taylor_green", sweep.passed, detail)
    u_cl, _ = classical_solve(u0p, horizon, cfg.dt, store_every=max(1, int(round(horizon / cfg.dt))))
    diff = l2_norm(traj.u.sample(-1) - u_cl.sample(-1)) / max(l2_norm(u0p), 1e-30)
    _check_line(results, "classical-agreement", diff < 1e-4, f"relative L2 difference {diff:.3e}")


def _verify_catalog_only(cfg: SolverConfig, grid, results: list) -> None:
    """n = 3 restricted suite: steady exact catalog checks, no 2D oracle."""
    import numpy as np

    from .el import ELState, jacobian_determinant, weber_residual
    from .fixed_point import s_map
    from .oracle import exact_solution
    from .spectral import l2_norm
    from .transport import FieldSeries

    horizon = min(cfg.window_T, 16 * cfg.dt)
    n_steps = int(round(horizon / cfg.dt))
    times = cfg.dt * np.arange(n_steps + 1)
    for key in ("shear", "taylor_green", "translation:0.3,-0.2,0.1"):
        st = exact_solution(key, 0.0, grid)
        series = FieldSeries.constant(st.u, times)
        su, eta, v = s_map(series, st.u, cfg.dt, sobolev_index=cfg.s)
        dist = su.sup_l2_distance(series) / max(l2_norm(st.u), 1e-30)
        _check_line(results, f"steady:{key}", dist < 1e-6, f"relative map residual {dist:.3e}")
        det = max(
            float(np.abs(jacobian_determinant(eta.sample(i)) - 1.0).max())
            for i in range(eta.n_samples)
        )
        _check_line(results, f"volume:{key}", det < 1e-5, f"max |det-1| = {det:.3e}")
        wres = weber_residual(
            ELState(u=su.sample(-1), eta=eta.sample(-1), v=v.sample(-1), time=horizon), st.u
        )
        _check_line(results, f"weber:{key}", wres < 1e-4, f"relative residual {wres:.3e}")


def _with_ic(cfg: SolverConfig, key: str) -> SolverConfig:
    from dataclasses import replace

    return replace(cfg, initial_condition=key)


def main(argv=None) -> int:
    _apply_thread_env()
    parser = argparse.ArgumentParser(
        prog="el-euler",
        description="Pseudo-spectral Eulerian-Lagrangian solver for the incompressible "
        "Euler equations on the torus",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "execute the configured scheme and emit CSV/SVG/checkpoints"),
        ("verify", "probe constants, run held-out bound checks and benchmark sweeps"),
        ("probe", "estimate the analysis constants and write the constants report"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to a flat key = value config file")
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args.config)
        if args.command == "verify":
            return _cmd_verify(args.config)
        return _cmd_probe(args.config)
    except ConfigError as exc:
        return _fail("config", 1, str(exc))
    except (SolverError, CFLError) as exc:
        return _fail("solver", 2, str(exc))
    except ELEulerError as exc:
        return _fail("solver", 2, str(exc))
    except OSError as exc:
        return _fail("io", 3, str(exc))


if __name__ == "__main__":
    sys.exit(main())
