"""CSV time series and dependency-free SVG line plots for solver runs."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .diagnostics import trajectory_rows
from .fixed_point import ELTrajectory
from .spectral import hs_norm, l2_norm

__all__ = ["CSV_COLUMNS", "trajectory_table", "write_csv", "write_plots"]

CSV_COLUMNS = (
    "time",
    "energy",
    "u_hs",
    "eta_hs",
    "div_residual",
    "det_residual",
    "weber_residual",
    "classical_residual",
    "contraction_ratio",
)


def trajectory_table(traj: ELTrajectory, s: float) -> list[dict]:
    """One CSV row per kept sample: norms, residuals, window contraction ratio."""
    rows = []
    for row, i in zip(trajectory_rows(traj, s), range(traj.n_samples)):
        state = traj.state(i)
        rows.append(
            {
                "time": row.time,
                "energy": l2_norm(state.u) ** 2,
                "u_hs": hs_norm(state.u, s),
                "eta_hs": hs_norm(state.eta, s),
                "div_residual": row.div_residual,
                "det_residual": row.det_residual,
                "weber_residual": row.weber_residual,
                "classical_residual": row.classical_residual,
                "contraction_ratio": traj.window_ratio_at(row.time),
            }
        )
    return rows


def write_csv(path: str | Path, rows: list[dict]) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(repr(float(row[c])) for c in CSV_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n")


def _svg_polyline(times, values, width, height, pad):
    finite = [(t, v) for t, v in zip(times, values) if math.isfinite(v)]
    if not finite:
        return "", (0.0, 1.0), (0.0, 1.0)
    ts = [p[0] for p in finite]
    vs = [p[1] for p in finite]
    t_lo, t_hi = min(ts), max(ts)
    v_lo, v_hi = min(vs), max(vs)
    if t_hi - t_lo < 1e-300:
        t_hi = t_lo + 1.0
    if v_hi - v_lo < 1e-300:
        margin = abs(v_lo) if v_lo else 1.0
        v_lo, v_hi = v_lo - 0.5 * margin, v_hi + 0.5 * margin
    pts = []
    for t, v in finite:
        x = pad + (t - t_lo) / (t_hi - t_lo) * (width - 2 * pad)
        y = height - pad - (v - v_lo) / (v_hi - v_lo) * (height - 2 * pad)
        pts.append(f"{x:.2f},{y:.2f}")
    return " ".join(pts), (t_lo, t_hi), (v_lo, v_hi)


def svg_line_plot(path: str | Path, times, values, title: str) -> None:
    """Minimal standalone SVG: axes, four ticks per axis, one polyline."""
    width, height, pad = 640, 400, 56
    pts, (t_lo, t_hi), (v_lo, v_hi) = _svg_polyline(times, values, width, height, pad)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        'stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for frac in (0.0, 1 / 3, 2 / 3, 1.0):
        x = pad + frac * (width - 2 * pad)
        t_val = t_lo + frac * (t_hi - t_lo)
        parts.append(
            f'<text x="{x:.0f}" y="{height - pad + 18}" text-anchor="middle" font-size="11" '
            f'font-family="sans-serif">{t_val:.3g}</text>'
        )
        y = height - pad - frac * (height - 2 * pad)
        v_val = v_lo + frac * (v_hi - v_lo)
        parts.append(
            f'<text x="{pad - 6}" y="{y:.0f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{v_val:.3g}</text>'
        )
    if pts:
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f6fb2" stroke-width="1.5"/>')
    else:
        parts.append(
            f'<text x="{width / 2:.0f}" y="{height / 2:.0f}" text-anchor="middle" '
            'font-size="13" font-family="sans-serif">no finite data</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def write_plots(out_dir: str | Path, rows: list[dict]) -> list[Path]:
    out_dir = Path(out_dir)
    times = [row["time"] for row in rows]
    written = []
    for column in CSV_COLUMNS[1:]:
        values = [float(row[column]) for row in rows]
        path = out_dir / f"{column}.svg"
        svg_line_plot(path, times, values, column)
        written.append(path)
    return written
