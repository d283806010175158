"""Solver configuration: flat key = value files mapped onto SolverConfig."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

SCHEMES = ("u_scheme", "a_scheme", "classical_oracle")
BACKENDS = ("galerkin", "characteristics")


@dataclass
class SolverConfig:
    n: int = 2
    N: int = 32
    s: float = 3.0
    scheme: str = "u_scheme"
    transport_backend: str = "galerkin"
    dt: float = 1e-3
    total_T: float = 0.25
    window_T: float = 0.25
    fp_tol: float = 1e-8
    min_window: float = 4e-3
    max_iters: int = 60
    initial_condition: str = "taylor_green"
    output_dir: str = "el_euler_out"
    seed: int = 0

    def validate(self) -> "SolverConfig":
        if self.n not in (2, 3):
            raise ConfigError(f"n must be 2 or 3, got {self.n}")
        if self.N < 8 or self.N % 2:
            raise ConfigError(f"N must be even and at least 8, got {self.N}")
        bound = self.n / 2 + 1
        if not self.s > bound:
            raise ConfigError(f"s must exceed n/2 + 1 = {bound:g}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.scheme == "a_scheme" and not float(self.s).is_integer():
            raise ConfigError(f"a_scheme requires an integer Sobolev index, got s = {self.s}")
        if self.scheme == "classical_oracle" and self.n != 2:
            raise ConfigError("classical_oracle is restricted to n = 2")
        if self.transport_backend not in BACKENDS:
            raise ConfigError(
                f"transport_backend must be one of {BACKENDS}, got {self.transport_backend!r}"
            )
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        for name in ("total_T", "window_T"):
            value = getattr(self, name)
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
            steps = round(value / self.dt)
            if steps < 1 or abs(steps * self.dt - value) > 1e-9 * max(1.0, value):
                raise ConfigError(f"{name} = {value} is not an integer multiple of dt = {self.dt}")
        if self.window_T > self.total_T + 1e-12:
            raise ConfigError("window_T cannot exceed total_T")
        if self.fp_tol <= 0:
            raise ConfigError(f"fp_tol must be positive, got {self.fp_tol}")
        if self.min_window < self.dt:
            raise ConfigError(
                f"min_window must be at least dt = {self.dt}, got {self.min_window}"
            )
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be at least 1, got {self.max_iters}")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(SolverConfig)}


def _convert(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config_text(text: str) -> SolverConfig:
    """Parse the flat key = value format; unknown keys are errors."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown configuration key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    return SolverConfig(**values).validate()


def load_config(path: str | Path) -> SolverConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


def write_config(cfg: SolverConfig, path: str | Path) -> None:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(SolverConfig)]
    Path(path).write_text("\n".join(lines) + "\n")
