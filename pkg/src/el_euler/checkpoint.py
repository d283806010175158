"""Bit-exact binary checkpoints of spectral field collections.

Layout (all little-endian): magic b"ELEU", version u16, n u16, N u32,
s f64, time f64, field count u16; then per field a u16 name length, the
UTF-8 name, and n full complex coefficient arrays, row-major over the mode
grid as (re, im) f64 pairs.  Round trips are bit-exact by construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .spectral import SpectralField, WaveGrid

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint", "is_checkpoint"]

MAGIC = b"ELEU"
VERSION = 1
_HEADER = struct.Struct("<4sHHIddH")


@dataclass
class Checkpoint:
    dim: int
    n_modes: int
    s: float
    time: float
    fields: dict[str, SpectralField]

    @property
    def grid(self) -> WaveGrid:
        return WaveGrid(self.dim, self.n_modes)


def save_checkpoint(
    path: str | Path, s: float, time: float, fields: dict[str, SpectralField]
) -> None:
    if not fields:
        raise ConfigError("checkpoint needs at least one field")
    grids = {f.grid for f in fields.values()}
    if len(grids) != 1:
        raise ConfigError("checkpoint fields must share one grid")
    grid = next(iter(grids))
    for name, f in fields.items():
        if f.ncomp != grid.dim:
            raise ConfigError(f"field {name!r} must have {grid.dim} components")
    blob = bytearray()
    blob += _HEADER.pack(MAGIC, VERSION, grid.dim, grid.n_modes, float(s), float(time), len(fields))
    for name, f in fields.items():
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ConfigError(f"checkpoint {path} is truncated")
    magic, version, dim, n_modes, s, time, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ConfigError(f"{path} is not a checkpoint (bad magic {magic!r})")
    if version != VERSION:
        raise ConfigError(f"unsupported checkpoint version {version}")
    grid = WaveGrid(dim, n_modes)
    per_field = dim * n_modes**dim
    offset = _HEADER.size
    fields: dict[str, SpectralField] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        nbytes = per_field * 16
        if offset + nbytes > len(raw):
            raise ConfigError(f"checkpoint {path} is truncated inside field {name!r}")
        coeffs = np.frombuffer(raw, dtype="<c16", count=per_field, offset=offset)
        offset += nbytes
        coeffs = coeffs.reshape((dim,) + grid.shape).astype(np.complex128)
        fields[name] = SpectralField._wrap(grid, coeffs)
    return Checkpoint(dim=dim, n_modes=n_modes, s=s, time=time, fields=fields)


def is_checkpoint(path: str | Path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(4) == MAGIC
    except OSError:
        return False
