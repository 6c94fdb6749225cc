"""Binary state snapshots: grid metadata plus the raw distribution array,
integrity-checked, bit-exact on round trip.

Only n is stored; density and pressure are always recomputed on load so
stale derived fields cannot leak out of a file.  All multi-byte values
are little-endian; the array is float64 in C order.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .grid import Grid

MAGIC = b"ASGS"
VERSION = 1
_HEADER = struct.Struct("<4sBBHII")      # magic, version, d, pad, N_theta, N_x
_SCALARS = struct.Struct("<ddddq")       # Theta_max, L, t, m, step
_LEN = struct.Struct("<I")


@dataclass(frozen=True)
class Snapshot:
    grid: Grid
    n: np.ndarray
    t: float
    m: float
    step: int
    config_echo: Optional[dict]


def save_snapshot(path, grid, state, step=0, config_echo=None):
    echo_bytes = b""
    if config_echo is not None:
        echo_bytes = json.dumps(config_echo, sort_keys=True).encode("utf-8")
    n = np.ascontiguousarray(state.n, dtype="<f8")
    payload = b"".join([
        _HEADER.pack(MAGIC, VERSION, grid.d, 0, grid.N_theta, grid.N_x),
        _SCALARS.pack(grid.Theta_max, grid.L, state.t, state.m, step),
        _LEN.pack(len(echo_bytes)),
        echo_bytes,
        n.tobytes(order="C"),
    ])
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(_LEN.pack(crc))


def load_snapshot(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read snapshot {path!r}: {exc}")
    if len(blob) < _HEADER.size + _SCALARS.size + 2 * _LEN.size:
        raise ConfigError(f"{path!r} is too short to be a snapshot")
    payload, crc_bytes = blob[:-_LEN.size], blob[-_LEN.size:]
    (crc_stored,) = _LEN.unpack(crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise ConfigError(f"snapshot checksum mismatch in {path!r}")
    magic, version, d, _pad, N_theta, N_x = _HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise ConfigError(f"{path!r} is not a snapshot file (bad magic)")
    if version != VERSION:
        raise ConfigError(f"unsupported snapshot version {version} in {path!r}")
    off = _HEADER.size
    Theta_max, L, t, m, step = _SCALARS.unpack_from(payload, off)
    off += _SCALARS.size
    (echo_len,) = _LEN.unpack_from(payload, off)
    off += _LEN.size
    echo = None
    if echo_len:
        echo = json.loads(payload[off:off + echo_len].decode("utf-8"))
    off += echo_len
    grid = Grid.make(d, N_theta, Theta_max, N_x, L)
    expected = grid.N_theta * grid.N_x ** grid.d * 8
    raw = payload[off:]
    if len(raw) != expected:
        raise ConfigError(
            f"snapshot array size mismatch in {path!r}: {len(raw)} != {expected}")
    n = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(grid.shape)
    return Snapshot(grid=grid, n=n, t=t, m=m, step=step, config_echo=echo)
