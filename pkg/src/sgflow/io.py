"""Binary trajectory/model files, CSV reports, PGM renders and run configuration.

SGFD (trajectory) header, little-endian, 52 bytes::

    offset  type     field
    0       4s       magic "SGFD"
    4       u16      version (1)
    6       u16      dtype (1 = f64)
    8       u32      frame_count
    12      u32      ny
    16      u32      nx
    20      f64      dt_record
    28      f64      Lx
    36      f64      Ly
    44      f64      Re

followed by ``frame_count * ny * nx`` f64 values, frame-major, row-major.

SGFM (spectral-gain model) header, little-endian, 68 bytes::

    0   4s   magic "SGFM"
    4   u16  version (1)
    6   u16  reserved (0)
    8   u32  time_bins
    12  u32  radial_bins
    16  u32  n
    20  f64  Lx
    28  f64  Ly
    36  f64  scale
    44  f64  beta_min
    52  f64  beta_max
    60  f64  T_diff

followed by ``time_bins * radial_bins`` f64 gains, row-major.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from sgflow.denoiser import SpectralGainDenoiser
from sgflow.diffusion import VpSchedule
from sgflow.errors import FormatError, PayloadLengthError
from sgflow.solver import SolverConfig, Trajectory
from sgflow.spectral import VorticityField, wavenumber_grid

SGFD_MAGIC = b"SGFD"
SGFD_HEADER = struct.Struct("<4sHHIIIdddd")
SGFM_MAGIC = b"SGFM"
SGFM_HEADER = struct.Struct("<4sHHIIIdddddd")
VERSION = 1
DTYPE_F64 = 1


def _write_atomic(path: Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def encode_sgfd(frames: np.ndarray, dt_record: float, Lx: float, Ly: float, Re: float) -> bytes:
    frames = np.asarray(frames, dtype="<f8")
    if frames.ndim != 3:
        raise ValueError(f"frames must be (F, ny, nx), got {frames.shape}")
    count, ny, nx = frames.shape
    header = SGFD_HEADER.pack(SGFD_MAGIC, VERSION, DTYPE_F64, count, ny, nx, dt_record, Lx, Ly, Re)
    return header + np.ascontiguousarray(frames).tobytes()


def decode_sgfd(data: bytes) -> tuple[np.ndarray, dict]:
    if len(data) < SGFD_HEADER.size:
        raise FormatError(len(data), f"truncated header: {len(data)} of {SGFD_HEADER.size} bytes")
    magic, version, dtype, count, ny, nx, dt_record, Lx, Ly, Re = SGFD_HEADER.unpack_from(data)
    if magic != SGFD_MAGIC:
        raise FormatError(0, f"bad magic {magic!r}, expected {SGFD_MAGIC!r}")
    if version != VERSION:
        raise FormatError(4, f"unsupported version {version}")
    if dtype != DTYPE_F64:
        raise FormatError(6, f"unsupported dtype code {dtype}")
    expected = count * ny * nx * 8
    actual = len(data) - SGFD_HEADER.size
    if actual != expected:
        raise PayloadLengthError(
            SGFD_HEADER.size,
            f"payload is {actual} bytes but header declares {count}x{ny}x{nx} f64 ({expected} bytes)",
        )
    frames = np.frombuffer(data, dtype="<f8", offset=SGFD_HEADER.size).reshape(count, ny, nx).astype(np.float64)
    meta = {"dt_record": dt_record, "Lx": Lx, "Ly": Ly, "Re": Re}
    return frames, meta


def write_sgfd(path, traj: Trajectory) -> None:
    cfg = traj.config
    _write_atomic(Path(path), encode_sgfd(traj.array(), cfg.dt_record, cfg.Lx, cfg.Ly, cfg.Re))


def write_frames(path, frames: np.ndarray, dt_record: float, Lx: float, Ly: float, Re: float) -> None:
    _write_atomic(Path(path), encode_sgfd(frames, dt_record, Lx, Ly, Re))


def read_frames(path) -> tuple[np.ndarray, dict]:
    return decode_sgfd(Path(path).read_bytes())


def read_sgfd(path, base: SolverConfig | None = None) -> Trajectory:
    """Read a trajectory; solver settings absent from the file come from ``base``."""
    frames, meta = read_frames(path)
    count, n = frames.shape[0], frames.shape[-1]
    base = base or SolverConfig()
    T = (count - 1) * meta["dt_record"]
    cfg = base.replace(
        Re=meta["Re"], dt_record=meta["dt_record"], Lx=meta["Lx"], Ly=meta["Ly"], n=n, T=T
    )
    fields = [VorticityField(frames[i], meta["Lx"], meta["Ly"], i * meta["dt_record"]) for i in range(count)]
    return Trajectory(frames=fields, config=cfg)


def encode_sgfm(model: SpectralGainDenoiser, schedule: VpSchedule) -> bytes:
    tb, rb = model.gains.shape
    g = model.grid
    header = SGFM_HEADER.pack(
        SGFM_MAGIC, VERSION, 0, tb, rb, g.n, g.Lx, g.Ly, model.scale,
        schedule.beta_min, schedule.beta_max, schedule.T_diff,
    )
    return header + np.ascontiguousarray(model.gains, dtype="<f8").tobytes()


def decode_sgfm(data: bytes) -> tuple[SpectralGainDenoiser, VpSchedule]:
    if len(data) < SGFM_HEADER.size:
        raise FormatError(len(data), f"truncated header: {len(data)} of {SGFM_HEADER.size} bytes")
    magic, version, _, tb, rb, n, Lx, Ly, scale, bmin, bmax, T_diff = SGFM_HEADER.unpack_from(data)
    if magic != SGFM_MAGIC:
        raise FormatError(0, f"bad magic {magic!r}, expected {SGFM_MAGIC!r}")
    if version != VERSION:
        raise FormatError(4, f"unsupported version {version}")
    expected = tb * rb * 8
    actual = len(data) - SGFM_HEADER.size
    if actual != expected:
        raise PayloadLengthError(SGFM_HEADER.size, f"payload is {actual} bytes, expected {expected}")
    gains = np.frombuffer(data, dtype="<f8", offset=SGFM_HEADER.size).reshape(tb, rb).astype(np.float64)
    schedule = VpSchedule(bmin, bmax, T_diff)
    model = SpectralGainDenoiser(grid=wavenumber_grid(n, Lx, Ly), gains=gains, scale=scale, T_diff=T_diff)
    return model, schedule


def write_sgfm(path, model: SpectralGainDenoiser, schedule: VpSchedule) -> None:
    _write_atomic(Path(path), encode_sgfm(model, schedule))


def read_sgfm(path) -> tuple[SpectralGainDenoiser, VpSchedule]:
    return decode_sgfm(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# text outputs


def write_csv(path, header, rows) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def read_csv(path) -> tuple[list[str], list[dict[str, str]]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


def write_pgm(path, field: np.ndarray) -> None:
    """8-bit binary PGM, min/max normalized."""
    f = np.asarray(field, dtype=float)
    lo, hi = float(f.min()), float(f.max())
    scaled = np.zeros_like(f) if hi <= lo else (f - lo) / (hi - lo)
    img = np.round(scaled * 255).astype(np.uint8)
    header = f"P5\n{f.shape[1]} {f.shape[0]}\n255\n".encode("ascii")
    _write_atomic(Path(path), header + img.tobytes())


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def write_json(path, obj) -> None:
    _write_atomic(Path(path), (json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n").encode())


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
