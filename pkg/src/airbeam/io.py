"""File formats: recording container, geometry CSV, metric CSVs and PGM images.

Recording container (all little-endian)::

    offset  size  field
    0       8     magic b"AIRBEAM1"
    8       4     n_channels   uint32
    12      8     n_samples    uint64
    20      8     sample_rate  float64
    28      ...   float32 samples, channel-major (channel 0 first)

The header is therefore 28 bytes.
"""

from __future__ import annotations

import csv
import os
import struct
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Union

import numpy as np

from airbeam.array import MicrophoneArray
from airbeam.signals import MultichannelRecording

PathLike = Union[str, os.PathLike]

MAGIC = b"AIRBEAM1"
_HEADER = struct.Struct("<8sIQd")
HEADER_SIZE = _HEADER.size

# column layouts of every CSV the CLI writes
CSV_SCHEMAS: Dict[str, List[str]] = {
    "psf": ["beamformer", "order", "cf", "peak_direction_index", "peak_time_index",
            "peak_azimuth_deg", "peak_elevation_deg", "peak_sidelobe_db", "dynamic_range_db",
            "beamwidth_deg", "range_width_m", "dynamic_range_2d_db"],
    "image_snr": ["beamformer", "order", "cf", "snr_mic_db", "seed", "snr_image_db", "e_off",
                  "capped", "guard_deg", "guard_samples"],
    "image_snr_mean": ["beamformer", "order", "cf", "snr_mic_db", "n_seeds", "snr_image_db"],
    "resolution": ["beamformer", "order", "cf", "half_angle_deg", "resolved", "dip_db"],
    "resolution_summary": ["beamformer", "order", "cf", "min_resolvable_half_angle_deg"],
    "resolution_profile": ["beamformer", "order", "cf", "half_angle_deg", "azimuth_deg", "level_db"],
    "beamwidth": ["radius_m", "n_mics", "beamformer", "order", "cf", "beamwidth_deg"],
    "beamform_file": ["beamformer", "order", "cf", "n_directions", "n_samples", "peak_azimuth_deg",
                      "peak_elevation_deg", "peak_range_m", "pgm"],
    "bench": ["case", "beamformer", "n_mics", "n_directions", "n_samples", "repeats",
              "median_s", "min_s", "per_pixel_ns"],
}


class RecordingFormatError(ValueError):
    pass


class GeometryFormatError(ValueError):
    pass


def write_recording(rec: MultichannelRecording, path: PathLike) -> None:
    samples = np.ascontiguousarray(rec.samples, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rec.n_channels, rec.n_samples, float(rec.sample_rate)))
        fh.write(samples.tobytes(order="C"))


def read_recording(path: PathLike) -> MultichannelRecording:
    with open(path, "rb") as fh:
        head = fh.read(HEADER_SIZE)
        if len(head) < HEADER_SIZE:
            raise RecordingFormatError(f"{path}: truncated header")
        magic, n_ch, n_s, fs = _HEADER.unpack(head)
        if magic != MAGIC:
            raise RecordingFormatError(f"{path}: bad magic {magic!r}")
        if n_ch < 1 or n_s < 1 or not fs > 0:
            raise RecordingFormatError(f"{path}: invalid header ({n_ch} ch, {n_s} samples, {fs} Hz)")
        expected = n_ch * n_s * 4
        payload = fh.read(expected + 1)
    if len(payload) != expected:
        raise RecordingFormatError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(n_ch, n_s)
    if np.isnan(data).any():
        raise RecordingFormatError(f"{path}: NaN samples")
    if not np.isfinite(data).all():
        raise RecordingFormatError(f"{path}: infinite samples")
    return MultichannelRecording(data.astype(np.float64), fs)


def read_geometry_csv(path: PathLike) -> MicrophoneArray:
    """Microphone positions from a CSV with header ``x,y,z`` (optional ``delay_offset``)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise GeometryFormatError(f"{path}: empty geometry file") from None
        if header[:3] != ["x", "y", "z"] or len(header) not in (3, 4) or \
                (len(header) == 4 and header[3] != "delay_offset"):
            raise GeometryFormatError(f"{path}: header must be x,y,z[,delay_offset], got {','.join(header)}")
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise GeometryFormatError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] != len(header):
        raise GeometryFormatError(f"{path}: expected {len(header)} numeric columns per row")
    offsets = data[:, 3] if data.shape[1] == 4 else None
    try:
        return MicrophoneArray(data[:, :3], offsets)
    except ValueError as exc:
        raise GeometryFormatError(f"{path}: {exc}") from None


def write_geometry_csv(array: MicrophoneArray, path: PathLike) -> None:
    cols = ["x", "y", "z"] + (["delay_offset"] if array.delay_offsets is not None else [])
    rows = []
    for i in range(len(array)):
        row = list(array.positions[i])
        if array.delay_offsets is not None:
            row.append(array.delay_offsets[i])
        rows.append(dict(zip(cols, row)))
    _write_rows(rows, cols, path)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_rows(rows: Iterable[Mapping], columns: Sequence[str], path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def write_csv(rows: Iterable[Mapping], schema: str, path: PathLike) -> None:
    """Write ``rows`` (mappings) using the column order of ``CSV_SCHEMAS[schema]``."""
    if schema not in CSV_SCHEMAS:
        raise KeyError(f"unknown CSV schema {schema!r}")
    _write_rows(rows, CSV_SCHEMAS[schema], path)


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def db_to_gray16(db: np.ndarray, db_floor: float) -> np.ndarray:
    """Map ``[db_floor, 0]`` dB linearly to ``[0, 65535]``, rounding half up."""
    if not db_floor < 0:
        raise ValueError("db_floor must be negative")
    v = (np.asarray(db, dtype=np.float64) - db_floor) / (-db_floor) * 65535.0
    v = np.floor(np.clip(v, 0.0, 65535.0) + 0.5)
    return np.minimum(v, 65535).astype(np.uint16)


def write_pgm(image_db: np.ndarray, db_floor: float, path: PathLike) -> None:
    """Binary 16-bit PGM (P5): rows are directions, columns time samples."""
    gray = db_to_gray16(image_db, db_floor)
    if gray.ndim != 2:
        raise ValueError("image must be two-dimensional")
    rows, cols = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        fh.write(gray.astype(">u2").tobytes())


def read_pgm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows = (int(v) for v in parts[1].split())
    if int(parts[2]) != 65535:
        raise ValueError(f"{path}: expected 16-bit PGM")
    return np.frombuffer(parts[3], dtype=">u2").reshape(rows, cols).astype(np.uint16)
