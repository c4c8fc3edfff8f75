"""Binary field files and deterministic JSON/CSV output.

Binary field format (all integers and floats little-endian)::

    offset  size  content
    0       4     magic b"B4DF"
    4       4     u32 format version (1)
    8       4     u32 dimension d
    12      4     u32 grid size M
    16      4     u32 layout: 0 = spectral (complex, interleaved re/im),
                              1 = physical (real samples)
    20      8     u64 number of fields
    28      ...   float64 data, one field after another, each in row-major
                  order over the M^d grid (FFT index order for spectral data)

Spectral coefficients are normalized by ``M^d`` (the mean of ``f e_{-n}``).
"""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .spectral import Grid, SpectralField, forward_transform, inverse_transform

__all__ = [
    "MAGIC",
    "VERSION",
    "LAYOUT_SPECTRAL",
    "LAYOUT_PHYSICAL",
    "FieldFileError",
    "write_fields",
    "read_fields",
    "write_json",
    "write_csv",
    "to_jsonable",
]

MAGIC = b"B4DF"
VERSION = 1
LAYOUT_SPECTRAL = 0
LAYOUT_PHYSICAL = 1
_HEADER = struct.Struct("<4sIIIIQ")


class FieldFileError(ValueError):
    """A binary field file is malformed or inconsistent."""


def write_fields(path, fields: SpectralField, layout: str = "spectral") -> None:
    """Write a field or a batch of fields (flattened batch axes) to ``path``."""
    if layout not in ("spectral", "physical"):
        raise ValueError(f"unknown layout {layout!r}")
    g = fields.grid
    coeffs = fields.coeffs.reshape((-1,) + g.shape)
    count = coeffs.shape[0]
    if layout == "spectral":
        data = np.empty(coeffs.shape + (2,), dtype="<f8")
        data[..., 0] = coeffs.real
        data[..., 1] = coeffs.imag
        tag = LAYOUT_SPECTRAL
    else:
        data = np.ascontiguousarray(inverse_transform(SpectralField(g, coeffs)), dtype="<f8")
        tag = LAYOUT_PHYSICAL
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, g.d, g.M, tag, count))
        fh.write(np.ascontiguousarray(data).tobytes())


def read_fields(path) -> SpectralField:
    """Read a field file; returns a batch ``(count, M, ..., M)`` of spectral fields.

    Physical files are transformed back to coefficients.

    Raises:
        FieldFileError: on a bad magic, version, layout or size.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FieldFileError("file shorter than the header")
    magic, version, d, M, tag, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FieldFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FieldFileError(f"unsupported format version {version}")
    if tag not in (LAYOUT_SPECTRAL, LAYOUT_PHYSICAL):
        raise FieldFileError(f"unknown layout tag {tag}")
    grid = Grid(M, d)
    per = M**d * (2 if tag == LAYOUT_SPECTRAL else 1)
    expected = _HEADER.size + 8 * per * count
    if len(raw) != expected:
        raise FieldFileError(f"expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if tag == LAYOUT_SPECTRAL:
        data = data.reshape((count,) + grid.shape + (2,))
        return SpectralField(grid, data[..., 0] + 1j * data[..., 1])
    return forward_transform(data.reshape((count,) + grid.shape).astype(float), grid)


def to_jsonable(obj):
    """Convert numpy scalars/arrays, tuples and non-finite floats for JSON.

    Non-finite floats become the strings ``"nan"``, ``"inf"`` and ``"-inf"``.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    text = json.dumps(to_jsonable(obj), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_csv(path, rows: Iterable[Sequence]) -> None:
    """Write rows with ``\\n`` line endings; floats use their shortest repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
