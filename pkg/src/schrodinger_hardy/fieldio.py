"""Binary and CSV serialization of fields.

Binary layout (little endian)::

    b"SHF1" | u32 d | u32 m | f64 R | m**d f64 values (row-major)
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FieldFormatError
from .grid import Field, Grid

MAGIC = b"SHF1"
_HEADER = struct.Struct("<4sIId")


def write_field(path, f: Field) -> None:
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.d, g.m, g.R))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path, expect_dim: int | None = None) -> Field:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FieldFormatError(f"{path}: truncated header")
    magic, d, m, R = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    if d not in (1, 2, 3) or m < 2 or not R > 0:
        raise FieldFormatError(f"{path}: malformed header d={d} m={m} R={R}")
    if expect_dim is not None and d != expect_dim:
        raise FieldFormatError(f"{path}: dimension {d}, expected {expect_dim}")
    n = m ** d
    body = raw[_HEADER.size:]
    if len(body) != 8 * n:
        raise FieldFormatError(
            f"{path}: expected {n} values, found {len(body) / 8:g}")
    values = np.frombuffer(body, dtype="<f8").astype(float).reshape((m,) * d)
    return Field(Grid(d, R, m), values)


def fmt(x) -> str:
    """Shortest round-tripping text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def coord_names(d: int, prefix: str = "x") -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(d)]


def field_csv_rows(*fields: Field):
    g = fields[0].grid
    pts = g.coords.reshape(-1, g.d)
    cols = [f.values.reshape(-1) for f in fields]
    for i, p in enumerate(pts):
        yield [*p, *(c[i] for c in cols)]


def write_field_csv(path, f: Field) -> None:
    write_csv(path, coord_names(f.grid.d) + ["value"], field_csv_rows(f))
