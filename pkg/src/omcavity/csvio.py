"""Plain CSV reading and writing shared by every file interface.

Dialect: comma separator, ``.`` decimal, LF line endings, one mandatory header
row, optional leading ``#`` comment lines. Floats are written with ``repr`` so
a written file reads back bit-identically.
"""
from __future__ import annotations

import io
import math
import os
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def dumps(header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> str:
    buf = io.StringIO(newline="")
    for line in comments:
        for sub in str(line).splitlines() or [""]:
            buf.write(f"# {sub}".rstrip() + "\n")
    buf.write(",".join(header) + "\n")
    n = len(header)
    for row in rows:
        row = list(row)
        if len(row) != n:
            raise ValueError(f"row has {len(row)} fields, header has {n}")
        buf.write(",".join(format_value(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(path, header, rows, comments=()):
    text = dumps(header, rows, comments)
    if path is None or path == "-":
        return text
    with open(os.fspath(path), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return text


def loads(text: str):
    """Parse CSV text into ``(columns, comments)``.

    ``columns`` maps each header name to a list of raw string fields.
    """
    comments, lines = [], []
    for raw in text.split("\n"):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("#"):
            comments.append(line[1:].strip())
        else:
            lines.append(line)
    if not lines:
        raise ValidationError("CSV has no header row")
    header = [h.strip() for h in lines[0].split(",")]
    cols: dict[str, list[str]] = {h: [] for h in header}
    for lineno, line in enumerate(lines[1:], start=2):
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != len(header):
            raise ValidationError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
        for h, f in zip(header, fields):
            cols[h].append(f)
    return cols, comments


def read_csv(path):
    with open(os.fspath(path), encoding="utf-8", newline="") as fh:
        return loads(fh.read())


def float_columns(cols: Mapping[str, list], required: Sequence[str], optional: Sequence[str] = ()):
    out = {}
    for name in required:
        if name not in cols:
            raise ValidationError(f"missing required column {name!r}")
    for name in list(required) + [o for o in optional if o in cols]:
        try:
            out[name] = np.array([float(v) for v in cols[name]], dtype=float)
        except ValueError as exc:
            raise ValidationError(f"column {name!r}: {exc}") from None
    return out
