"""16-bit binary PGM (P5) depth-image I/O.

Samples are big-endian uint16 millimeters, maxval 65535, 0 = invalid.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import ValidationError

_MAXVAL = 65535


def write_pgm16(path, depth: np.ndarray) -> None:
    """Write a depth image (mm) as binary PGM; values rounded to whole mm."""
    arr = np.asarray(depth)
    if arr.ndim != 2:
        raise ValidationError("depth image must be 2-D")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValidationError("depth values must be finite and >= 0")
    q = np.clip(np.rint(arr), 0, _MAXVAL).astype(">u2")
    h, w = q.shape
    header = f"P5\n{w} {h}\n{_MAXVAL}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(q.tobytes())


def read_pgm16(path) -> np.ndarray:
    """Read a binary PGM written by write_pgm16; returns float64 mm."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValidationError(f"{path}: not a binary PGM (missing P5 magic)")
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed, then a single whitespace byte before samples.
    pos = 2
    fields = []
    while len(fields) < 3:
        m = re.compile(rb"\s*(#[^\n]*\n|\S+)").match(data, pos)
        if m is None:
            raise ValidationError(f"{path}: truncated PGM header")
        pos = m.end()
        tok = m.group(1)
        if not tok.startswith(b"#"):
            fields.append(tok)
    try:
        w, h, maxval = (int(t) for t in fields)
    except ValueError as e:
        raise ValidationError(f"{path}: bad PGM header field: {e}") from e
    if maxval != _MAXVAL:
        raise ValidationError(f"{path}: expected 16-bit maxval {_MAXVAL}, got {maxval}")
    pos += 1  # the single whitespace separating header from samples
    need = w * h * 2
    raw = data[pos:pos + need]
    if len(raw) != need:
        raise ValidationError(f"{path}: expected {need} sample bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=">u2").reshape(h, w).astype(np.float64)
