"""Image and table files: CSV grids, 16-bit PGM with a scaling sidecar, CSV tables.

A real-valued image is a CSV grid with one line per lattice row, values
written with ``%.17g`` so they round-trip exactly.  Label maps and rendered
maps are PGM files (``P5`` binary big-endian or ``P2`` text, maxval 65535)
next to a JSON sidecar ``<name>.pgm.json`` holding ``offset`` and ``scale``:
``value = offset + scale * gray``.  Light is high.
"""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

MAXVAL = 65535


class FormatError(ValueError):
    """Malformed or unreadable data file."""


def write_grid(path, image) -> Path:
    a = np.asarray(image, dtype=float)
    if a.ndim != 2:
        raise ValueError("grid must be two-dimensional")
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        for row in a:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    return path


def read_grid(path) -> np.ndarray:
    path = Path(path)
    try:
        rows = [line for line in path.read_text().splitlines() if line.strip()]
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path} is empty")
    try:
        data = [[float(v) for v in line.split(",")] for line in rows]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if len({len(r) for r in data}) != 1:
        raise FormatError(f"{path}: rows have different lengths")
    a = np.array(data)
    if not np.all(np.isfinite(a)):
        raise FormatError(f"{path}: non-finite values")
    return a


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_pgm(path, gray, offset: float = 0.0, scale: float = 1.0, binary: bool = True, kind: str = "labels") -> list[Path]:
    """Write integer gray levels in ``[0, 65535]`` plus the sidecar; returns both paths."""
    g = np.asarray(gray)
    if g.ndim != 2 or g.size == 0:
        raise ValueError("PGM data must be a non-empty 2-D array")
    if np.any(g < 0) or np.any(g > MAXVAL) or np.any(g != np.round(g)):
        raise ValueError("PGM gray levels must be integers in [0, 65535]")
    g = g.astype(np.uint16)
    h, w = g.shape
    path = Path(path)
    if binary:
        header = f"P5\n{w} {h}\n{MAXVAL}\n".encode("ascii")
        path.write_bytes(header + g.astype(">u2").tobytes())
    else:
        lines = [f"P2\n{w} {h}\n{MAXVAL}"] + [" ".join(str(int(v)) for v in row) for row in g]
        path.write_text("\n".join(lines) + "\n")
    meta = {"kind": kind, "width": w, "height": h, "maxval": MAXVAL, "offset": float(offset), "scale": float(scale)}
    side = _sidecar(path)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return [path, side]


_TOKEN = re.compile(rb"#[^\n]*\n?|\s+|[^\s#]+")


def read_pgm(path) -> tuple[np.ndarray, dict]:
    """Gray levels and sidecar metadata (identity scaling if there is no sidecar)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    tokens, pos = [], 0
    while len(tokens) < 4:
        m = _TOKEN.match(raw, pos)
        if m is None:
            raise FormatError(f"{path}: truncated PGM header")
        pos = m.end()
        tok = m.group()
        if not tok.startswith(b"#") and not tok.isspace():
            tokens.append(tok)
    magic = tokens[0]
    try:
        w, h, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    if magic not in (b"P5", b"P2") or w < 1 or h < 1 or not 0 < maxval <= MAXVAL:
        raise FormatError(f"{path}: unsupported PGM header")
    if magic == b"P5":
        body = raw[pos + 1 :]
        dtype = ">u2" if maxval > 255 else "u1"
        need = w * h * np.dtype(dtype).itemsize
        if len(body) < need:
            raise FormatError(f"{path}: truncated PGM data")
        g = np.frombuffer(body[:need], dtype=dtype).reshape(h, w).astype(np.int64)
    else:
        vals = raw[pos:].split()
        if len(vals) < w * h:
            raise FormatError(f"{path}: truncated PGM data")
        g = np.array([int(v) for v in vals[: w * h]], dtype=np.int64).reshape(h, w)
    side = _sidecar(path)
    meta = {"offset": 0.0, "scale": 1.0, "kind": "labels"}
    if side.exists():
        meta.update(json.loads(side.read_text()))
    return g, meta


def read_pgm_values(path) -> np.ndarray:
    g, meta = read_pgm(path)
    return meta["offset"] + meta["scale"] * g


def write_labels(path, labels, binary: bool = True) -> list[Path]:
    """1-based labels stored directly as gray levels."""
    return write_pgm(path, np.asarray(labels), 0.0, 1.0, binary, kind="labels")


def read_labels(path) -> np.ndarray:
    g, meta = read_pgm(path)
    if meta.get("offset", 0.0) != 0.0 or meta.get("scale", 1.0) != 1.0:
        raise FormatError(f"{path} is a rendered map, not a label map")
    return g


def render_map(path, values, binary: bool = True) -> list[Path]:
    """Scale ``[min, max]`` linearly onto ``[0, 65535]``; a constant map is all zeros."""
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    scale = (hi - lo) / MAXVAL
    gray = np.zeros(v.shape, dtype=np.int64) if scale == 0 else np.rint((v - lo) / scale).astype(np.int64)
    return write_pgm(path, gray, lo, scale, binary, kind="map")


def load_image(path) -> np.ndarray:
    """Real-valued image from a CSV grid or a PGM (scaled through its sidecar)."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path} does not exist")
    if path.suffix.lower() in (".pgm", ".pnm"):
        return read_pgm_values(path)
    return read_grid(path)


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else "%.17g" % v
    if isinstance(v, np.integer):
        return str(int(v))
    return "" if v is None else str(v)


def write_table(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """CSV with a header line, ``\\n`` line endings and ``%.17g`` floats."""
    columns = columns or (list(rows[0]) if rows else [])
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_cell(r.get(c)) for c in columns])
    return path


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
