"""Bit-exact file formats: datasets, worlds, map images, and paths.

All formats are plain text (PGM payload aside) with '.' decimal separators,
so real robot logs can be converted with a trivial script. Reals in dataset
logs carry 9 significant digits; parsing and re-serializing any valid file
reproduces it byte for byte.
"""

from __future__ import annotations

import numpy as np

from .algorithms import Dataset
from .errors import ParseError, RaggedRows, SchemaError
from .geometry import GridGeometry, Pose
from .models import OdometryDelta
from .simulator import World

_LOG_MAGIC = "GRIDSLAM-LOG"
_WORLD_MAGIC = "GRIDSLAM-WORLD"


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _parse_float(token: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"expected a real number, got {token!r}", line) from None


def _parse_int(token: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer, got {token!r}", line) from None


def _header_fields(line: str, magic: str, keys: tuple[str, ...]) -> list[str]:
    tokens = line.split()
    if len(tokens) != 2 + len(keys) or tokens[0] != magic or tokens[1] != "v1":
        raise ParseError(f"expected '{magic} v1 " + " ".join(k + "=<...>" for k in keys)
                         + "' header", 1)
    values = []
    for i, key in enumerate(keys):
        prefix = key + "="
        if not tokens[2 + i].startswith(prefix):
            raise ParseError(f"expected '{prefix}...' in header", 1)
        values.append(tokens[2 + i][len(prefix):])
    return values


def write_dataset(d: Dataset, path: str) -> None:
    lines = [f"{_LOG_MAGIC} v1 n_beams={d.n_beams} d_max={_fmt(d.d_max)} "
             f"resolution={_fmt(d.resolution)}"]
    for t, (u, scan) in enumerate(d.records):
        parts = [str(t), _fmt(u.rot), _fmt(u.trans)]
        parts.extend(_fmt(v) for v in scan)
        lines.append(" ".join(parts))
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_dataset(path: str) -> Dataset:
    with open(path) as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", 1)
    n_beams_s, d_max_s, res_s = _header_fields(lines[0], _LOG_MAGIC,
                                               ("n_beams", "d_max", "resolution"))
    n_beams = _parse_int(n_beams_s, 1)
    d_max = _parse_float(d_max_s, 1)
    resolution = _parse_float(res_s, 1)
    records = []
    for ln, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            raise ParseError("blank line in record section", ln)
        if len(tokens) != 3 + n_beams:
            raise SchemaError(f"line {ln}: {len(tokens)} fields, expected "
                              f"{3 + n_beams} for {n_beams} beams")
        _parse_int(tokens[0], ln)
        rot = _parse_float(tokens[1], ln)
        trans = _parse_float(tokens[2], ln)
        scan = np.array([_parse_float(tok, ln) for tok in tokens[3:]])
        records.append((OdometryDelta(rot, trans), scan))
    return Dataset(n_beams, d_max, resolution, records)


def write_world(w: World, path: str) -> None:
    g = w.geometry
    lines = [f"{_WORLD_MAGIC} v1 rows={g.rows} cols={g.cols} "
             f"resolution={_fmt(g.resolution)}"]
    for r in range(g.rows):
        lines.append("".join("#" if w.occupancy[r, c] else "." for c in range(g.cols)))
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_world(path: str) -> World:
    with open(path) as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", 1)
    rows_s, cols_s, res_s = _header_fields(lines[0], _WORLD_MAGIC,
                                           ("rows", "cols", "resolution"))
    rows = _parse_int(rows_s, 1)
    cols = _parse_int(cols_s, 1)
    resolution = _parse_float(res_s, 1)
    if len(lines) - 1 != rows:
        raise ParseError(f"expected {rows} world rows, found {len(lines) - 1}", len(lines))
    occ = np.zeros((rows, cols), dtype=bool)
    for r in range(rows):
        line = lines[1 + r]
        if len(line) != cols:
            raise RaggedRows(f"line {2 + r}: row has {len(line)} cells, expected {cols}")
        for c, ch in enumerate(line):
            if ch == "#":
                occ[r, c] = True
            elif ch != ".":
                raise ParseError(f"unexpected cell character {ch!r}", 2 + r)
    return World(GridGeometry(rows, cols, resolution), occ)


def write_map_pgm(grid: np.ndarray, path: str) -> None:
    """Binary PGM (P5, maxval 255), row-major, one byte per cell."""
    grid = np.asarray(grid, dtype=np.uint8)
    if grid.ndim != 2:
        raise ValueError("map grid must be 2-D")
    rows, cols = grid.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        f.write(grid.tobytes())


def read_map_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise ParseError("expected 'P5' binary PGM", 1)
    try:
        cols, rows = (int(tok) for tok in parts[1].split())
    except ValueError:
        raise ParseError("expected '<cols> <rows>'", 2) from None
    if parts[2] != b"255":
        raise ParseError("expected maxval 255", 3)
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != rows * cols:
        raise SchemaError(f"PGM payload has {pixels.size} bytes, "
                          f"expected {rows * cols}")
    return pixels.reshape(rows, cols).copy()


def write_path_csv(poses, path: str) -> None:
    lines = ["t,x,y,heading"]
    for t, p in enumerate(poses):
        lines.append(f"{t},{p.x:.8f},{p.y:.8f},{p.heading:.8f}")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_path_csv(path: str) -> list[Pose]:
    with open(path) as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != "t,x,y,heading":
        raise ParseError("expected 't,x,y,heading' header", 1)
    poses = []
    for ln, line in enumerate(lines[1:], start=2):
        tokens = line.split(",")
        if len(tokens) != 4:
            raise ParseError(f"expected 4 fields, got {len(tokens)}", ln)
        _parse_int(tokens[0], ln)
        poses.append(Pose(_parse_float(tokens[1], ln), _parse_float(tokens[2], ln),
                          _parse_float(tokens[3], ln)))
    return poses
