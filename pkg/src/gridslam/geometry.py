"""Grid coordinate system, pose arithmetic, and deterministic ray traversal.

Conventions:
- world frame: x to the right, y up, headings counterclockwise in (-pi, pi].
- grid cell (row, col) covers the half-open square
  [origin + col*res, origin + (col+1)*res) x [origin + row*res, ...).
- beam k of an n-beam scanner points at heading - pi/2 + k * pi/(n-1):
  a forward-facing 180 degree arc, beam 0 at -90 degrees relative to heading.
- the distance of a cell along a beam is measured to the cell center, so the
  cell at ray index t sits at (t - 0.5) * resolution from the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import OutOfBounds


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(angle, math.tau)
    if a <= -math.pi:
        a += math.tau
    return a


class Cell(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class Pose:
    """Planar robot pose; heading is normalized into (-pi, pi] on construction."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))


@dataclass(frozen=True)
class GridGeometry:
    """Fixed-size grid: dimensions, metric resolution, and world origin of
    the (0, 0) cell corner."""

    rows: int
    cols: int
    resolution: float
    origin_x: float = 0.0
    origin_y: float = 0.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one row and column")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def width(self) -> float:
        return self.cols * self.resolution

    @property
    def height(self) -> float:
        return self.rows * self.resolution

    def contains(self, x: float, y: float) -> bool:
        return (self.origin_x <= x < self.origin_x + self.width
                and self.origin_y <= y < self.origin_y + self.height)

    def center_of(self, cell: Cell) -> tuple[float, float]:
        return (self.origin_x + (cell.col + 0.5) * self.resolution,
                self.origin_y + (cell.row + 0.5) * self.resolution)


def padded(g: GridGeometry, margin: float) -> GridGeometry:
    """Expand a grid by at least `margin` meters on every side, keeping cell
    alignment with the original."""
    cells = int(math.ceil(margin / g.resolution))
    return GridGeometry(g.rows + 2 * cells, g.cols + 2 * cells, g.resolution,
                        g.origin_x - cells * g.resolution,
                        g.origin_y - cells * g.resolution)


def _xy(p) -> tuple[float, float]:
    if isinstance(p, Pose):
        return p.x, p.y
    x, y = p
    return float(x), float(y)


def cell_of(p, g: GridGeometry) -> Cell:
    """Cell whose half-open square contains the point (a Pose or (x, y))."""
    x, y = _xy(p)
    if not g.contains(x, y):
        raise OutOfBounds(f"point ({x}, {y}) outside grid")
    col = int(math.floor((x - g.origin_x) / g.resolution))
    row = int(math.floor((y - g.origin_y) / g.resolution))
    return Cell(row, col)


def beam_angle(k: int, heading: float, n_beams: int) -> float:
    """World angle of beam k: a uniform forward 180 degree arc."""
    if not 0 <= k < n_beams:
        raise ValueError(f"beam index {k} outside [0, {n_beams})")
    if n_beams == 1:
        return heading
    return heading - math.pi / 2 + k * (math.pi / (n_beams - 1))


def beam_offsets(n_beams: int) -> np.ndarray:
    """Beam angles relative to heading, for all beams at once."""
    if n_beams == 1:
        return np.zeros(1)
    return -math.pi / 2 + np.arange(n_beams) * (math.pi / (n_beams - 1))


def raycast(origin, angle: float, max_cells: int, g: GridGeometry) -> list[Cell]:
    """Cells traversed by the ray from `origin` in direction `angle`.

    Supercover traversal in strictly increasing distance order, excluding the
    origin's own cell, truncated at max_cells or the grid border. A crossing
    through an exact cell corner steps diagonally (see _kernels).
    """
    x, y = _xy(origin)
    if not g.contains(x, y):
        raise OutOfBounds(f"ray origin ({x}, {y}) outside grid")
    if max_cells <= 0:
        return []
    cap = min(int(max_cells), g.rows + g.cols + 2)
    out_rows = np.empty(cap, dtype=np.int64)
    out_cols = np.empty(cap, dtype=np.int64)
    n = _kernels.ray_cells(x, y, float(angle), cap, g.rows, g.cols,
                           g.resolution, g.origin_x, g.origin_y, out_rows, out_cols)
    return [Cell(int(out_rows[i]), int(out_cols[i])) for i in range(n)]
