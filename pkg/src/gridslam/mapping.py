"""Occupancy map structures and updates.

Two map flavors back the inference drivers:
- PartialMap: deterministic ternary labels with an occupied-wins conflict
  rule (occupied evidence is rarer and more informative than free space).
- ProbabilisticMap: per-cell occupied/observed counts accumulated over
  committed scans, thresholded by pi into ternary labels.

Beams whose reading reaches the sensor cap are masked out of every update
and weight (the 0 < V < d_max indicator); callers pass that mask in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import _kernels
from .errors import OutOfBounds
from .geometry import Cell, GridGeometry, Pose, beam_offsets
from .models import Candidate, ConsistentSet, PerceptionParams


class CellLabel(IntEnum):
    UNKNOWN = _kernels.UNKNOWN
    EMPTY = _kernels.EMPTY
    OCCUPIED = _kernels.OCCUPIED


_RENDER_LUT = np.array([127, 255, 0], dtype=np.uint8)  # UNKNOWN, EMPTY, OCCUPIED
_EMPTY_I64 = np.empty(0, dtype=np.int64)
_EMPTY_I8 = np.empty(0, dtype=np.int8)


@dataclass(frozen=True)
class LabelingParams:
    """Threshold pi for turning occupancy ratios into labels: empty below pi,
    occupied at or above 1 - pi, unknown between."""

    pi: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.pi < 0.5:
            raise ValueError("pi must be in (0, 0.5)")


class PartialMap:
    """Ternary occupancy grid; all cells Unknown at construction."""

    def __init__(self, geometry: GridGeometry):
        self.geometry = geometry
        self.labels = np.zeros((geometry.rows, geometry.cols), dtype=np.int8)

    def label_at(self, cell: Cell) -> CellLabel:
        return CellLabel(int(self.labels[cell.row, cell.col]))


class ProbabilisticMap:
    """Count-based relaxed map: occupied/observed tallies per cell."""

    def __init__(self, geometry: GridGeometry):
        self.geometry = geometry
        self.occupied_count = np.zeros((geometry.rows, geometry.cols), dtype=np.int64)
        self.observed_count = np.zeros((geometry.rows, geometry.cols), dtype=np.int64)


def ray_buffer_cells(pp: PerceptionParams, g: GridGeometry) -> int:
    """Upper bound on cells a ray can enter within the sensor range: a
    supercover ray crosses up to sqrt(2) grid lines per resolution of
    travel."""
    return int(math.ceil(1.5 * pp.d_max / g.resolution)) + 2


def _require_inside(z: Pose, g: GridGeometry) -> None:
    if not g.contains(z.x, z.y):
        raise OutOfBounds(f"pose ({z.x}, {z.y}) outside grid")


def _as_beam_arrays(thetas, scan_mask, n_beams: int):
    th = np.asarray(thetas, dtype=np.int64)
    if scan_mask is None:
        mask = np.ones(n_beams, dtype=np.bool_)
    else:
        mask = np.asarray(scan_mask, dtype=np.bool_)
    if th.shape != (n_beams,) or mask.shape != (n_beams,):
        raise ValueError("thetas and scan_mask must have one entry per beam")
    return th, mask


def consistent_set(m: PartialMap, z: Pose, k: int, pp: PerceptionParams,
                   n_beams: int) -> ConsistentSet:
    """Candidate obstacle cells along beam k from pose z.

    Walks the supercover ray over cells entered within the metric sensor
    range, skipping Empty cells, collecting Unknown cells, and stopping
    inclusively at the first Occupied cell.
    """
    g = m.geometry
    _require_inside(z, g)
    buf = min(ray_buffer_cells(pp, g), g.rows + g.cols + 2)
    ridx = np.empty(buf, dtype=np.int64)
    unlab = np.empty(buf, dtype=np.int64)
    rr = np.empty(buf, dtype=np.int64)
    cc = np.empty(buf, dtype=np.int64)
    angle = z.heading + beam_offsets(n_beams)[k]
    n, terminal = _kernels.consistent_set_fill(
        z.x, z.y, float(angle), pp.d_max, buf, m.labels.ravel(), g.rows, g.cols,
        g.resolution, g.origin_x, g.origin_y, ridx, unlab, rr, cc)
    cands = tuple(
        Candidate(Cell(int(rr[i]), int(cc[i])), int(ridx[i]), int(unlab[i]),
                  bool(terminal and i == n - 1))
        for i in range(n))
    return ConsistentSet(cands)


def apply_scan(m: PartialMap, z: Pose, thetas, scan_mask=None) -> None:
    """Commit a scan: cells before each endpoint Empty, endpoints Occupied.

    Occupied overwrites Empty and is never demoted.
    """
    g = m.geometry
    _require_inside(z, g)
    n_beams = len(thetas)
    th, mask = _as_beam_arrays(thetas, scan_mask, n_beams)
    _kernels.apply_scan_cells(z.x, z.y, z.heading, beam_offsets(n_beams), th, mask,
                              m.labels.ravel(), g.rows, g.cols,
                              g.resolution, g.origin_x, g.origin_y)


def accumulate_scan(pm: ProbabilisticMap, z: Pose, thetas, scan_mask=None) -> None:
    """Tally a scan into the count map; no conflict resolution."""
    g = pm.geometry
    _require_inside(z, g)
    n_beams = len(thetas)
    th, mask = _as_beam_arrays(thetas, scan_mask, n_beams)
    _kernels.accumulate_scan_cells(z.x, z.y, z.heading, beam_offsets(n_beams), th, mask,
                                   pm.occupied_count.ravel(), pm.observed_count.ravel(),
                                   g.rows, g.cols, g.resolution, g.origin_x, g.origin_y,
                                   _EMPTY_I8, 0.0, False)


def label_cell(pm: ProbabilisticMap, cell: Cell, lp: LabelingParams) -> CellLabel:
    """Threshold one cell's occupancy ratio into a label."""
    obs = pm.observed_count[cell.row, cell.col]
    if obs == 0:
        return CellLabel.UNKNOWN
    ratio = pm.occupied_count[cell.row, cell.col] / obs
    if ratio < lp.pi:
        return CellLabel.EMPTY
    if ratio >= 1.0 - lp.pi:
        return CellLabel.OCCUPIED
    return CellLabel.UNKNOWN


def label_grid(pm: ProbabilisticMap, lp: LabelingParams) -> np.ndarray:
    """Threshold the whole count map into an int8 label grid."""
    obs = pm.observed_count
    with np.errstate(invalid="ignore"):
        ratio = np.where(obs > 0, pm.occupied_count / np.maximum(obs, 1), 0.0)
    out = np.zeros(obs.shape, dtype=np.int8)
    seen = obs > 0
    out[seen & (ratio < lp.pi)] = CellLabel.EMPTY
    out[seen & (ratio >= 1.0 - lp.pi)] = CellLabel.OCCUPIED
    return out


def agreement_logweight(pm: ProbabilisticMap, z: Pose, thetas, scan_mask,
                        lp: LabelingParams, pp: PerceptionParams,
                        n_beams: int) -> float:
    """Sum over beams of log(agree / (agree + disagree)) between the labels
    induced by (z, thetas) and the thresholded map; beams with no comparable
    cell are neutral; LOG_ZERO if any beam's ratio is zero."""
    g = pm.geometry
    _require_inside(z, g)
    th, mask = _as_beam_arrays(thetas, scan_mask, n_beams)
    labels = label_grid(pm, lp)
    logw, _, _ = _kernels.agreement_pose(z.x, z.y, z.heading, beam_offsets(n_beams),
                                         th, np.zeros(n_beams), False, mask,
                                         labels.ravel(), g.rows, g.cols,
                                         g.resolution, g.origin_x, g.origin_y,
                                         np.zeros(n_beams, dtype=np.int64))
    return float(logw)


def render(m, lp: LabelingParams | None = None) -> np.ndarray:
    """Grayscale view of a map: Occupied 0, Empty 255, Unknown 127.

    Accepts a PartialMap, a ProbabilisticMap (lp required), or a label grid.
    """
    if isinstance(m, PartialMap):
        labels = m.labels
    elif isinstance(m, ProbabilisticMap):
        if lp is None:
            raise ValueError("rendering a probabilistic map needs labeling params")
        labels = label_grid(m, lp)
    else:
        labels = np.asarray(m, dtype=np.int8)
    return _RENDER_LUT[labels]


def labels_from_grayscale(pixels: np.ndarray) -> np.ndarray:
    """Invert render(): 0 -> Occupied, 255 -> Empty, anything else Unknown."""
    out = np.zeros(pixels.shape, dtype=np.int8)
    out[pixels == 255] = CellLabel.EMPTY
    out[pixels == 0] = CellLabel.OCCUPIED
    return out
