"""Quantitative comparison of estimated maps and paths against ground truth.

No alignment is performed before scoring: all runs share the known start
pose, so estimate and truth already live in the same frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import GeometryMismatch, LengthMismatch
from .geometry import Pose, normalize_angle
from .mapping import CellLabel, PartialMap
from .simulator import World


@dataclass(frozen=True)
class MapScore:
    labeled_cells: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.labeled_cells if self.labeled_cells else 0.0


class PathError(NamedTuple):
    rmse_position: float
    final_error: float
    final_heading_error: float


def map_accuracy(est, truth: World) -> MapScore:
    """Agreement of Empty/Occupied labels with the true free/wall grid;
    Unknown cells are excluded. `est` is a PartialMap or an int8 label grid."""
    labels = est.labels if isinstance(est, PartialMap) else np.asarray(est)
    if labels.shape != truth.occupancy.shape:
        raise GeometryMismatch(f"label grid {labels.shape} vs world "
                               f"{truth.occupancy.shape}")
    occupied = labels == CellLabel.OCCUPIED
    empty = labels == CellLabel.EMPTY
    correct = int((occupied & truth.occupancy).sum()
                  + (empty & ~truth.occupancy).sum())
    labeled = int(occupied.sum() + empty.sum())
    return MapScore(labeled, correct)


def path_error(est: Sequence[Pose], truth: Sequence[Pose]) -> PathError:
    """Positional RMSE over timesteps plus final position/heading errors."""
    if len(est) != len(truth):
        raise LengthMismatch(f"paths have {len(est)} vs {len(truth)} poses")
    if len(est) == 0:
        raise LengthMismatch("cannot score empty paths")
    sq = [(a.x - b.x) ** 2 + (a.y - b.y) ** 2 for a, b in zip(est, truth)]
    rmse = math.sqrt(sum(sq) / len(sq))
    final = math.sqrt(sq[-1])
    dh = normalize_angle(est[-1].heading - truth[-1].heading)
    return PathError(rmse, final, dh)


def crop_labels(labels: np.ndarray, geom, target) -> np.ndarray:
    """Extract the target geometry's window from a larger label grid.

    Geometries must share the resolution and have integer-cell-aligned
    origins; cells outside the source grid come back Unknown.
    """
    if abs(geom.resolution - target.resolution) > 1e-12:
        raise GeometryMismatch("resolutions differ")
    res = geom.resolution
    dc = (target.origin_x - geom.origin_x) / res
    dr = (target.origin_y - geom.origin_y) / res
    c0, r0 = round(dc), round(dr)
    if abs(dc - c0) > 1e-6 or abs(dr - r0) > 1e-6:
        raise GeometryMismatch("origins are not cell-aligned")
    out = np.zeros((target.rows, target.cols), dtype=np.int8)
    src_r = slice(max(r0, 0), min(r0 + target.rows, geom.rows))
    src_c = slice(max(c0, 0), min(c0 + target.cols, geom.cols))
    if src_r.start < src_r.stop and src_c.start < src_c.stop:
        out[src_r.start - r0:src_r.stop - r0,
            src_c.start - c0:src_c.stop - c0] = labels[src_r, src_c]
    return out


def free_space_components(source) -> int:
    """Number of 4-connected free-space components.

    `source` is a World (free = not wall) or a label grid (free = Empty).
    The dead-reckoned corridor-count artifact is asserted with this.
    """
    if isinstance(source, World):
        free = ~source.occupancy
    else:
        labels = source.labels if isinstance(source, PartialMap) else np.asarray(source)
        free = labels == CellLabel.EMPTY
    _, n = ndimage.label(free)
    return int(n)
