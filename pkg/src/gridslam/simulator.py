"""Synthetic data generation: grid worlds, waypoint-following trajectories,
drifting odometry, and noisy range scans with ground truth.

Drift model: a small per-step systematic rotation bias plus Gaussian noise on
the recorded deltas. The bias accumulates in the recorded odometry stream
only; the true path is unaffected, which is what makes a dead-reckoned map
bend into extra corridors while the walls stay locally smooth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .algorithms import Dataset
from .errors import InsideWall, UnreachableWaypoint
from .geometry import GridGeometry, Pose, beam_offsets, cell_of, normalize_angle
from .models import MotionParams, OdometryDelta, PerceptionParams, compose, stream

_SIM_STREAM = 100


@dataclass
class World:
    """Ground-truth environment: a boolean wall grid whose border is solid,
    so every ray terminates."""

    geometry: GridGeometry
    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.shape != (self.geometry.rows, self.geometry.cols):
            raise ValueError("occupancy shape must match the geometry")
        if not (occ[0, :].all() and occ[-1, :].all()
                and occ[:, 0].all() and occ[:, -1].all()):
            raise ValueError("world boundary cells must be walls")
        self.occupancy = occ

    def is_wall(self, pose_or_point) -> bool:
        cell = cell_of(pose_or_point, self.geometry)
        return bool(self.occupancy[cell.row, cell.col])


@dataclass(frozen=True)
class SimConfig:
    """Trajectory and noise configuration for a simulated run."""

    waypoints: tuple[Pose, ...]
    step_trans: float = 0.09
    step_rot_cap: float = 0.15
    odo_noise: MotionParams = MotionParams(0.002, 0.0, 0.002, 0.0)
    rot_bias: float = 0.0009
    laser_sigma: float = 0.02
    rate_hint: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.step_trans <= 0:
            raise ValueError("step_trans must be positive")
        if len(self.waypoints) < 1:
            raise ValueError("need at least a start waypoint")


def true_range(w: World, z: Pose, angle: float, d_max: float) -> float:
    """Exact distance from z to the first wall-cell boundary along the ray,
    capped at d_max."""
    if w.is_wall(z):
        raise InsideWall(f"pose ({z.x}, {z.y}) occupies a wall cell")
    g = w.geometry
    return float(_kernels.first_hit_t(z.x, z.y, float(angle), d_max,
                                      w.occupancy.ravel(), g.rows, g.cols,
                                      g.resolution, g.origin_x, g.origin_y))


def _scan(w: World, z: Pose, offsets: np.ndarray, d_max: float) -> np.ndarray:
    g = w.geometry
    out = np.empty(offsets.shape[0])
    _kernels.scan_ranges(z.x, z.y, z.heading, offsets, d_max,
                         w.occupancy.ravel(), g.rows, g.cols,
                         g.resolution, g.origin_x, g.origin_y, out)
    return out


def simulate(w: World, sc: SimConfig, pp: PerceptionParams,
             n_beams: int) -> tuple[Dataset, list[Pose]]:
    """Drive the robot through the waypoints and record noisy data.

    Returns the dataset (one record per step) and the true path including the
    start pose, so truth[t] is the pose that produced record t-1.
    """
    start = sc.waypoints[0]
    if w.is_wall(start):
        raise InsideWall("start waypoint lies inside a wall")
    rng = stream(sc.seed, _SIM_STREAM)
    offsets = beam_offsets(n_beams)
    noise = sc.odo_noise
    z = start
    truth = [z]
    records: list[tuple[OdometryDelta, np.ndarray]] = []
    reach_tol = 0.5 * sc.step_trans
    for wp in sc.waypoints[1:]:
        guard = 0
        while math.hypot(wp.x - z.x, wp.y - z.y) > reach_tol:
            guard += 1
            if guard > 200000:
                raise UnreachableWaypoint(f"no progress toward ({wp.x}, {wp.y})")
            dist = math.hypot(wp.x - z.x, wp.y - z.y)
            desired = math.atan2(wp.y - z.y, wp.x - z.x)
            dh = normalize_angle(desired - z.heading)
            rot = max(-sc.step_rot_cap, min(sc.step_rot_cap, dh))
            # translate only once fully turned toward the waypoint
            trans = min(sc.step_trans, dist) if abs(dh) <= sc.step_rot_cap else 0.0
            z_next = compose(z, rot, trans)
            if w.is_wall(z_next):
                raise UnreachableWaypoint(
                    f"step into wall at ({z_next.x:.2f}, {z_next.y:.2f})")
            u_rot = rot + sc.rot_bias + rng.normal(0.0, noise.rot_std(rot))
            u_trans = max(0.0, trans + rng.normal(0.0, noise.trans_std(trans)))
            ranges = _scan(w, z_next, offsets, pp.d_max)
            readings = np.clip(ranges + rng.normal(0.0, sc.laser_sigma, n_beams),
                               1e-9, pp.d_max)
            records.append((OdometryDelta(u_rot, u_trans), readings))
            truth.append(z_next)
            z = z_next
    return Dataset(n_beams, pp.d_max, w.geometry.resolution, records), truth


def _block(occ: np.ndarray, g: GridGeometry, x0: float, y0: float,
           x1: float, y1: float) -> None:
    res = g.resolution
    c0, c1 = int(round(x0 / res)), int(round(x1 / res))
    r0, r1 = int(round(y0 / res)), int(round(y1 / res))
    occ[r0:r1, c0:c1] = True


def _carve(occ: np.ndarray, g: GridGeometry, x0: float, y0: float,
           x1: float, y1: float) -> None:
    res = g.resolution
    c0, c1 = int(round(x0 / res)), int(round(x1 / res))
    r0, r1 = int(round(y0 / res)), int(round(y1 / res))
    occ[r0:r1, c0:c1] = False


# Fixture dimensions (meters). The office-like details are load-bearing:
# door alcoves give mid-corridor heading observability (a bare straight wall
# says nothing about heading drift along it), and the two cross-gaps between
# the corridors provide sight-lines into already-mapped territory halfway
# through the loop.
_TC_LENGTH = 18.0
_TC_WIDTH = 4.0
_TC_BLOCK_H = 3.0
_TC_GAP = 2.2


def two_corridor_world(resolution: float = 0.15) -> World:
    """Two parallel corridors joined at both ends (desk-scale stand-in for a
    two-corridor office floor): 18 x 11.8 m, 0.4 m outer walls, a central
    divider broken into three blocks (two cross-gaps), and door alcoves every
    few meters along all outer walls."""
    length, width, blk_h, gap = _TC_LENGTH, _TC_WIDTH, _TC_BLOCK_H, _TC_GAP
    height = 0.8 + 2 * width + blk_h
    g = GridGeometry(rows=round(height / resolution),
                     cols=round(length / resolution), resolution=resolution)
    occ = np.zeros((g.rows, g.cols), dtype=bool)
    _block(occ, g, 0.0, 0.0, length, 0.4)
    _block(occ, g, 0.0, height - 0.4, length, height)
    _block(occ, g, 0.0, 0.0, 0.4, height)
    _block(occ, g, length - 0.4, 0.0, length, height)
    y0 = 0.4 + width
    blk_w = (length - 2 * gap - 2 * 3.2) / 3
    x = 3.2
    for _ in range(3):
        _block(occ, g, x, y0, x + blk_w, y0 + blk_h)
        x += blk_w + gap
    x = 2.6
    while x < length - 2.9:
        _carve(occ, g, x, 0.1, x + 0.9, 0.4)
        _carve(occ, g, x + 1.5, height - 0.4, x + 2.4, height - 0.1)
        x += 3.0
    y = 1.4
    while y + 2.0 < height - 0.4:
        _carve(occ, g, 0.1, y, 0.4, y + 0.9)
        _carve(occ, g, length - 0.4, y + 1.1, length - 0.1, y + 2.0)
        y += 3.2
    return World(g, occ)


def two_corridor_waypoints() -> tuple[Pose, ...]:
    """Loop around the divider, then twice more along the first corridor: the
    long re-traverses of early-mapped territory let the pose relocalize, and
    the run ends where the map frame is most accurate."""
    length = _TC_LENGTH
    y_bottom = 0.4 + _TC_WIDTH / 2
    y_top = 0.8 + 2 * _TC_WIDTH + _TC_BLOCK_H - 0.4 - _TC_WIDTH / 2
    return (Pose(1.8, y_bottom, 0.0), Pose(length - 1.8, y_bottom),
            Pose(length - 1.8, y_top), Pose(1.8, y_top),
            Pose(1.8, y_bottom + 0.1), Pose(length - 2.8, y_bottom),
            Pose(4.0, y_bottom))


def single_corridor_world(resolution: float = 0.15) -> World:
    """One straight corridor, 16.2 x 4.2 m, with door alcoves on both walls."""
    g = GridGeometry(rows=round(4.2 / resolution), cols=round(16.2 / resolution),
                     resolution=resolution)
    occ = np.zeros((g.rows, g.cols), dtype=bool)
    _block(occ, g, 0.0, 0.0, 16.2, 0.4)
    _block(occ, g, 0.0, 3.8, 16.2, 4.2)
    _block(occ, g, 0.0, 0.0, 0.4, 4.2)
    _block(occ, g, 15.8, 0.0, 16.2, 4.2)
    for i in range(6):
        x = 1.6 + i * 2.2
        _carve(occ, g, x, 0.1, x + 0.9, 0.4)
        _carve(occ, g, x + 1.1, 3.8, x + 2.0, 4.1)
    return World(g, occ)


def single_corridor_waypoints() -> tuple[Pose, ...]:
    return (Pose(1.5, 2.1, 0.0), Pose(14.7, 2.1), Pose(1.7, 2.1))


def drift_config(waypoints: tuple[Pose, ...], seed: int = 0,
                 rot_bias: float = 0.0009) -> SimConfig:
    """Default drifting-odometry configuration used by the bundled fixtures."""
    return SimConfig(waypoints=waypoints, seed=seed, rot_bias=rot_bias)
