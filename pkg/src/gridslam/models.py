"""Probability models: motion and perception densities, the truncated
geometric law over consistency sets, importance weights, and resampling.

All weight arithmetic is done in the log domain; LOG_ZERO (-inf) marks
impossible outcomes. Distances to obstacles are integer cell counts along a
beam; their metric value is the cell-center distance (theta - 0.5) * res.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import AllZeroWeights, DomainError, EmptyConsistentSet
from .geometry import Cell, GridGeometry, Pose, normalize_angle

LOG_ZERO = float("-inf")

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MotionParams:
    """Gaussian motion noise: std = base + proportional * |magnitude|,
    separately for the rotation and translation components."""

    rot_std_base: float = 0.0
    rot_std_per_rad: float = 0.0
    trans_std_base: float = 0.0
    trans_std_per_meter: float = 0.0

    def __post_init__(self):
        for v in (self.rot_std_base, self.rot_std_per_rad,
                  self.trans_std_base, self.trans_std_per_meter):
            if v < 0:
                raise ValueError("noise parameters must be non-negative")

    def rot_std(self, rot: float) -> float:
        return self.rot_std_base + self.rot_std_per_rad * abs(rot)

    def trans_std(self, trans: float) -> float:
        return self.trans_std_base + self.trans_std_per_meter * trans


@dataclass(frozen=True)
class PerceptionParams:
    """Truncated-Gaussian range sensor: std sigma, support (0, d_max)."""

    sigma: float = 0.02
    d_max: float = 10.0

    def __post_init__(self):
        if self.sigma <= 0 or self.d_max <= 0:
            raise ValueError("sigma and d_max must be positive")


@dataclass(frozen=True)
class MapPrior:
    """Independent per-cell occupancy prior probability."""

    p: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("prior occupancy probability must be in (0, 1)")


@dataclass(frozen=True)
class OdometryDelta:
    """Relative motion between consecutive timesteps; forward-only translation."""

    rot: float
    trans: float

    def __post_init__(self):
        if self.trans < 0:
            raise ValueError("odometry translation must be non-negative")


class Candidate(NamedTuple):
    cell: Cell
    ray_index: int
    unlabeled_before: int
    terminal_occupied: bool


@dataclass(frozen=True)
class ConsistentSet:
    """Ordered candidate obstacle cells along one beam.

    At most the last candidate may be a terminal occupied cell; ray indices
    are strictly increasing and unlabeled counts nondecreasing.
    """

    candidates: tuple[Candidate, ...]

    def __post_init__(self):
        for i, c in enumerate(self.candidates):
            if i > 0:
                prev = self.candidates[i - 1]
                if c.ray_index <= prev.ray_index:
                    raise ValueError("ray indices must be strictly increasing")
                if c.unlabeled_before < prev.unlabeled_before:
                    raise ValueError("unlabeled counts must be nondecreasing")
            if c.terminal_occupied and i != len(self.candidates) - 1:
                raise ValueError("terminal occupied candidate must be last")

    def __len__(self) -> int:
        return len(self.candidates)

    def ray_indices(self) -> np.ndarray:
        return np.array([c.ray_index for c in self.candidates], dtype=np.int64)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Derive an independent, reproducible generator from (seed, key).

    Streams for distinct keys are independent, so randomness can be drawn
    per (phase, timestep) or as fine as (timestep, candidate, beam) without
    any sequencing between them.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def std_normal_cdf(x: float) -> float:
    """Phi(x) via the complementary error function."""
    return 0.5 * math.erfc(-x / _SQRT2)


def truncation_normalizer(theta_m: float, pp: PerceptionParams) -> float:
    """Mass of N(theta_m, sigma^2) inside (0, d_max):
    Phi((d_max - theta)/sigma) - Phi(-theta/sigma)."""
    return (std_normal_cdf((pp.d_max - theta_m) / pp.sigma)
            - std_normal_cdf(-theta_m / pp.sigma))


def theta_meters(theta: int, g: GridGeometry) -> float:
    """Metric distance of the cell at ray index theta (cell-center convention)."""
    return (theta - 0.5) * g.resolution


def perception_logpdf(v: float, theta_m: float, pp: PerceptionParams) -> float:
    """Log density of a reading v given true obstacle distance theta_m."""
    if not 0.0 < v < pp.d_max:
        raise DomainError(f"reading {v} outside (0, {pp.d_max})")
    z = (v - theta_m) / pp.sigma
    return (-0.5 * z * z - _LOG_SQRT_2PI - math.log(pp.sigma)
            - math.log(truncation_normalizer(theta_m, pp)))


def range_to_cell(distance: float, resolution: float) -> int:
    """Cell count along a beam whose center is nearest to `distance`;
    clamped to >= 1. Boundary ties break toward the farther cell."""
    return max(1, int(math.floor(distance / resolution)) + 1)


def perception_sample(v: float, pp: PerceptionParams, g: GridGeometry,
                      rng: np.random.Generator) -> int:
    """Draw a candidate obstacle distance around reading v, as a cell count."""
    if not 0.0 < v < pp.d_max:
        raise DomainError(f"reading {v} outside (0, {pp.d_max})")
    return range_to_cell(rng.normal(v, pp.sigma), g.resolution)


def motion_sample(prev: Pose, u: OdometryDelta, mp: MotionParams,
                  rng: np.random.Generator) -> Pose:
    """Rotate-then-translate Gaussian motion step from the previous pose."""
    rot = u.rot + rng.normal(0.0, mp.rot_std(u.rot))
    trans = u.trans + rng.normal(0.0, mp.trans_std(u.trans))
    return compose(prev, rot, trans)


def compose(prev: Pose, rot: float, trans: float) -> Pose:
    """Deterministic kinematic step: turn by rot, then advance trans."""
    heading = normalize_angle(prev.heading + rot)
    return Pose(prev.x + trans * math.cos(heading),
                prev.y + trans * math.sin(heading),
                heading)


def _trgeom_logmasses(c: ConsistentSet, prior: MapPrior) -> np.ndarray:
    log_p = math.log(prior.p)
    log_q = math.log1p(-prior.p)
    out = np.empty(len(c.candidates))
    for i, cand in enumerate(c.candidates):
        # known-empty cells contribute factor 1; only unlabeled cells carry
        # the (1-p) survival factor, and a known-occupied endpoint needs no p.
        out[i] = cand.unlabeled_before * log_q
        if not cand.terminal_occupied:
            out[i] += log_p
    return out


def trgeom_pmf(c: ConsistentSet, prior: MapPrior) -> np.ndarray:
    """Normalized truncated-geometric probability table over the candidates."""
    if len(c.candidates) == 0:
        raise EmptyConsistentSet("no candidate cells along beam")
    lm = _trgeom_logmasses(c, prior)
    w = np.exp(lm - lm.max())
    return w / w.sum()


def trgeom_logmass(c: ConsistentSet, prior: MapPrior, theta: int) -> float:
    """Log probability of the candidate at ray index theta; LOG_ZERO if theta
    is not in the consistency set."""
    if len(c.candidates) == 0:
        raise EmptyConsistentSet("no candidate cells along beam")
    lm = _trgeom_logmasses(c, prior)
    m = lm.max()
    log_norm = m + math.log(np.exp(lm - m).sum())
    for i, cand in enumerate(c.candidates):
        if cand.ray_index == theta:
            return float(lm[i] - log_norm)
    return LOG_ZERO


def algo1_theta_logweight(theta: int, c: ConsistentSet, pp: PerceptionParams,
                          prior: MapPrior, g: GridGeometry) -> float:
    """Importance weight for a sampled distance against the map-conditional
    target: truncated-geometric mass over the inverse truncation normalizer."""
    lm = trgeom_logmass(c, prior, theta)
    if lm == LOG_ZERO:
        return LOG_ZERO
    return lm - math.log(truncation_normalizer(theta_meters(theta, g), pp))


def algo2_theta_logweight(theta: int, pp: PerceptionParams, prior: MapPrior,
                          g: GridGeometry) -> float:
    """Importance weight for a sampled distance against the prior-geometric
    target: (1-p)^(theta-1) p over the truncation normalizer."""
    return ((theta - 1) * math.log1p(-prior.p) + math.log(prior.p)
            - math.log(truncation_normalizer(theta_meters(theta, g), pp)))


def resample(logweights: Sequence[float], rng: np.random.Generator) -> int:
    """Draw one index with probability proportional to exp(logweight).

    Max-subtracted exponentiation, then inverse CDF on a single uniform.
    """
    lw = np.asarray(logweights, dtype=float)
    if lw.size == 0:
        raise ValueError("cannot resample an empty weight list")
    m = lw.max()
    if m == LOG_ZERO:
        raise AllZeroWeights("every candidate has log-zero weight")
    w = np.exp(lw - m)
    total = w.sum()
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(w), u * total, side="right"))
    return min(idx, lw.size - 1)


def sample_prior_map(prior: MapPrior, g: GridGeometry,
                     rng: np.random.Generator) -> np.ndarray:
    """Draw an occupancy grid from the independent-cell prior."""
    return rng.random((g.rows, g.cols)) < prior.p
