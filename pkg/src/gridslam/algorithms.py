"""SLAM drivers: dead reckoning plus the three importance-sampling algorithms,
packaged as sklearn-style estimators (fit on a Dataset, results in trailing-
underscore attributes).

Common structure per estimator:
- phase 1 fixes one quantity per timestep (a pose for MotionOnlySlam, obstacle
  distances for the other two) by sampling n candidates and resampling one;
- phase 2 walks the dataset sequentially, weighting n candidates against the
  map built so far, resampling one, and committing its scan.

Obstacle distances are carried in metric form and converted to ray-cell
indices at the pose that uses them (a supercover ray crosses
(|cos|+|sin|)/res cells per meter, so the index depends on the beam's world
angle). Phase 1 discretizes at the dead-reckoned pose, the only pose-free
deterministic reference.

Randomness is derived per (phase, timestep) via models.stream with a fixed
draw order (candidate-major normal matrices, then resampling uniforms), so
identical (dataset, params, seed) give bit-identical results.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtr
from sklearn.base import BaseEstimator

from . import _kernels
from .errors import AllZeroWeights, OutOfBounds
from .geometry import GridGeometry, Pose, beam_offsets
from .mapping import (PartialMap, ProbabilisticMap, LabelingParams, apply_scan,
                      ray_buffer_cells)
from .models import (LOG_ZERO, MapPrior, MotionParams, OdometryDelta,
                     PerceptionParams, compose, resample, stream)

# stream keys: algorithms 2-3 draw everything for a timestep (distance
# candidates, then pose noise, then the resampling uniform) from one
# per-timestep stream; algorithm 1's path rollout has its own
_THETA_STREAM = 0
_PATH_STREAM = 1


@dataclass
class Dataset:
    """Paired odometry deltas and laser scans, with sensor metadata.

    `resolution` is the recommended grid resolution for reconstruction; it
    travels with the dataset through the log file format.
    """

    n_beams: int
    d_max: float
    resolution: float
    records: list[tuple[OdometryDelta, np.ndarray]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


def validate_dataset(d: Dataset) -> Dataset:
    if d.n_beams < 1:
        raise ValueError("dataset needs at least one beam")
    if d.d_max <= 0 or d.resolution <= 0:
        raise ValueError("d_max and resolution must be positive")
    for t, (_, scan) in enumerate(d.records):
        scan = np.asarray(scan, dtype=float)
        if scan.shape != (d.n_beams,):
            raise ValueError(f"record {t}: scan has {scan.shape} readings, "
                             f"expected {d.n_beams}")
        if np.any(scan < 0) or np.any(scan > d.d_max):
            raise ValueError(f"record {t}: readings outside [0, {d.d_max}]")
    return d


def active_beam_mask(scan: np.ndarray, d_max: float, resolution: float) -> np.ndarray:
    """Beams carrying usable range information: readings at or near the cap
    (>= d_max - resolution) and non-positive readings are masked out."""
    scan = np.asarray(scan, dtype=float)
    return (scan > 0.0) & (scan < d_max - resolution)


def filter_redundant(d: Dataset, min_trans: float, min_rot: float) -> Dataset:
    """Merge consecutive records until the summed motion clears a threshold.

    Emits one record (summed delta, latest scan) per burst; a trailing
    partial burst is always emitted so the final scan is never lost.
    """
    out: list[tuple[OdometryDelta, np.ndarray]] = []
    acc_rot = 0.0
    acc_trans = 0.0
    last_scan = None
    for u, v in d.records:
        acc_rot += u.rot
        acc_trans += u.trans
        last_scan = v
        if abs(acc_trans) >= min_trans or abs(acc_rot) >= min_rot:
            out.append((OdometryDelta(acc_rot, acc_trans), v))
            acc_rot = 0.0
            acc_trans = 0.0
            last_scan = None
    if last_scan is not None:
        out.append((OdometryDelta(acc_rot, acc_trans), last_scan))
    return Dataset(d.n_beams, d.d_max, d.resolution, out)


def effective_sample_size(logweights) -> float:
    """(sum w)^2 / sum w^2 over normalized linear weights; in [1, n]."""
    lw = np.asarray(logweights, dtype=float)
    m = lw.max() if lw.size else LOG_ZERO
    if lw.size == 0 or m == LOG_ZERO:
        raise AllZeroWeights("effective sample size of all-zero weights")
    w = np.exp(lw - m)
    return float(w.sum() ** 2 / np.square(w).sum())


@dataclass(frozen=True)
class DegeneracyReport:
    """Algorithm 2 found no pose candidate consistent with its distances."""

    timestep: int
    candidates_inside: int


@dataclass(frozen=True)
class StepDiagnostics:
    timestep: int
    ess: float
    fallback_beams: int = 0
    max_agreement_fallback: bool = False


def dead_reckon_path(d: Dataset, start: Pose) -> list[Pose]:
    """Compose odometry deltas with zero noise."""
    path = [start]
    for u, _ in d.records:
        path.append(compose(path[-1], u.rot, u.trans))
    return path


def fit_geometry(d: Dataset, start: Pose = Pose(0.0, 0.0, 0.0),
                 margin: float | None = None) -> GridGeometry:
    """Size a grid around the dead-reckoned path with a sensor-range margin."""
    path = dead_reckon_path(d, start)
    xs = np.array([p.x for p in path])
    ys = np.array([p.y for p in path])
    if margin is None:
        span = max(xs.max() - xs.min(), ys.max() - ys.min())
        margin = d.d_max + 1.0 + 0.1 * span
    res = d.resolution
    ox = math.floor((xs.min() - margin) / res) * res
    oy = math.floor((ys.min() - margin) / res) * res
    cols = int(math.ceil((xs.max() + margin - ox) / res)) + 1
    rows = int(math.ceil((ys.max() + margin - oy) / res)) + 1
    return GridGeometry(rows, cols, res, ox, oy)


def scan_to_cells(z: Pose, dists, n_beams: int, g: GridGeometry) -> np.ndarray:
    """Ray-cell index per beam of each beam's metric distance, seen from z."""
    out = np.empty(n_beams, dtype=np.int64)
    _kernels.endpoint_cells(z.x, z.y, z.heading, beam_offsets(n_beams),
                            np.ascontiguousarray(dists, dtype=float),
                            g.resolution, g.origin_x, g.origin_y, out)
    return out


def _cells_one_beam(z: Pose, angle: float, dists: np.ndarray, g: GridGeometry,
                    out: np.ndarray) -> np.ndarray:
    """Ray-cell indices of metric distances along one fixed world angle."""
    n = dists.size
    _kernels.endpoint_cells(z.x, z.y, angle, np.zeros(1),
                            np.ascontiguousarray(dists, dtype=float),
                            g.resolution, g.origin_x, g.origin_y, out[:n])
    return out[:n]


def _require_inside(pose: Pose, g: GridGeometry, what: str) -> None:
    if not g.contains(pose.x, pose.y):
        raise OutOfBounds(f"{what} ({pose.x:.3f}, {pose.y:.3f}) left the grid")


class _SlamBase(BaseEstimator):
    """Shared dataset preparation and phase-1 machinery."""

    def _prepare(self, dataset: Dataset):
        validate_dataset(dataset)
        if self.min_trans > 0.0 or self.min_rot > 0.0:
            dataset = filter_redundant(dataset, self.min_trans, self.min_rot)
        geom = self.geometry
        if geom is None:
            geom = fit_geometry(dataset, self.start)
        _require_inside(self.start, geom, "start pose")
        self.geometry_ = geom
        return dataset, geom

    def _progress(self, t: int, total: int) -> None:
        if self.verbose and (t % 100 == 0 or t == total):
            print(f"  t={t}/{total}", file=sys.stderr)

    def _phase1_step(self, rng, scan, zr: Pose, offsets, dataset: Dataset,
                     geom: GridGeometry):
        """Resample one obstacle distance per beam of one timestep from
        Gaussian proposals around the readings, weighted by the prior-
        geometric target over the truncation normalizer.

        Consumes one (n, n_beams) normal matrix and one uniform per beam from
        `rng`. Returns cell indices at the reference (dead-reckoned) pose,
        the active-beam mask, and the committed metric distances.
        """
        pp: PerceptionParams = self.perception
        scan = np.asarray(scan, dtype=float)
        active = active_beam_mask(scan, dataset.d_max, geom.resolution)
        theta_t = np.zeros(dataset.n_beams, dtype=np.int64)
        dist_t = scan.copy()
        if active.any():
            draws = rng.normal(scan, pp.sigma, size=(self.n_samples, dataset.n_beams))
            unif = rng.random(dataset.n_beams)
            _kernels.phase1_pick(zr.x, zr.y, zr.heading, offsets, active,
                                 draws, unif, geom.resolution, geom.origin_x,
                                 geom.origin_y, pp.d_max, pp.sigma,
                                 math.log(self.prior.p), math.log1p(-self.prior.p),
                                 theta_t, dist_t)
        return theta_t, active, dist_t

    def _phase1_thetas(self, dataset: Dataset, geom: GridGeometry):
        """All timesteps of the distance-fixing phase, each from its own
        per-timestep stream (identical across the estimators that share it)."""
        offsets = beam_offsets(dataset.n_beams)
        dr_path = dead_reckon_path(dataset, self.start)
        thetas: list[np.ndarray] = []
        masks: list[np.ndarray] = []
        dists: list[np.ndarray] = []
        for t, (_, scan) in enumerate(dataset.records, start=1):
            rng = stream(self.seed, _THETA_STREAM, t)
            theta_t, active, dist_t = self._phase1_step(rng, scan, dr_path[t],
                                                        offsets, dataset, geom)
            thetas.append(theta_t)
            masks.append(active)
            dists.append(dist_t)
        return thetas, masks, dists

    def _pose_candidates(self, prev: Pose, u: OdometryDelta,
                         rng: np.random.Generator):
        mp: MotionParams = self.motion
        n = self.n_samples
        rot = u.rot + rng.normal(0.0, mp.rot_std(u.rot), n)
        trans = u.trans + rng.normal(0.0, mp.trans_std(u.trans), n)
        h = prev.heading + rot
        h = h - np.rint(h / (2.0 * np.pi)) * (2.0 * np.pi)
        h[h <= -np.pi] += 2.0 * np.pi
        xs = prev.x + trans * np.cos(h)
        ys = prev.y + trans * np.sin(h)
        return xs, ys, h


class DeadReckoning(BaseEstimator):
    """Baseline mapper: integrate odometry as-is and stamp scans into a map.

    Fitted attributes: path_, thetas_, masks_, map_, geometry_.
    """

    def __init__(self, geometry: Optional[GridGeometry] = None,
                 start: Pose = Pose(0.0, 0.0, 0.0),
                 min_trans: float = 0.0, min_rot: float = 0.0):
        self.geometry = geometry
        self.start = start
        self.min_trans = min_trans
        self.min_rot = min_rot

    def fit(self, dataset: Dataset):
        validate_dataset(dataset)
        if self.min_trans > 0.0 or self.min_rot > 0.0:
            dataset = filter_redundant(dataset, self.min_trans, self.min_rot)
        geom = self.geometry or fit_geometry(dataset, self.start)
        _require_inside(self.start, geom, "start pose")
        m = PartialMap(geom)
        path = [self.start]
        thetas: list[np.ndarray] = []
        masks: list[np.ndarray] = []
        for u, scan in dataset.records:
            z = compose(path[-1], u.rot, u.trans)
            _require_inside(z, geom, "dead-reckoned pose")
            path.append(z)
            theta_t = scan_to_cells(z, scan, dataset.n_beams, geom)
            active = active_beam_mask(scan, dataset.d_max, geom.resolution)
            apply_scan(m, z, theta_t, active)
            thetas.append(theta_t)
            masks.append(active)
        self.geometry_ = geom
        self.path_ = path
        self.thetas_ = thetas
        self.masks_ = masks
        self.map_ = m
        return self


class MotionOnlySlam(_SlamBase):
    """Algorithm 1: the path is sampled from the motion model alone; obstacle
    distances are then importance-resampled per beam against the partial map.

    Fitted attributes: path_, thetas_, masks_, map_, diagnostics_, geometry_.
    """

    def __init__(self, n_samples: int = 100,
                 motion: MotionParams = MotionParams(0.01, 0.1, 0.01, 0.05),
                 perception: PerceptionParams = PerceptionParams(),
                 prior: MapPrior = MapPrior(),
                 geometry: Optional[GridGeometry] = None,
                 start: Pose = Pose(0.0, 0.0, 0.0),
                 min_trans: float = 0.0, min_rot: float = 0.0, seed: int = 0,
                 verbose: int = 0):
        self.n_samples = n_samples
        self.motion = motion
        self.perception = perception
        self.prior = prior
        self.geometry = geometry
        self.start = start
        self.min_trans = min_trans
        self.min_rot = min_rot
        self.seed = seed
        self.verbose = verbose

    def fit(self, dataset: Dataset):
        dataset, geom = self._prepare(dataset)
        pp = self.perception
        mp = self.motion
        res = geom.resolution
        n = self.n_samples
        log_p = math.log(self.prior.p)
        log_q = math.log1p(-self.prior.p)

        # phase 1: one full path from the motion model, odometry only
        path = [self.start]
        for t, (u, _) in enumerate(dataset.records, start=1):
            rng = stream(self.seed, _PATH_STREAM, t)
            z = compose(path[-1],
                        u.rot + rng.normal(0.0, mp.rot_std(u.rot)),
                        u.trans + rng.normal(0.0, mp.trans_std(u.trans)))
            _require_inside(z, geom, f"sampled pose at t={t}")
            path.append(z)

        # phase 2: per beam, resample a distance consistent with the map so far
        m = PartialMap(geom)
        offsets = beam_offsets(dataset.n_beams)
        buf = ray_buffer_cells(pp, geom)
        ridx = np.empty(buf, dtype=np.int64)
        unlab = np.empty(buf, dtype=np.int64)
        rr = np.empty(buf, dtype=np.int64)
        cc = np.empty(buf, dtype=np.int64)
        cand = np.empty(n, dtype=np.int64)
        labels_flat = m.labels.ravel()
        thetas: list[np.ndarray] = []
        masks: list[np.ndarray] = []
        diags: list[StepDiagnostics] = []
        for t, (_, scan) in enumerate(dataset.records, start=1):
            z = path[t]
            scan = np.asarray(scan, dtype=float)
            active = active_beam_mask(scan, dataset.d_max, res)
            kk = np.flatnonzero(active)
            theta_t = np.zeros(dataset.n_beams, dtype=np.int64)
            mask_t = active.copy()
            fallback = 0
            ess_sum = 0.0
            ess_n = 0
            if kk.size:
                rng = stream(self.seed, _THETA_STREAM, t)
                draws = rng.normal(scan[kk], pp.sigma, size=(n, kk.size))
                for j, k in enumerate(kk):
                    angle = z.heading + offsets[k]
                    n_cand, terminal = _kernels.consistent_set_fill(
                        z.x, z.y, angle, pp.d_max, buf, labels_flat,
                        geom.rows, geom.cols, res, geom.origin_x, geom.origin_y,
                        ridx, unlab, rr, cc)
                    if n_cand == 0:
                        mask_t[k] = False
                        fallback += 1
                        continue
                    lm = unlab[:n_cand] * log_q + log_p
                    if terminal:
                        lm[-1] -= log_p
                    mx = lm.max()
                    log_norm = mx + math.log(np.exp(lm - mx).sum())
                    th_j = _cells_one_beam(z, angle, draws[:, j], geom, cand)
                    pos = np.minimum(np.searchsorted(ridx[:n_cand], th_j), n_cand - 1)
                    match = ridx[pos] == th_j
                    d_j = draws[:, j]
                    norm = ndtr((pp.d_max - d_j) / pp.sigma) - ndtr(-d_j / pp.sigma)
                    lw = np.where(match, lm[pos] - log_norm - np.log(norm), LOG_ZERO)
                    try:
                        pick = resample(lw, rng)
                    except AllZeroWeights:
                        mask_t[k] = False
                        fallback += 1
                        continue
                    ess_sum += effective_sample_size(lw)
                    ess_n += 1
                    theta_t[k] = th_j[pick]
            apply_scan(m, z, theta_t, mask_t)
            thetas.append(theta_t)
            masks.append(mask_t)
            diags.append(StepDiagnostics(t, ess_sum / ess_n if ess_n else float("nan"),
                                         fallback))
            self._progress(t, len(dataset))
        self.path_ = path
        self.thetas_ = thetas
        self.masks_ = masks
        self.map_ = m
        self.diagnostics_ = diags
        return self


class StrictConsistencySlam(_SlamBase):
    """Algorithm 2: distances are fixed up front from the perception model;
    pose candidates are then weighted by hard consistency of those distances
    with the partial map. When every candidate is inconsistent the run stops
    with a DegeneracyReport in degeneracy_ (that failure mode is the point).

    Fitted attributes: path_, thetas_, masks_, map_, diagnostics_,
    degeneracy_, geometry_.
    """

    def __init__(self, n_samples: int = 100,
                 motion: MotionParams = MotionParams(0.01, 0.1, 0.01, 0.05),
                 perception: PerceptionParams = PerceptionParams(),
                 prior: MapPrior = MapPrior(),
                 geometry: Optional[GridGeometry] = None,
                 start: Pose = Pose(0.0, 0.0, 0.0),
                 min_trans: float = 0.0, min_rot: float = 0.0, seed: int = 0,
                 verbose: int = 0):
        self.n_samples = n_samples
        self.motion = motion
        self.perception = perception
        self.prior = prior
        self.geometry = geometry
        self.start = start
        self.min_trans = min_trans
        self.min_rot = min_rot
        self.seed = seed
        self.verbose = verbose

    def fit(self, dataset: Dataset):
        dataset, geom = self._prepare(dataset)
        buf = ray_buffer_cells(self.perception, geom)
        offsets = beam_offsets(dataset.n_beams)
        dr_path = dead_reckon_path(dataset, self.start)
        res = geom.resolution
        log_p = math.log(self.prior.p)
        log_q = math.log1p(-self.prior.p)
        m = PartialMap(geom)
        labels_flat = m.labels.ravel()
        path = [self.start]
        masks: list[np.ndarray] = []
        committed_thetas: list[np.ndarray] = []
        diags: list[StepDiagnostics] = []
        self.degeneracy_ = None
        for t, (u, scan) in enumerate(dataset.records, start=1):
            # same per-timestep stream layout as MapAgreementSlam, so the
            # distance-fixing phase is identical across the two given a seed
            rng = stream(self.seed, _THETA_STREAM, t)
            _, active, dist_t = self._phase1_step(rng, scan, dr_path[t],
                                                  offsets, dataset, geom)
            xs, ys, hs = self._pose_candidates(path[-1], u, rng)
            lw = np.full(self.n_samples, LOG_ZERO)
            inside = 0
            for i in range(self.n_samples):
                if not geom.contains(xs[i], ys[i]):
                    continue
                inside += 1
                lw[i] = _kernels.strict_pose_logweight(
                    xs[i], ys[i], hs[i], offsets, dist_t, active,
                    self.perception.d_max, buf, labels_flat, geom.rows,
                    geom.cols, res, geom.origin_x, geom.origin_y, log_p, log_q)
            if inside == 0:
                raise OutOfBounds(f"every pose candidate at t={t} left the grid")
            try:
                pick = resample(lw, rng)
            except AllZeroWeights:
                self.degeneracy_ = DegeneracyReport(t, inside)
                break
            z = Pose(float(xs[pick]), float(ys[pick]), float(hs[pick]))
            path.append(z)
            theta_t = scan_to_cells(z, dist_t, dataset.n_beams, geom)
            apply_scan(m, z, theta_t, active)
            masks.append(active)
            committed_thetas.append(theta_t)
            diags.append(StepDiagnostics(t, effective_sample_size(lw)))
            self._progress(t, len(dataset))
        self.path_ = path
        self.thetas_ = committed_thetas
        self.masks_ = masks
        self.map_ = m
        self.diagnostics_ = diags
        return self


class MapAgreementSlam(_SlamBase):
    """Algorithm 3 (the main one): distances fixed as in algorithm 2, pose
    candidates weighted by per-beam agreement ratios against the thresholded
    probabilistic map. If every ratio-product is zero, the candidate with the
    most agreeing cells is committed instead (diagnostics-flagged).

    Fitted attributes: path_, thetas_, masks_, map_ (ProbabilisticMap),
    diagnostics_, geometry_.
    """

    def __init__(self, n_samples: int = 100,
                 motion: MotionParams = MotionParams(0.01, 0.1, 0.01, 0.05),
                 perception: PerceptionParams = PerceptionParams(),
                 prior: MapPrior = MapPrior(),
                 labeling: LabelingParams = LabelingParams(),
                 geometry: Optional[GridGeometry] = None,
                 start: Pose = Pose(0.0, 0.0, 0.0),
                 min_trans: float = 0.0, min_rot: float = 0.0, seed: int = 0,
                 verbose: int = 0):
        self.n_samples = n_samples
        self.motion = motion
        self.perception = perception
        self.prior = prior
        self.labeling = labeling
        self.geometry = geometry
        self.start = start
        self.min_trans = min_trans
        self.min_rot = min_rot
        self.seed = seed
        self.verbose = verbose

    def fit(self, dataset: Dataset):
        dataset, geom = self._prepare(dataset)
        offsets = beam_offsets(dataset.n_beams)
        dr_path = dead_reckon_path(dataset, self.start)
        pm = ProbabilisticMap(geom)
        occupied = pm.occupied_count.ravel()
        observed = pm.observed_count.ravel()
        # incrementally maintained threshold labeling of pm (all Unknown at start)
        cache = np.zeros(geom.rows * geom.cols, dtype=np.int8)
        pi = self.labeling.pi
        n = self.n_samples
        path = [self.start]
        masks: list[np.ndarray] = []
        committed_thetas: list[np.ndarray] = []
        diags: list[StepDiagnostics] = []
        agrees = np.empty(n, dtype=np.int64)
        lw = np.empty(n)
        cand_thetas = np.zeros((n, dataset.n_beams), dtype=np.int64)
        for t, (u, scan) in enumerate(dataset.records, start=1):
            # one stream per timestep: distance draws first, then pose noise,
            # then the resampling uniform
            rng = stream(self.seed, _THETA_STREAM, t)
            theta_ref, active, dist_t = self._phase1_step(rng, scan, dr_path[t],
                                                          offsets, dataset, geom)
            xs, ys, hs = self._pose_candidates(path[-1], u, rng)
            lw[:] = LOG_ZERO
            agrees[:] = -1
            for i in range(n):
                if not geom.contains(xs[i], ys[i]):
                    continue
                w, a, _ = _kernels.agreement_pose(
                    xs[i], ys[i], hs[i], offsets, theta_ref, dist_t,
                    True, active, cache, geom.rows, geom.cols,
                    geom.resolution, geom.origin_x, geom.origin_y, cand_thetas[i])
                lw[i] = w
                agrees[i] = a
            u_pick = rng.random()
            fell_back = False
            m = lw.max()
            if m > LOG_ZERO:
                # inverse-CDF resample and effective sample size in one pass
                w = np.exp(lw - m)
                tot = w.sum()
                ess = float(tot * tot / (w @ w))
                pick = min(int(np.searchsorted(np.cumsum(w), u_pick * tot,
                                               side="right")), n - 1)
            else:
                if not (agrees >= 0).any():
                    raise OutOfBounds(f"every pose candidate at t={t} left the grid")
                pick = int(np.argmax(agrees))
                ess = float("nan")
                fell_back = True
            z = Pose(float(xs[pick]), float(ys[pick]), float(hs[pick]))
            path.append(z)
            theta_t = cand_thetas[pick].copy()
            _kernels.accumulate_scan_cells(
                z.x, z.y, z.heading, offsets, theta_t, active,
                occupied, observed, geom.rows, geom.cols, geom.resolution,
                geom.origin_x, geom.origin_y, cache, pi, True)
            masks.append(active)
            committed_thetas.append(theta_t)
            diags.append(StepDiagnostics(t, ess, 0, fell_back))
            self._progress(t, len(dataset))
        self.path_ = path
        self.thetas_ = committed_thetas
        self.masks_ = masks
        self.map_ = pm
        self.diagnostics_ = diags
        return self
