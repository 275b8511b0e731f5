"""Compiled grid-traversal kernels.

Every ray walked anywhere in the package goes through `_ray_setup` /
`_ray_step`, so the map updates, consistency sets, agreement counts and the
public raycast all traverse exactly the same cell sequence.

Traversal conventions:
- supercover stepping: a crossing time tie (within TIE_TOL * resolution)
  means the ray passes through a cell corner, and the walk takes a single
  diagonal step; cells touched only at that corner point are not traversed.
- the ray index of a metric distance d along the ray is the index of the
  cell containing the point at d, equal to the number of grid-line crossings
  up to d (`_theta_steps`), walked with the same stepping rule as the
  traversal so the two always agree.
- cell labels are UNKNOWN=0 < EMPTY=1 < OCCUPIED=2; scan application merges
  with max(), which encodes the occupied-wins conflict rule.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

TIE_TOL = 1e-9  # crossing-time tie tolerance, in units of the grid resolution

UNKNOWN = 0
EMPTY = 1
OCCUPIED = 2

TWO_PI = 2.0 * np.pi


@njit(inline="always", cache=True)
def _ray_setup(x, y, angle, res, ox, oy):
    angle = angle - np.rint(angle / TWO_PI) * TWO_PI
    gx = x - ox
    gy = y - oy
    dx = np.cos(angle)
    dy = np.sin(angle)
    col = int(np.floor(gx / res))
    row = int(np.floor(gy / res))
    sx = 1 if dx > 0.0 else -1
    sy = 1 if dy > 0.0 else -1
    nx = col + 1 if dx > 0.0 else col
    ny = row + 1 if dy > 0.0 else row
    return gx, gy, dx, dy, col, row, sx, sy, nx, ny


@njit(inline="always", cache=True)
def _ray_step(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, tol):
    tx = ((nx * res) - gx) / dx if dx != 0.0 else np.inf
    ty = ((ny * res) - gy) / dy if dy != 0.0 else np.inf
    if tx < ty - tol:
        col += sx
        nx += sx
        t = tx
    elif ty < tx - tol:
        row += sy
        ny += sy
        t = ty
    else:
        # corner crossing: step both axes at once
        col += sx
        nx += sx
        row += sy
        ny += sy
        t = tx if tx > ty else ty
    return col, row, nx, ny, t


@njit(inline="always", cache=True)
def _theta_steps(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, dist):
    """Ray index of the cell containing the point at metric `dist`, counted
    with the same stepping rule as the traversal (corner ties advance one
    diagonal step, not two).

    A nanometer push along the ray resolves distances that sit exactly on a
    cell boundary (exact wall hits) into the farther cell, so every pose
    converts a shared boundary distance the same way. Clamped to >= 1.
    """
    tol = TIE_TOL * res
    dpush = dist + 1e-9
    max_steps = int(1.5 * dpush / res) + 4
    steps = 0
    while steps < max_steps:
        tx = ((nx * res) - gx) / dx if dx != 0.0 else np.inf
        ty = ((ny * res) - gy) / dy if dy != 0.0 else np.inf
        exit_t = tx if tx < ty else ty
        if dpush < exit_t:
            break
        if tx < ty - tol:
            col += sx
            nx += sx
        elif ty < tx - tol:
            row += sy
            ny += sy
        else:
            col += sx
            nx += sx
            row += sy
            ny += sy
        steps += 1
    return steps if steps >= 1 else 1


@njit(cache=True)
def ray_cells(x, y, angle, max_cells, rows, cols, res, ox, oy, out_rows, out_cols):
    """Fill out_rows/out_cols with the traversed cells; return the count."""
    gx, gy, dx, dy, col, row, sx, sy, nx, ny = _ray_setup(x, y, angle, res, ox, oy)
    tol = TIE_TOL * res
    n = 0
    while n < max_cells:
        col, row, nx, ny, _ = _ray_step(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, tol)
        if row < 0 or row >= rows or col < 0 or col >= cols:
            break
        out_rows[n] = row
        out_cols[n] = col
        n += 1
    return n


@njit(cache=True)
def endpoint_cells(x, y, heading, offsets, dists, res, ox, oy, out):
    """Ray index per beam of the cell containing each beam's metric distance."""
    for k in range(offsets.shape[0]):
        gx, gy, dx, dy, col, row, sx, sy, nx, ny = _ray_setup(
            x, y, heading + offsets[k], res, ox, oy)
        out[k] = _theta_steps(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, dists[k])


@njit(cache=True)
def first_hit_t(x, y, angle, cap, occ, rows, cols, res, ox, oy):
    """Distance to the boundary of the first wall cell along the ray, capped."""
    gx, gy, dx, dy, col, row, sx, sy, nx, ny = _ray_setup(x, y, angle, res, ox, oy)
    tol = TIE_TOL * res
    while True:
        col, row, nx, ny, t = _ray_step(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, tol)
        if t >= cap:
            return cap
        if row < 0 or row >= rows or col < 0 or col >= cols:
            return cap
        if occ[row * cols + col]:
            return t


@njit(cache=True)
def scan_ranges(x, y, heading, offsets, cap, occ, rows, cols, res, ox, oy, out):
    for k in range(offsets.shape[0]):
        out[k] = first_hit_t(x, y, heading + offsets[k], cap, occ, rows, cols, res, ox, oy)


@njit(cache=True)
def consistent_set_fill(x, y, angle, cap_t, max_cells, labels, rows, cols, res, ox, oy,
                        out_ridx, out_unlab, out_row, out_col):
    """Candidate obstacle cells along a beam over a ternary label grid.

    Walks cells entered within metric range cap_t, skipping EMPTY cells,
    collecting UNKNOWN cells, and stopping inclusively at the first OCCUPIED
    cell. Returns (candidate count, 1 if the last candidate is terminal).
    """
    gx, gy, dx, dy, col, row, sx, sy, nx, ny = _ray_setup(x, y, angle, res, ox, oy)
    tol = TIE_TOL * res
    n = 0
    unlab = 0
    for step in range(1, max_cells + 1):
        col, row, nx, ny, t = _ray_step(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, tol)
        if t > cap_t:
            break
        if row < 0 or row >= rows or col < 0 or col >= cols:
            break
        lab = labels[row * cols + col]
        if lab == EMPTY:
            continue
        if lab == UNKNOWN:
            out_ridx[n] = step
            out_unlab[n] = unlab
            out_row[n] = row
            out_col[n] = col
            n += 1
            unlab += 1
        else:
            out_ridx[n] = step
            out_unlab[n] = unlab
            out_row[n] = row
            out_col[n] = col
            n += 1
            return n, 1
    return n, 0


@njit(cache=True)
def strict_pose_logweight(x, y, heading, offsets, dists, active, cap_t, max_cells,
                          labels, rows, cols, res, ox, oy, log_p, log_q):
    """Sum over beams of log Tr.Geom(C_k, p; theta_k) at a candidate pose,
    where theta_k is the ray index of the committed distance dists[k] as seen
    from this pose. Returns -inf as soon as any active beam is inconsistent.
    """
    tol = TIE_TOL * res
    total = 0.0
    logms = np.empty(max_cells, dtype=np.float64)
    for k in range(offsets.shape[0]):
        if not active[k]:
            continue
        gx, gy, dx, dy, col, row, sx, sy, nx, ny = _ray_setup(
            x, y, heading + offsets[k], res, ox, oy)
        theta = _theta_steps(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, dists[k])
        n = 0
        unlab = 0
        lm_theta = np.nan
        found = False
        for step in range(1, max_cells + 1):
            col, row, nx, ny, t = _ray_step(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, tol)
            if t > cap_t:
                break
            if row < 0 or row >= rows or col < 0 or col >= cols:
                break
            lab = labels[row * cols + col]
            if lab == EMPTY:
                continue
            if lab == UNKNOWN:
                lm = unlab * log_q + log_p
                logms[n] = lm
                if step == theta:
                    lm_theta = lm
                    found = True
                n += 1
                unlab += 1
            else:
                lm = unlab * log_q
                logms[n] = lm
                if step == theta:
                    lm_theta = lm
                    found = True
                n += 1
                break
        if n == 0 or not found:
            return -np.inf
        m = logms[0]
        for i in range(1, n):
            if logms[i] > m:
                m = logms[i]
        s = 0.0
        for i in range(n):
            s += np.exp(logms[i] - m)
        total += lm_theta - (m + np.log(s))
    return total


@njit(cache=True)
def agreement_pose(x, y, heading, offsets, thetas, dists, use_dists, active,
                   label_grid, rows, cols, res, ox, oy, out_thetas):
    """Sum of per-beam log agreement ratios against a labeled map.

    Per active beam, the cells induced by the endpoint -- EMPTY before it,
    OCCUPIED at it -- are compared with label_grid; UNKNOWN map cells are
    discarded. The endpoint is thetas[k] directly, or derived from the
    committed metric distance dists[k] when use_dists is set. A beam with no
    comparable cell contributes log(1)=0. Returns (logw, total agreeing
    cells, 1 if any beam's ratio was zero); logw is -inf in that case.
    """
    tol = TIE_TOL * res
    logw = 0.0
    total_agree = 0
    any_zero = 0
    for k in range(offsets.shape[0]):
        if not active[k]:
            continue
        gx, gy, dx, dy, col, row, sx, sy, nx, ny = _ray_setup(
            x, y, heading + offsets[k], res, ox, oy)
        if use_dists:
            theta = _theta_steps(gx, gy, dx, dy, col, row, sx, sy, nx, ny,
                                 res, dists[k])
            out_thetas[k] = theta
        else:
            theta = thetas[k]
        agree = 0
        disagree = 0
        for step in range(1, theta + 1):
            col, row, nx, ny, _ = _ray_step(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, tol)
            if row < 0 or row >= rows or col < 0 or col >= cols:
                break
            lab = label_grid[row * cols + col]
            if lab == UNKNOWN:
                continue
            induced = OCCUPIED if step == theta else EMPTY
            if lab == induced:
                agree += 1
            else:
                disagree += 1
        total_agree += agree
        if agree + disagree == 0:
            continue
        if agree == 0:
            any_zero = 1
        else:
            logw += np.log(agree / (agree + disagree))
    if any_zero:
        return -np.inf, total_agree, 1
    return logw, total_agree, 0


@njit(cache=True)
def phase1_pick(x, y, heading, offsets, active, draws, unif, res, ox, oy,
                d_max, sigma, log_p, log_q, out_theta, out_dist):
    """Per-beam importance resampling of obstacle distances.

    draws is (n, n_beams) candidate-major Gaussian proposals around the
    readings; unif one uniform per beam; masked beams are skipped. Weights
    follow the prior-geometric target over the truncation normalizer, with
    the geometric exponent counted in ray cells at this (dead-reckoned) pose
    and the normalizer evaluated at the metric draw. Writes the picked cell
    index and metric distance for each active beam.
    """
    n = draws.shape[0]
    lw = np.empty(n)
    w = np.empty(n)
    th = np.empty(n, dtype=np.int64)
    inv_s = 1.0 / (sigma * np.sqrt(2.0))
    for j in range(offsets.shape[0]):
        if not active[j]:
            continue
        gx, gy, dx, dy, col, row, sx, sy, nx, ny = _ray_setup(
            x, y, heading + offsets[j], res, ox, oy)
        mx = -np.inf
        for i in range(n):
            d = draws[i, j]
            t = _theta_steps(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, d)
            th[i] = t
            norm = 0.5 * (math.erfc(-(d_max - d) * inv_s) - math.erfc(d * inv_s))
            v = (t - 1) * log_q + log_p - np.log(norm)
            lw[i] = v
            if v > mx:
                mx = v
        tot = 0.0
        for i in range(n):
            w[i] = np.exp(lw[i] - mx)
            tot += w[i]
        thresh = unif[j] * tot
        cum = 0.0
        pick = n - 1
        for i in range(n):
            cum += w[i]
            if cum >= thresh:
                pick = i
                break
        out_theta[j] = th[pick]
        out_dist[j] = draws[pick, j]


@njit(cache=True)
def apply_scan_cells(x, y, heading, offsets, thetas, active, labels,
                     rows, cols, res, ox, oy):
    """Label cells before each endpoint EMPTY and the endpoint OCCUPIED.

    Merging uses max(), so an OCCUPIED cell is never demoted and the result
    is independent of beam order. Endpoints beyond the grid border are
    dropped; the traversed prefix is still labeled EMPTY.
    """
    tol = TIE_TOL * res
    for k in range(offsets.shape[0]):
        if not active[k]:
            continue
        theta = thetas[k]
        gx, gy, dx, dy, col, row, sx, sy, nx, ny = _ray_setup(
            x, y, heading + offsets[k], res, ox, oy)
        for step in range(1, theta + 1):
            col, row, nx, ny, _ = _ray_step(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, tol)
            if row < 0 or row >= rows or col < 0 or col >= cols:
                break
            idx = row * cols + col
            if step == theta:
                labels[idx] = OCCUPIED
            elif labels[idx] < EMPTY:
                labels[idx] = EMPTY


@njit(cache=True)
def accumulate_scan_cells(x, y, heading, offsets, thetas, active,
                          occupied, observed, rows, cols, res, ox, oy,
                          label_cache, pi, update_cache):
    """Count-based scan accumulation: observed += 1 for every determined cell,
    occupied += 1 for endpoints. Optionally refreshes a cached threshold
    labeling for the touched cells."""
    tol = TIE_TOL * res
    for k in range(offsets.shape[0]):
        if not active[k]:
            continue
        theta = thetas[k]
        gx, gy, dx, dy, col, row, sx, sy, nx, ny = _ray_setup(
            x, y, heading + offsets[k], res, ox, oy)
        for step in range(1, theta + 1):
            col, row, nx, ny, _ = _ray_step(gx, gy, dx, dy, col, row, sx, sy, nx, ny, res, tol)
            if row < 0 or row >= rows or col < 0 or col >= cols:
                break
            idx = row * cols + col
            observed[idx] += 1
            if step == theta:
                occupied[idx] += 1
            if update_cache:
                ratio = occupied[idx] / observed[idx]
                if ratio < pi:
                    label_cache[idx] = EMPTY
                elif ratio >= 1.0 - pi:
                    label_cache[idx] = OCCUPIED
                else:
                    label_cache[idx] = UNKNOWN
