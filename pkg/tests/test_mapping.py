"""Mapping tests: consistency sets, scan application with the occupied-wins
rule, count accumulation, threshold labeling, and agreement weights, each
checked against straightforward pure-Python oracles."""

import math

import numpy as np
import pytest

from gridslam.errors import OutOfBounds
from gridslam.geometry import Cell, GridGeometry, Pose, beam_angle, raycast
from gridslam.mapping import (CellLabel, LabelingParams, PartialMap,
                              ProbabilisticMap, accumulate_scan,
                              agreement_logweight, apply_scan, consistent_set,
                              label_cell, label_grid, labels_from_grayscale,
                              ray_buffer_cells, render)
from gridslam.models import LOG_ZERO, PerceptionParams

G = GridGeometry(30, 30, 0.1)
PP = PerceptionParams(sigma=0.02, d_max=1.2)  # 12-cell range in this grid
LP = LabelingParams(0.2)


def center_pose(row, col, heading=0.0):
    x, y = G.center_of(Cell(row, col))
    return Pose(x, y, heading)


def entry_distance(cell, x0, y0, angle, g):
    """Distance at which the ray from (x0, y0) enters the cell (slab method)."""
    dx, dy = math.cos(angle), math.sin(angle)
    res = g.resolution
    xlo = g.origin_x + cell.col * res
    ylo = g.origin_y + cell.row * res
    ts = [0.0]
    if dx != 0.0:
        ts.append(min((xlo - x0) / dx, (xlo + res - x0) / dx))
    if dy != 0.0:
        ts.append(min((ylo - y0) / dy, (ylo + res - y0) / dy))
    return max(ts)


def consistent_set_oracle(m, z, k, pp, n_beams):
    """Reference walk over the raycast cells entered within the range."""
    angle = beam_angle(k, z.heading, n_beams)
    cells = raycast(z, angle, ray_buffer_cells(pp, m.geometry), m.geometry)
    out = []
    unlabeled = 0
    for step, cell in enumerate(cells, start=1):
        if entry_distance(cell, z.x, z.y, angle, m.geometry) > pp.d_max:
            break
        lab = CellLabel(int(m.labels[cell.row, cell.col]))
        if lab == CellLabel.EMPTY:
            continue
        if lab == CellLabel.UNKNOWN:
            out.append((cell, step, unlabeled, False))
            unlabeled += 1
        else:
            out.append((cell, step, unlabeled, True))
            break
    return out


def apply_scan_oracle(labels, z, thetas, mask, n_beams, g):
    """Sequential per-beam application with explicit conflict rules."""
    for k in range(n_beams):
        if not mask[k]:
            continue
        cells = raycast(z, beam_angle(k, z.heading, n_beams), int(thetas[k]), g)
        for step, cell in enumerate(cells, start=1):
            if step == int(thetas[k]):
                labels[cell.row, cell.col] = CellLabel.OCCUPIED
            elif labels[cell.row, cell.col] != CellLabel.OCCUPIED:
                labels[cell.row, cell.col] = CellLabel.EMPTY
    return labels


class TestConsistentSet:
    def test_fresh_map_every_cell_is_candidate(self):
        m = PartialMap(G)
        z = center_pose(15, 2)
        c = consistent_set(m, z, 2, PP, 5)  # beam 2 of 5 points along heading
        cells = raycast(z, 0.0, 12, G)  # 1.2 m range = 12 axis-aligned cells
        assert [cand.cell for cand in c.candidates] == cells
        assert [cand.unlabeled_before for cand in c.candidates] == list(range(len(cells)))
        assert not any(cand.terminal_occupied for cand in c.candidates)

    def test_fully_determined_ray(self):
        m = PartialMap(G)
        z = center_pose(15, 2)
        m.labels[15, 3] = CellLabel.EMPTY
        m.labels[15, 4] = CellLabel.EMPTY
        m.labels[15, 5] = CellLabel.OCCUPIED
        c = consistent_set(m, z, 2, PP, 5)
        assert len(c) == 1
        (cand,) = c.candidates
        assert cand == (Cell(15, 5), 3, 0, True)

    def test_mixed_ray_matches_enumeration(self):
        m = PartialMap(G)
        z = center_pose(15, 2)
        for col, lab in zip(range(3, 8), "EUEUO"):
            m.labels[15, col] = {"E": 1, "U": 0, "O": 2}[lab]
        c = consistent_set(m, z, 2, PP, 5)
        assert [(cand.ray_index, cand.unlabeled_before, cand.terminal_occupied)
                for cand in c.candidates] == [(2, 0, False), (4, 1, False), (5, 2, True)]
        assert consistent_set_oracle(m, z, 2, PP, 5) == [
            (cand.cell, cand.ray_index, cand.unlabeled_before, cand.terminal_occupied)
            for cand in c.candidates]

    def test_random_maps_match_oracle(self):
        rng = np.random.default_rng(8)
        n_beams = 7
        for _ in range(60):
            m = PartialMap(G)
            m.labels[:] = rng.choice([0, 0, 1, 2], size=m.labels.shape,
                                     p=[0.4, 0.2, 0.3, 0.1]).astype(np.int8)
            z = Pose(rng.uniform(0.3, 2.7), rng.uniform(0.3, 2.7),
                     rng.uniform(-math.pi, math.pi))
            k = int(rng.integers(0, n_beams))
            c = consistent_set(m, z, k, PP, n_beams)
            assert [(cand.cell, cand.ray_index, cand.unlabeled_before,
                     cand.terminal_occupied) for cand in c.candidates] \
                == consistent_set_oracle(m, z, k, PP, n_beams)

    def test_candidates_are_raycast_subsequence(self):
        rng = np.random.default_rng(18)
        for _ in range(30):
            m = PartialMap(G)
            m.labels[:] = rng.choice([0, 1, 2], size=m.labels.shape,
                                     p=[0.5, 0.4, 0.1]).astype(np.int8)
            z = Pose(rng.uniform(0.3, 2.7), rng.uniform(0.3, 2.7),
                     rng.uniform(-math.pi, math.pi))
            cells = raycast(z, beam_angle(3, z.heading, 7), ray_buffer_cells(PP, G), G)
            c = consistent_set(m, z, 3, PP, 7)
            indices = [cand.ray_index for cand in c.candidates]
            assert indices == sorted(set(indices))
            assert all(cells[i - 1] == cand.cell
                       for i, cand in zip(indices, c.candidates))

    def test_pose_outside_grid(self):
        with pytest.raises(OutOfBounds):
            consistent_set(PartialMap(G), Pose(-1.0, 0.5, 0.0), 0, PP, 5)


class TestApplyScan:
    def test_single_beam_definitional(self):
        m = PartialMap(G)
        z = center_pose(10, 5)
        apply_scan(m, z, [3], [True])
        assert m.labels[10, 6] == CellLabel.EMPTY
        assert m.labels[10, 7] == CellLabel.EMPTY
        assert m.labels[10, 8] == CellLabel.OCCUPIED

    def test_idempotent(self):
        m = PartialMap(G)
        z = center_pose(10, 5, 0.7)
        apply_scan(m, z, [5], [True])
        before = m.labels.copy()
        apply_scan(m, z, [5], [True])
        assert np.array_equal(m.labels, before)

    def test_occupied_wins_between_scans(self):
        for first, second in ((4, 8), (8, 4)):
            m = PartialMap(G)
            z = center_pose(10, 5)
            apply_scan(m, z, [first], [True])
            apply_scan(m, z, [second], [True])
            # cell at ray index 4 saw Empty (en route to 8) and Occupied (at 4)
            assert m.labels[10, 9] == CellLabel.OCCUPIED

    def test_masked_beams_ignored(self):
        m = PartialMap(G)
        apply_scan(m, center_pose(10, 5), [3], [False])
        assert not m.labels.any()

    def test_random_scans_match_sequential_oracle(self):
        rng = np.random.default_rng(23)
        n_beams = 9
        for _ in range(40):
            m = PartialMap(G)
            z = Pose(rng.uniform(0.4, 2.6), rng.uniform(0.4, 2.6),
                     rng.uniform(-math.pi, math.pi))
            thetas = rng.integers(1, 12, size=n_beams)
            mask = rng.random(n_beams) < 0.8
            apply_scan(m, z, thetas, mask)
            want = apply_scan_oracle(np.zeros_like(m.labels), z, thetas, mask,
                                     n_beams, G)
            assert np.array_equal(m.labels, want)

    def test_endpoint_beyond_border_drops_endpoint_only(self):
        m = PartialMap(G)
        z = center_pose(10, 27)
        apply_scan(m, z, [10], [True])  # only 2 cells exist to the right
        assert m.labels[10, 28] == CellLabel.EMPTY
        assert m.labels[10, 29] == CellLabel.EMPTY
        assert (m.labels == CellLabel.OCCUPIED).sum() == 0


class TestAccumulateScan:
    def test_single_endpoint_counts(self):
        pm = ProbabilisticMap(G)
        accumulate_scan(pm, center_pose(10, 5), [3], [True])
        assert pm.occupied_count[10, 8] == 1
        assert pm.observed_count[10, 8] == 1
        assert pm.observed_count[10, 6] == 1
        assert pm.occupied_count[10, 6] == 0

    def test_ratio_tally(self):
        pm = ProbabilisticMap(G)
        z = center_pose(10, 5)
        for _ in range(4):
            accumulate_scan(pm, z, [8], [True])  # cell 4 passed through: Empty
        accumulate_scan(pm, z, [4], [True])      # cell 4 endpoint: Occupied
        assert pm.occupied_count[10, 9] == 1
        assert pm.observed_count[10, 9] == 5

    def test_random_scans_match_tally_oracle(self):
        rng = np.random.default_rng(31)
        n_beams = 6
        pm = ProbabilisticMap(G)
        occ = {}
        obs = {}
        for _ in range(25):
            z = Pose(rng.uniform(0.4, 2.6), rng.uniform(0.4, 2.6),
                     rng.uniform(-math.pi, math.pi))
            thetas = rng.integers(1, 12, size=n_beams)
            mask = rng.random(n_beams) < 0.9
            accumulate_scan(pm, z, thetas, mask)
            for k in range(n_beams):
                if not mask[k]:
                    continue
                cells = raycast(z, beam_angle(k, z.heading, n_beams),
                                int(thetas[k]), G)
                for step, cell in enumerate(cells, start=1):
                    obs[cell] = obs.get(cell, 0) + 1
                    if step == int(thetas[k]):
                        occ[cell] = occ.get(cell, 0) + 1
        for cell, n in obs.items():
            assert pm.observed_count[cell.row, cell.col] == n
        for cell, n in occ.items():
            assert pm.occupied_count[cell.row, cell.col] == n
        assert pm.observed_count.sum() == sum(obs.values())


class TestLabeling:
    def test_never_observed_is_unknown(self):
        pm = ProbabilisticMap(G)
        assert label_cell(pm, Cell(0, 0), LP) == CellLabel.UNKNOWN

    def test_boundary_ratio_is_unknown(self):
        pm = ProbabilisticMap(G)
        pm.occupied_count[3, 3] = 1
        pm.observed_count[3, 3] = 5
        assert label_cell(pm, Cell(3, 3), LP) == CellLabel.UNKNOWN  # 0.2 in [pi, 1-pi)

    def test_high_ratio_is_occupied(self):
        pm = ProbabilisticMap(G)
        pm.occupied_count[3, 3] = 4
        pm.observed_count[3, 3] = 5
        assert label_cell(pm, Cell(3, 3), LP) == CellLabel.OCCUPIED  # 0.8 >= 1-pi

    def test_bands_partition_ratio_space(self):
        pm = ProbabilisticMap(G)
        for num in range(0, 101):
            pm.occupied_count[0, 0] = num
            pm.observed_count[0, 0] = 100
            ratio = num / 100
            lab = label_cell(pm, Cell(0, 0), LP)
            in_empty = ratio < LP.pi
            in_unknown = LP.pi <= ratio < 1 - LP.pi
            in_occupied = ratio >= 1 - LP.pi
            assert in_empty + in_unknown + in_occupied == 1
            assert lab == (CellLabel.EMPTY if in_empty else
                           CellLabel.UNKNOWN if in_unknown else CellLabel.OCCUPIED)

    def test_label_grid_matches_scalar(self):
        rng = np.random.default_rng(5)
        pm = ProbabilisticMap(G)
        pm.observed_count[:] = rng.integers(0, 6, size=(G.rows, G.cols))
        pm.occupied_count[:] = rng.integers(0, 6, size=(G.rows, G.cols))
        pm.occupied_count[:] = np.minimum(pm.occupied_count, pm.observed_count)
        grid = label_grid(pm, LP)
        for r in range(G.rows):
            for c in range(G.cols):
                assert grid[r, c] == label_cell(pm, Cell(r, c), LP)


def agreement_oracle(pm, z, thetas, mask, lp, pp, n_beams):
    grid = label_grid(pm, lp)
    total = 0.0
    for k in range(n_beams):
        if not mask[k]:
            continue
        cells = raycast(z, beam_angle(k, z.heading, n_beams), int(thetas[k]),
                        pm.geometry)
        agree = disagree = 0
        for step, cell in enumerate(cells, start=1):
            lab = grid[cell.row, cell.col]
            if lab == CellLabel.UNKNOWN:
                continue
            induced = CellLabel.OCCUPIED if step == int(thetas[k]) else CellLabel.EMPTY
            if lab == induced:
                agree += 1
            else:
                disagree += 1
        if agree + disagree == 0:
            continue
        if agree == 0:
            return LOG_ZERO
        total += math.log(agree / (agree + disagree))
    return total


class TestAgreementWeight:
    def _pm_with_row(self, row, pattern):
        """Counts that threshold into the given label pattern along a row."""
        pm = ProbabilisticMap(G)
        for col, lab in zip(range(6, 6 + len(pattern)), pattern):
            if lab == "E":
                pm.observed_count[row, col] = 5
            elif lab == "O":
                pm.observed_count[row, col] = 5
                pm.occupied_count[row, col] = 5
        return pm

    def test_full_agreement_is_log_one(self):
        pm = self._pm_with_row(10, "EEEO")
        lw = agreement_logweight(pm, center_pose(10, 5), [4], [True], LP, PP, 1)
        assert lw == 0.0

    def test_three_agree_one_disagree(self):
        pm = self._pm_with_row(10, "EEEE")
        lw = agreement_logweight(pm, center_pose(10, 5), [4], [True], LP, PP, 1)
        assert lw == pytest.approx(math.log(0.75), abs=1e-12)

    def test_unknown_territory_is_neutral(self):
        pm = ProbabilisticMap(G)
        lw = agreement_logweight(pm, center_pose(10, 5), [4], [True], LP, PP, 1)
        assert lw == 0.0

    def test_zero_ratio_beam_gives_log_zero(self):
        pm = self._pm_with_row(10, "OOOE")  # opposite of the induced E,E,E,O
        lw = agreement_logweight(pm, center_pose(10, 5), [4], [True], LP, PP, 1)
        assert lw == LOG_ZERO

    def test_monotone_in_comparable_cells(self):
        base = self._pm_with_row(10, "EEEE")
        z = center_pose(10, 5)
        lw_base = agreement_logweight(base, z, [6], [True], LP, PP, 1)
        more_agree = self._pm_with_row(10, "EEEEE")
        assert agreement_logweight(more_agree, z, [6], [True], LP, PP, 1) >= lw_base
        more_disagree = self._pm_with_row(10, "EEEEO")
        assert agreement_logweight(more_disagree, z, [6], [True], LP, PP, 1) <= lw_base

    def test_random_fixtures_match_oracle(self):
        rng = np.random.default_rng(44)
        n_beams = 8
        for _ in range(40):
            pm = ProbabilisticMap(G)
            pm.observed_count[:] = rng.integers(0, 4, size=(G.rows, G.cols))
            pm.occupied_count[:] = np.where(rng.random((G.rows, G.cols)) < 0.3,
                                            pm.observed_count, 0)
            z = Pose(rng.uniform(0.4, 2.6), rng.uniform(0.4, 2.6),
                     rng.uniform(-math.pi, math.pi))
            thetas = rng.integers(1, 12, size=n_beams)
            mask = rng.random(n_beams) < 0.9
            got = agreement_logweight(pm, z, thetas, mask, LP, PP, n_beams)
            want = agreement_oracle(pm, z, thetas, mask, LP, PP, n_beams)
            if want == LOG_ZERO:
                assert got == LOG_ZERO
            else:
                assert got == pytest.approx(want, abs=1e-12)


class TestApplyThenQuery:
    def test_reapplied_beam_has_single_terminal_candidate(self):
        rng = np.random.default_rng(51)
        for _ in range(30):
            m = PartialMap(G)
            z = Pose(rng.uniform(0.5, 2.5), rng.uniform(0.5, 2.5),
                     rng.uniform(-math.pi, math.pi))
            theta = int(rng.integers(1, 10))
            cells = raycast(z, z.heading, ray_buffer_cells(PP, G), G)
            if len(cells) < theta:
                continue
            apply_scan(m, z, [theta], [True])
            c = consistent_set(m, z, 0, PP, 1)
            assert len(c) == 1
            assert c.candidates[0].ray_index == theta
            assert c.candidates[0].terminal_occupied
            assert c.candidates[0].unlabeled_before == 0


class TestRender:
    def test_fresh_map_is_all_gray(self):
        img = render(PartialMap(G))
        assert img.dtype == np.uint8
        assert (img == 127).all()

    def test_single_occupied_pixel(self):
        m = PartialMap(G)
        m.labels[4, 7] = CellLabel.OCCUPIED
        img = render(m)
        assert img[4, 7] == 0
        assert (img == 0).sum() == 1

    def test_lut_mapping(self):
        m = PartialMap(G)
        rng = np.random.default_rng(2)
        m.labels[:] = rng.integers(0, 3, size=m.labels.shape).astype(np.int8)
        img = render(m)
        table = {CellLabel.UNKNOWN: 127, CellLabel.EMPTY: 255, CellLabel.OCCUPIED: 0}
        for lab, px in table.items():
            assert (img[m.labels == lab] == px).all()
        # grayscale inversion restores the labels
        assert np.array_equal(labels_from_grayscale(img), m.labels)

    def test_probabilistic_map_render_requires_labeling(self):
        pm = ProbabilisticMap(G)
        with pytest.raises(ValueError):
            render(pm)
        assert (render(pm, LP) == 127).all()
