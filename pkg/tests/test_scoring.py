import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navipath.errors import NotFoundError, StorageError, ValidationError
from navipath.scoring import (
    CriteriaScores,
    Detection,
    GridIndex,
    ScoreGrid,
    cell_of_point,
    export_detections,
    grid_from_detections,
    grid_shape,
    heuristic_cell_count,
    heuristic_mitosis_detect,
    import_detections,
    proliferation_score,
    score_slide,
)
from navipath.slide import SlideMeta, pyramid_levels
from navipath.synth import (
    DISTRACTOR_COLOR,
    MITOSIS_COLOR,
    NUCLEUS_COLOR,
    TISSUE_COLOR,
    _paint_ellipse,
)


def blank_tile(px=1680):
    return np.full((px, px, 3), 255, dtype=np.uint8)


def tissue_tile(px=1680):
    tile = blank_tile(px)
    tile[:] = TISSUE_COLOR
    return tile


def plant(tile, points, color, rx=7.0, ry=6.0):
    for x, y in points:
        _paint_ellipse(tile, x, y, rx, ry, 0.3, color)
    return tile


def spread_points(n, px=1680, margin=30, sep=26, seed=0):
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < n:
        x = rng.uniform(margin, px - margin)
        y = rng.uniform(margin, px - margin)
        if all((x - a) ** 2 + (y - b) ** 2 >= sep * sep for a, b in pts):
            pts.append((x, y))
    return pts


class TestCellCount:
    def test_blank_tile_is_zero(self):
        assert heuristic_cell_count(blank_tile()) == 0

    def test_counts_120_planted_nuclei_within_15pct(self):
        tile = plant(tissue_tile(), spread_points(120, seed=1), NUCLEUS_COLOR)
        n = heuristic_cell_count(tile)
        assert abs(n - 120) <= 0.15 * 120

    def test_giant_blob_filtered(self):
        tile = plant(tissue_tile(), [(800, 800)], NUCLEUS_COLOR, rx=40.0, ry=40.0)
        assert heuristic_cell_count(tile) == 0

    def test_mitoses_and_distractors_count_as_cells(self):
        tile = plant(tissue_tile(), [(200, 200)], MITOSIS_COLOR)
        plant(tile, [(600, 600)], DISTRACTOR_COLOR)
        assert heuristic_cell_count(tile) == 2


class TestMitosisDetect:
    def test_blank_tile_empty(self):
        assert heuristic_mitosis_detect(blank_tile()) == []

    def test_two_planted_mitoses_detected_high(self):
        tile = plant(tissue_tile(), [(300, 400), (1200, 900)], MITOSIS_COLOR)
        dets = heuristic_mitosis_detect(tile)
        assert len(dets) == 2
        assert all(d.prob >= 0.85 for d in dets)
        # Centroids land on the planted centers.
        got = sorted((d.x, d.y) for d in dets)
        for (gx, gy), (px, py) in zip(got, [(300, 400), (1200, 900)]):
            assert math.hypot(gx - px, gy - py) <= 2.0

    def test_distractor_detected_below_threshold(self):
        tile = plant(tissue_tile(), [(500, 500)], DISTRACTOR_COLOR)
        dets = heuristic_mitosis_detect(tile)
        assert len(dets) == 1
        assert 0.5 <= dets[0].prob < 0.85

    def test_nuclei_ignored(self):
        tile = plant(tissue_tile(), spread_points(40, seed=2), NUCLEUS_COLOR)
        assert heuristic_mitosis_detect(tile) == []


class TestProliferation:
    def _grid_with_center_evidence(self, prob_sum):
        meta = SlideMeta(id="g", width0=5040, height0=5040, levels=pyramid_levels(5040, 5040, 256))
        dets = []
        x = 1680 + 100
        for i, p in enumerate(prob_sum):
            dets.append(Detection(x=x + 70 * i, y=1680 + 100, prob=p))
        return grid_from_detections(meta, dets)

    def test_zero_everywhere(self):
        grid = self._grid_with_center_evidence([])
        assert all(c.prolif_prob == 0.0 for c in grid)

    def test_closed_form_single_unit_evidence(self):
        grid = self._grid_with_center_evidence([1.0])
        p = proliferation_score(grid, GridIndex(1, 1))
        assert p == pytest.approx(1 - math.exp(-0.7), abs=1e-12)
        assert round(p, 4) == 0.5034

    def test_monotone_in_evidence(self):
        g1 = self._grid_with_center_evidence([0.5])
        g2 = self._grid_with_center_evidence([0.5, 0.5])
        assert proliferation_score(g2, GridIndex(1, 1)) > proliferation_score(g1, GridIndex(1, 1))

    def test_neighborhood_reach_is_3x3(self):
        grid = self._grid_with_center_evidence([1.0])
        assert proliferation_score(grid, GridIndex(0, 0)) > 0  # adjacent cell
        # A cell two steps away sees nothing.
        assert proliferation_score(grid, GridIndex(2, 2)) > 0
        meta_far = GridIndex(0, 2)
        assert grid.cell(meta_far).prolif_prob > 0  # still within 3x3 of (1,1)


class TestImportExport:
    def _meta(self):
        return SlideMeta(id="i", width0=4000, height0=4000, levels=pyramid_levels(4000, 4000, 256))

    def test_empty_list(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(json.dumps({"detections": []}))
        assert import_detections(path, self._meta()) == []

    def test_prob_out_of_range_names_record(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(json.dumps({"detections": [{"x": 1, "y": 1, "prob": 0.5}, {"x": 2, "y": 2, "prob": 1.2}]}))
        with pytest.raises(ValidationError, match="record 1"):
            import_detections(path, self._meta())

    def test_out_of_bounds_names_record(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(json.dumps({"detections": [{"x": 9999, "y": 1, "prob": 0.5}]}))
        with pytest.raises(ValidationError, match="record 0"):
            import_detections(path, self._meta())

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text("{nope")
        with pytest.raises(ValidationError):
            import_detections(path, self._meta())

    def test_ground_truth_roundtrip(self, tmp_path, rendered):
        gt = rendered["gt"]
        dets = [Detection(x=x, y=y, prob=0.97) for x, y in gt.mitoses]
        path = export_detections(tmp_path / "gt.json", dets)
        back = import_detections(path, rendered["meta"])
        assert len(back) == len(gt.mitoses)
        assert all(d.prob == 0.97 for d in back)


class TestScoreSlide:
    def test_grid_shape_16800(self):
        assert grid_shape(16800, 16800) == (10, 10)

    def test_full_grid_scored(self, rendered):
        grid = rendered["grid"]
        cols, rows = grid_shape(rendered["meta"].width0, rendered["meta"].height0)
        assert (grid.cols, grid.rows) == (cols, rows)
        assert sum(1 for _ in grid) == cols * rows

    def test_detection_total_tracks_ground_truth(self, rendered):
        grid, gt = rendered["grid"], rendered["gt"]
        n = sum(c.mitosis_count(0.85) for c in grid)
        assert abs(n - len(gt.mitoses)) <= max(1, 0.10 * len(gt.mitoses))

    def test_rescore_is_identical(self, rendered):
        again = score_slide(rendered["store"], rendered["meta"])
        assert json.dumps(again.to_dict()) == json.dumps(rendered["grid"].to_dict())

    def test_save_load_roundtrip(self, rendered, tmp_path):
        from navipath.slide import SlideStore

        store = SlideStore(tmp_path)
        (tmp_path / rendered["meta"].id).mkdir()
        rendered["grid"].save(store)
        back = ScoreGrid.load(store, rendered["meta"].id)
        assert json.dumps(back.to_dict()) == json.dumps(rendered["grid"].to_dict())

    def test_missing_tile_is_named(self, rendered, tmp_path):
        import shutil

        from navipath.slide import SlideStore

        src = rendered["store"].slide_dir(rendered["meta"].id)
        dst = tmp_path / rendered["meta"].id
        shutil.copytree(src, dst)
        victim = dst / "level_0" / "3_2.png"
        victim.unlink()
        with pytest.raises(StorageError, match="3_2.png"):
            score_slide(SlideStore(tmp_path), rendered["meta"])

    def test_jobs_match_serial(self, rendered):
        parallel = score_slide(rendered["store"], rendered["meta"], jobs=4)
        assert json.dumps(parallel.to_dict()) == json.dumps(rendered["grid"].to_dict())

    def test_tissue_free_cells_have_zero_count(self, rendered):
        from navipath.synth import load_synthetic_truth

        truth = load_synthetic_truth(rendered["store"], rendered["meta"].id)
        tissue = set(truth.tissue_cells)
        for cs in rendered["grid"]:
            if cs.idx.as_tuple() not in tissue and truth.dark_blobs_per_cell[cs.idx.row][cs.idx.col] == 0:
                assert cs.cell_count == 0


class TestInvariants:
    @given(
        probs=st.lists(st.floats(min_value=0, max_value=1), max_size=30),
        t1=st.floats(min_value=0, max_value=1),
        t2=st.floats(min_value=0, max_value=1),
    )
    @settings(max_examples=100, deadline=None)
    def test_threshold_monotonicity(self, probs, t1, t2):
        cs = CriteriaScores(
            idx=GridIndex(0, 0),
            detections=[Detection(x=i, y=0, prob=round(p, 6)) for i, p in enumerate(probs)],
        )
        lo, hi = min(t1, t2), max(t1, t2)
        assert cs.mitosis_count(lo) >= cs.mitosis_count(hi)

    @given(
        pts=st.lists(
            st.tuples(st.integers(0, 9999), st.integers(0, 9999)), min_size=1, max_size=60
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_partition_exactly_one_cell(self, pts):
        for x, y in pts:
            owners = [
                (c, r)
                for c in range(6)
                for r in range(6)
                if c * 1680 <= x < (c + 1) * 1680 and r * 1680 <= y < (r + 1) * 1680
            ]
            assert owners == [cell_of_point(x, y).as_tuple()]

    def test_shifted_origin_permutes_cells(self):
        rng = np.random.default_rng(4)
        pts = [(int(x), int(y)) for x, y in rng.integers(1680, 8000, size=(200, 2))]
        base = {}
        shifted = {}
        for x, y in pts:
            base.setdefault(cell_of_point(x, y).as_tuple(), []).append((x, y))
            shifted.setdefault(cell_of_point(x - 1680, y).as_tuple(), []).append((x, y))
        # Same multiset of per-cell point groups, just re-keyed one cell over.
        assert sorted(map(sorted, base.values())) == sorted(map(sorted, shifted.values()))
        for (c, r), group in base.items():
            assert shifted[(c - 1, r)] == group

    def test_grid_cell_out_of_range(self, rendered):
        with pytest.raises(NotFoundError):
            rendered["grid"].cell(GridIndex(99, 0))
