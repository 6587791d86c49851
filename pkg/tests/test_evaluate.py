import itertools
import math

import numpy as np
import pytest

from navipath.agents import Agent, run_agent
from navipath.errors import ValidationError
from navipath.evaluate import (
    Report,
    ai_only_metrics,
    match_reports,
    trial_metrics,
    visited_region,
)
from navipath.navigate import (
    EV_PAN,
    EV_SELECT_REC,
    EV_ZOOM,
    NavEvent,
    Trace,
    Viewport,
    append_event,
    hpf_center_viewport,
    select_recommendation,
)
from navipath.recommend import Weights, generate_recommendations
from navipath.scoring import Detection
from navipath.slide import GroundTruth, Rect, SlideMeta, pyramid_levels


def optimal_match_count(reports, gts, eps):
    """Exhaustive maximum-cardinality matching for <=10-point fixtures."""
    edges = [
        [j for j, g in enumerate(gts) if math.dist(r, g) <= eps] for r in reports
    ]

    def best(i, used):
        if i == len(edges):
            return 0
        score = best(i + 1, used)
        for j in edges[i]:
            if not used & (1 << j):
                score = max(score, 1 + best(i + 1, used | (1 << j)))
        return score

    return best(0, 0)


class TestMatching:
    def test_exact_match_perfect_scores(self):
        pts = [(10.0, 10.0), (500.0, 40.0), (90.0, 900.0)]
        m = match_reports(pts, [(int(x), int(y)) for x, y in pts], 30)
        assert m.precision == 1.0 and m.recall == 1.0 and m.f1 == 1.0

    def test_hand_fixture_5_of_7_vs_10(self):
        gts = [(i * 200, 0) for i in range(10)]
        reports = [(i * 200 + 5, 4) for i in range(5)] + [(5000, 5000), (6000, 6000)]
        m = match_reports(reports, gts, 30)
        assert m.tp == 5 and m.fp == 2 and m.fn == 5
        assert m.precision == pytest.approx(5 / 7)
        assert m.recall == 0.5

    def test_two_reports_one_gt(self):
        m = match_reports([(0.0, 0.0), (3.0, 0.0)], [(1, 0)], 30)
        assert m.tp == 1 and m.fp == 1 and m.fn == 0

    def test_matches_exhaustive_on_separated_fixtures(self):
        """Greedy equals optimal when ground truth points sit > 2*eps apart."""
        rng = np.random.default_rng(8)
        eps = 30.0
        for _ in range(200):
            gts = []
            while len(gts) < rng.integers(1, 8):
                p = (float(rng.uniform(0, 2000)), float(rng.uniform(0, 2000)))
                if all(math.dist(p, q) > 2 * eps for q in gts):
                    gts.append(p)
            reports = [
                (float(rng.uniform(0, 2000)), float(rng.uniform(0, 2000)))
                for _ in range(rng.integers(0, 8))
            ]
            m = match_reports(reports, [(int(x), int(y)) for x, y in gts], eps)
            gt_int = [(int(x), int(y)) for x, y in gts]
            assert m.tp == optimal_match_count(reports, gt_int, eps)

    def test_symmetry_swaps_precision_recall(self):
        rng = np.random.default_rng(9)
        a = [(float(x), float(y)) for x, y in rng.integers(0, 1000, size=(12, 2))]
        b = [(float(x), float(y)) for x, y in rng.integers(0, 1000, size=(7, 2))]
        m1 = match_reports(a, [(int(x), int(y)) for x, y in b], 50)
        m2 = match_reports(b, [(int(x), int(y)) for x, y in a], 50)
        assert m1.precision == pytest.approx(m2.recall)
        assert m1.recall == pytest.approx(m2.precision)

    def test_eps_must_be_positive(self):
        with pytest.raises(ValidationError):
            match_reports([], [], 0)


def _meta(px=20160, slide_id="ev"):
    return SlideMeta(id=slide_id, width0=px, height0=px, levels=pyramid_levels(px, px, 256))


def _trace_visiting(meta, cells, *, scale_override=None, slide_id=None, t_step=1500):
    trace = Trace(session_id="t", slide_id=slide_id or meta.id)
    base = Viewport(0.0, 0.0, 1.0, 1000, 1000)
    for i, (col, row) in enumerate(cells):
        vp = hpf_center_viewport(col, row, 1680, base)
        if scale_override is not None:
            vp = Viewport(vp.cx, vp.cy, scale_override, vp.screen_w, vp.screen_h)
        append_event(trace, NavEvent(t=i * t_step, kind=EV_PAN if i else EV_ZOOM, viewport_after=vp))
    return trace


class TestVisitedRegion:
    def test_select_one_hpf_covers_overlapped_cells(self, hotspot):
        recs = generate_recommendations(hotspot["grid"], hotspot["meta"])
        hpf = recs.hpf_recs()[0]
        vp = select_recommendation(Viewport(0, 0, 1.0, 1000, 1000), hpf)
        trace = Trace(session_id="t", slide_id=hotspot["meta"].id)
        append_event(trace, NavEvent(t=0, kind=EV_SELECT_REC, viewport_after=vp))
        region = visited_region(trace, hotspot["meta"])
        # The selected cell plus the slivers of its ring neighbors.
        assert any(r.x == hpf.bounds.x and r.y == hpf.bounds.y for r in region)
        for r in region:
            assert abs(r.x - hpf.bounds.x) <= 1680 and abs(r.y - hpf.bounds.y) <= 1680

    def test_lawnmower_covers_block(self):
        meta = _meta()
        cells = [(c, r) for r in range(6) for c in (range(6) if r % 2 == 0 else range(5, -1, -1))]
        # Exactly one cell visible per step keeps the stamp inside the block.
        trace = _trace_visiting(meta, cells, scale_override=1.679)
        region = visited_region(trace, meta)
        assert len(region) == 36

    def test_overview_only_trace_is_empty(self):
        meta = _meta()
        trace = Trace(session_id="t", slide_id=meta.id)
        append_event(
            trace,
            NavEvent(t=0, kind=EV_ZOOM, viewport_after=Viewport(5000, 5000, 11.2, 1000, 1000)),
        )
        assert visited_region(trace, meta) == set()

    def test_region_monotone_under_extension(self, hotspot):
        meta = hotspot["meta"]
        cells = [(0, 0), (5, 5), (9, 2)]
        t1 = _trace_visiting(meta, cells[:2])
        t2 = _trace_visiting(meta, cells)
        assert visited_region(t1, meta) <= visited_region(t2, meta)


class TestTrialMetrics:
    def test_arithmetic_fixture_mr(self):
        """20 HPF-areas of visited cells holding 24 mitoses give 1.2 per HPF."""
        px = 16000
        meta = SlideMeta(id="mr", width0=px, height0=px, levels=pyramid_levels(px, px, 256))
        cells = [(c, r) for r in range(4) for c in range(5)]
        trace = Trace(session_id="t", slide_id="mr")
        base = Viewport(0.0, 0.0, 1.0, 1000, 1000)
        for i, (col, row) in enumerate(cells):
            vp = Viewport((col + 0.5) * 1600, (row + 0.5) * 1600, 1.599, 1000, 1000)
            append_event(trace, NavEvent(t=i * 1500, kind=EV_PAN if i else EV_ZOOM, viewport_after=vp))
        rng = np.random.default_rng(1)
        gt_pts = []
        while len(gt_pts) < 24:
            p = (int(rng.integers(40, 5 * 1600 - 40)), int(rng.integers(40, 4 * 1600 - 40)))
            if all((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 > 4 for q in gt_pts):
                gt_pts.append(p)
        gt = GroundTruth(slide_id="mr", mitoses=gt_pts)
        m = trial_metrics(trace, Report(), gt, meta, hpf_px=1600)
        assert m.gt_visited == 24
        assert m.visited_area_mm2 == pytest.approx(20 * 0.16, rel=1e-12)
        assert m.visited_mr_hpf == pytest.approx(1.2, rel=1e-12)

    def test_unit_consistency_hpf_vs_mm2(self, separation):
        recs = generate_recommendations(
            separation["grid"], separation["meta"], Weights(w_cell=0, w_prolif=0, w_mitosis=1)
        )
        run = run_agent(Agent(kind="diving", budget=260, seed=1), separation["meta"],
                        separation["gt"], separation["grid"], recs)
        m = trial_metrics(run.trace, run.report, separation["gt"], separation["meta"])
        assert m.visited_mr_hpf == pytest.approx(m.visited_mr_mm2 * 0.16, abs=1e-9)

    def test_interaction_counts_tally(self):
        meta = _meta()
        trace = Trace(session_id="t", slide_id=meta.id)
        vp = Viewport(100, 100, 2.0, 1000, 1000)
        t = 0
        for _ in range(37):
            append_event(trace, NavEvent(t=t, kind=EV_ZOOM, viewport_after=vp))
            t += 500
        for _ in range(5):
            append_event(trace, NavEvent(t=t, kind=EV_PAN, viewport_after=vp))
            t += 500
        m = trial_metrics(trace, Report(), GroundTruth(slide_id=meta.id), meta)
        assert m.interaction_counts["zoom"] == 37
        assert m.interaction_counts["pan"] == 5

    def test_empty_trace_rejected(self):
        meta = _meta()
        with pytest.raises(ValidationError):
            trial_metrics(Trace(session_id="t", slide_id=meta.id), Report(),
                          GroundTruth(slide_id=meta.id), meta)

    def test_subsecond_duration_rejected(self):
        meta = _meta()
        trace = _trace_visiting(meta, [(0, 0), (1, 0)], t_step=100)
        with pytest.raises(ValidationError):
            trial_metrics(trace, Report(), GroundTruth(slide_id=meta.id), meta)

    def test_slide_mismatch_rejected(self):
        meta = _meta()
        trace = _trace_visiting(meta, [(0, 0), (1, 0)], slide_id="other")
        with pytest.raises(ValidationError):
            trial_metrics(trace, Report(), GroundTruth(slide_id=meta.id), meta)


class TestAiOnly:
    def test_perfect_detections_in_region(self, hotspot):
        meta, gt = hotspot["meta"], hotspot["gt"]
        region = {Rect(0, 0, meta.width0, meta.height0)}
        dets = [Detection(x=x, y=y, prob=0.97) for x, y in gt.mitoses]
        m = ai_only_metrics(dets, 0.85, gt, region)
        assert m.precision == 1.0 and m.recall == 1.0

    def test_region_restricts_both_sides(self, hotspot):
        meta, gt = hotspot["meta"], hotspot["gt"]
        region = {Rect(0, 0, 6 * 1680, 6 * 1680)}
        dets = [Detection(x=x, y=y, prob=0.97) for x, y in gt.mitoses]
        m = ai_only_metrics(dets, 0.85, gt, region)
        inside = sum(1 for x, y in gt.mitoses if x < 6 * 1680 and y < 6 * 1680)
        assert m.tp == inside

    def test_recall_monotone_in_tau(self, rendered):
        grid, gt, meta = rendered["grid"], rendered["gt"], rendered["meta"]
        region = {Rect(0, 0, meta.width0, meta.height0)}
        dets = [d for cs in grid for d in cs.detections]
        r99 = ai_only_metrics(dets, 0.99, gt, region).recall
        r85 = ai_only_metrics(dets, 0.85, gt, region).recall
        assert r99 <= r85

    def test_empty_region_rejected(self, hotspot):
        with pytest.raises(ValidationError):
            ai_only_metrics([], 0.85, hotspot["gt"], set())


@pytest.fixture(scope="module")
def runs(separation):
    recs = generate_recommendations(
        separation["grid"], separation["meta"],
        Weights(w_cell=0, w_prolif=0, w_mitosis=1),
    )
    out = {}
    for kind in ("systematic", "diving", "adjacent_panning", "cue_hopping"):
        out[kind] = run_agent(
            Agent(kind=kind, budget=260, seed=11),
            separation["meta"], separation["gt"], separation["grid"], recs,
        )
    return {"recs": recs, "runs": out}


class TestAgents:
    def test_systematic_visits_every_tissue_cell_once(self, separation, runs):
        run = runs["runs"]["systematic"]
        visits = [
            (int(ev.viewport_after.cx // 1680), int(ev.viewport_after.cy // 1680))
            for ev in run.trace.events
            if ev.kind in ("zoom", "pan")
        ]
        tissue = {cs.idx.as_tuple() for cs in separation["grid"] if cs.cell_count > 0}
        assert len(visits) == len(set(visits)) == len(tissue)
        assert set(visits) == tissue
        assert run.trace.condition == "manual"

    def test_diving_spoke_pattern(self, runs):
        """Every HPF selection is immediately preceded by a Local-scale viewport."""
        run = runs["runs"]["diving"]
        events = run.trace.events
        for i, ev in enumerate(events):
            if ev.kind == "select_rec" and ev.payload["rec_id"].startswith("hpf-"):
                prev = events[i - 1]
                assert prev.payload["rec_id"].startswith("local-")
                assert prev.viewport_after.scale > 4 * ev.viewport_after.scale

    def test_cue_hopping_ascending_order(self, runs):
        run = runs["runs"]["cue_hopping"]
        recs = runs["recs"]
        order = {h.id: i for i, h in enumerate(recs.hpf_recs())}
        seen = [
            order[ev.payload["rec_id"]]
            for ev in run.trace.events
            if ev.kind in ("cue_hop", "select_rec") and ev.payload["rec_id"] in order
        ]
        assert seen == sorted(seen)

    def test_adjacent_panning_uses_edge_pans(self, runs):
        run = runs["runs"]["adjacent_panning"]
        kinds = {ev.kind for ev in run.trace.events}
        assert "edge_pan" in kinds
        assert run.trace.condition == "navipath"

    def test_determinism(self, separation, runs):
        recs = runs["recs"]
        again = run_agent(
            Agent(kind="cue_hopping", budget=260, seed=11),
            separation["meta"], separation["gt"], separation["grid"], recs,
        )
        assert again.trace.to_jsonl() == runs["runs"]["cue_hopping"].trace.to_jsonl()
        assert again.report.to_dict() == runs["runs"]["cue_hopping"].report.to_dict()

    def test_budget_truncates_and_flags(self, separation, runs):
        recs = runs["recs"]
        run = run_agent(
            Agent(kind="diving", budget=10, seed=11),
            separation["meta"], separation["gt"], separation["grid"], recs,
        )
        assert run.truncated
        assert len(run.trace.events) == 10

    def test_efficiency_and_mr_separation(self, separation, runs):
        gt, meta = separation["gt"], separation["meta"]
        base = trial_metrics(runs["runs"]["systematic"].trace, runs["runs"]["systematic"].report, gt, meta)
        for kind in ("diving", "adjacent_panning", "cue_hopping"):
            m = trial_metrics(runs["runs"][kind].trace, runs["runs"][kind].report, gt, meta)
            assert m.efficiency >= 2 * base.efficiency, kind
            assert m.visited_mr_hpf >= 3 * base.visited_mr_hpf, kind

    def test_reports_land_near_ground_truth(self, separation, runs):
        gt = separation["gt"]
        for kind in ("systematic", "diving"):
            run = runs["runs"][kind]
            m = match_reports([(x, y) for x, y, _ in run.report.points], gt.mitoses, 30)
            assert m.precision == 1.0
            assert m.recall >= 0.5

    def test_requires_recs_for_following_agents(self, separation):
        with pytest.raises(ValidationError):
            run_agent(Agent(kind="diving"), separation["meta"], separation["gt"],
                      separation["grid"], None)
