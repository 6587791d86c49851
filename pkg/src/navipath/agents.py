"""Simulated navigation agents replaying the observed movement patterns.

Four strategies produce traces and reports against one slide:

* ``systematic``   - manual baseline: a serpentine sweep over every tissue
  HPF cell at examination magnification, ignoring recommendations, reporting
  each ground-truth mitosis it passes with a fixed detection probability.
* ``diving``       - returns to the Local recommendation between HPF visits,
  selecting HPFs by ascending index (the spoke-like pattern).
* ``adjacent_panning`` - walks the recommended HPF cells of each Local with
  discrete edge pans, stepping cell by cell between consecutive targets.
* ``cue_hopping``  - repeatedly jumps to the lowest-index remaining HPF
  recommendation, via its edge cue when off screen.

Timing uses a declared cost model (a fixed cost per event), so efficiency
ratios between strategies are meaningful and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .evaluate import Report
from .navigate import (
    CONDITION_MANUAL,
    CONDITION_NAVIPATH,
    EV_CUE_HOP,
    EV_EDGE_PAN,
    EV_PAN,
    EV_REPORT,
    EV_SELECT_REC,
    EV_ZOOM,
    NavEvent,
    Trace,
    Viewport,
    adjacent_pan,
    append_event,
    compute_cues,
    cue_hop,
    hpf_center_viewport,
    select_recommendation,
)
from .recommend import Recommendation, RecommendationSet, sensitivity_to_threshold
from .scoring import GridIndex, ScoreGrid
from .slide import GroundTruth, SlideMeta

AGENT_KINDS = ("systematic", "diving", "adjacent_panning", "cue_hopping")

DEFAULT_EVENT_COST_MS = 1500
DEFAULT_DETECT_PROB = 0.8
DEFAULT_SCREEN = (1000, 1000)
REPORT_JITTER_PX = 3.0


@dataclass(frozen=True)
class Agent:
    kind: str
    budget: int = 400
    seed: int = 0

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValidationError(f"agent kind must be one of {AGENT_KINDS}, got {self.kind!r}")
        if self.budget < 1:
            raise ValidationError("budget must be >= 1")


@dataclass
class AgentRun:
    trace: Trace
    report: Report
    truncated: bool


class _Session:
    """Shared bookkeeping: event budget, cost-model clock, report jitter."""

    def __init__(self, agent: Agent, trace: Trace, per_event_ms: int, detect_prob: float):
        self.agent = agent
        self.trace = trace
        self.per_event_ms = per_event_ms
        self.detect_prob = detect_prob
        self.rng = np.random.default_rng(agent.seed)
        self.report = Report()
        self.truncated = False

    @property
    def exhausted(self) -> bool:
        return len(self.trace.events) >= self.agent.budget

    def emit(self, kind: str, vp: Viewport, payload: dict | None = None) -> bool:
        if self.exhausted:
            self.truncated = True
            return False
        t = len(self.trace.events) * self.per_event_ms
        append_event(self.trace, NavEvent(t=t, kind=kind, viewport_after=vp, payload=payload or {}))
        return True

    def try_report(self, vp: Viewport, x: float, y: float) -> bool:
        """Report a point with the configured per-mitosis detection probability."""
        if self.rng.random() >= self.detect_prob:
            return True  # looked, did not call it
        jx = x + float(self.rng.uniform(-REPORT_JITTER_PX, REPORT_JITTER_PX))
        jy = y + float(self.rng.uniform(-REPORT_JITTER_PX, REPORT_JITTER_PX))
        if not self.emit(EV_REPORT, vp, {"x": jx, "y": jy}):
            return False
        self.report.points.append((jx, jy, self.trace.events[-1].t))
        return True


def _serpentine(cells: list[GridIndex]) -> list[GridIndex]:
    """Row-major lawnmower order: even rows left-to-right, odd rows reversed."""
    by_row: dict[int, list[GridIndex]] = {}
    for c in cells:
        by_row.setdefault(c.row, []).append(c)
    out = []
    for i, row in enumerate(sorted(by_row)):
        line = sorted(by_row[row], key=lambda c: c.col)
        out.extend(line if i % 2 == 0 else line[::-1])
    return out


def _cell_detections(grid: ScoreGrid, rec: Recommendation, tau: float):
    idx = GridIndex(rec.bounds.x // grid.hpf_px, rec.bounds.y // grid.hpf_px)
    return [d for d in grid.cell(idx).detections if d.prob >= tau]


def _report_detections(sess: _Session, vp: Viewport, grid: ScoreGrid, rec: Recommendation, tau: float) -> bool:
    for det in _cell_detections(grid, rec, tau):
        if not sess.try_report(vp, det.x, det.y):
            return False
    return True


def _run_systematic(sess: _Session, meta: SlideMeta, gt: GroundTruth, grid: ScoreGrid) -> None:
    tissue = [cs.idx for cs in grid if cs.cell_count > 0]
    order = _serpentine(tissue)
    if not order:
        return
    vp0 = Viewport(0.0, 0.0, 1.0, *DEFAULT_SCREEN)
    first = True
    for idx in order:
        vp = hpf_center_viewport(idx.col, idx.row, grid.hpf_px, vp0)
        kind = EV_ZOOM if first else EV_PAN
        first = False
        if not sess.emit(kind, vp, {"col": idx.col, "row": idx.row}):
            return
        x0, y0 = idx.col * grid.hpf_px, idx.row * grid.hpf_px
        for gx, gy in gt.mitoses:
            if x0 <= gx < x0 + grid.hpf_px and y0 <= gy < y0 + grid.hpf_px:
                if not sess.try_report(vp, gx, gy):
                    return


def _run_diving(sess: _Session, grid: ScoreGrid, recs: RecommendationSet, tau: float) -> None:
    vp = Viewport(0.0, 0.0, 1.0, *DEFAULT_SCREEN)
    for loc in sorted(recs.locals_, key=lambda r: r.index):
        for hpf in sorted(loc.children, key=lambda r: r.index):
            vp = select_recommendation(vp, loc)
            if not sess.emit(EV_SELECT_REC, vp, {"rec_id": loc.id}):
                return
            vp = select_recommendation(vp, hpf)
            if not sess.emit(EV_SELECT_REC, vp, {"rec_id": hpf.id}):
                return
            if not _report_detections(sess, vp, grid, hpf, tau):
                return


def _run_adjacent_panning(
    sess: _Session, meta: SlideMeta, grid: ScoreGrid, recs: RecommendationSet, tau: float
) -> None:
    vp = Viewport(0.0, 0.0, 1.0, *DEFAULT_SCREEN)
    by_id = {}
    for loc in recs.locals_:
        for hpf in loc.children:
            idx = GridIndex(hpf.bounds.x // grid.hpf_px, hpf.bounds.y // grid.hpf_px)
            by_id[idx.as_tuple()] = hpf
    for loc in sorted(recs.locals_, key=lambda r: r.index):
        targets = _serpentine(
            [
                GridIndex(h.bounds.x // grid.hpf_px, h.bounds.y // grid.hpf_px)
                for h in loc.children
            ]
        )
        if not targets:
            continue
        first = targets[0]
        vp = select_recommendation(vp, by_id[first.as_tuple()])
        if not sess.emit(EV_SELECT_REC, vp, {"rec_id": by_id[first.as_tuple()].id}):
            return
        if not _report_detections(sess, vp, grid, by_id[first.as_tuple()], tau):
            return
        cur = first
        for target in targets[1:]:
            # Manhattan walk: rows first, then columns, one edge pan per cell.
            while cur.row != target.row or cur.col != target.col:
                if cur.row != target.row:
                    direction = "S" if target.row > cur.row else "N"
                    cur = GridIndex(cur.col, cur.row + (1 if direction == "S" else -1))
                else:
                    direction = "E" if target.col > cur.col else "W"
                    cur = GridIndex(cur.col + (1 if direction == "E" else -1), cur.row)
                vp = adjacent_pan(vp, direction, grid.hpf_px, meta)
                if not sess.emit(EV_EDGE_PAN, vp, {"direction": direction}):
                    return
            rec = by_id.get(cur.as_tuple())
            if rec is not None and not _report_detections(sess, vp, grid, rec, tau):
                return


def _run_cue_hopping(sess: _Session, grid: ScoreGrid, recs: RecommendationSet, tau: float) -> None:
    ordered = recs.hpf_recs()
    if not ordered:
        return
    vp = Viewport(0.0, 0.0, 1.0, *DEFAULT_SCREEN)
    parents = {
        h.id: loc for loc in recs.locals_ for h in loc.children
    }
    first = ordered[0]
    vp = select_recommendation(vp, parents[first.id])
    if not sess.emit(EV_SELECT_REC, vp, {"rec_id": parents[first.id].id}):
        return
    vp = select_recommendation(vp, first)
    if not sess.emit(EV_SELECT_REC, vp, {"rec_id": first.id}):
        return
    if not _report_detections(sess, vp, grid, first, tau):
        return
    for target in ordered[1:]:
        cues = compute_cues(vp, [target])
        if cues:
            vp = cue_hop(vp, cues[0], recs)
            if not sess.emit(EV_CUE_HOP, vp, {"rec_id": target.id, "index": cues[0].index}):
                return
        else:
            # Already on screen; a hop is meaningless, select it directly.
            vp = select_recommendation(vp, target)
            if not sess.emit(EV_SELECT_REC, vp, {"rec_id": target.id}):
                return
        if not _report_detections(sess, vp, grid, target, tau):
            return


def run_agent(
    agent: Agent,
    meta: SlideMeta,
    gt: GroundTruth,
    grid: ScoreGrid,
    recs: RecommendationSet | None,
    *,
    per_event_ms: int = DEFAULT_EVENT_COST_MS,
    detect_prob: float = DEFAULT_DETECT_PROB,
    session_id: str | None = None,
) -> AgentRun:
    """Run one agent over a scored slide, producing (trace, report).

    Recommendation-following agents require ``recs``; the systematic baseline
    ignores them. A run whose budget is exhausted returns truncated=True.
    """
    if agent.kind != "systematic" and recs is None:
        raise ValidationError(f"agent {agent.kind!r} requires generated recommendations")
    condition = CONDITION_MANUAL if agent.kind == "systematic" else CONDITION_NAVIPATH
    sid = session_id or f"{meta.id}-{agent.kind}-{agent.seed}"
    trace = Trace(session_id=sid, slide_id=meta.id, condition=condition)
    sess = _Session(agent, trace, per_event_ms, detect_prob)
    if agent.kind == "systematic":
        _run_systematic(sess, meta, gt, grid)
    else:
        tau = sensitivity_to_threshold(recs.weights.sensitivity)
        if agent.kind == "diving":
            _run_diving(sess, grid, recs, tau)
        elif agent.kind == "adjacent_panning":
            _run_adjacent_panning(sess, meta, grid, recs, tau)
        else:
            _run_cue_hopping(sess, grid, recs, tau)
    return AgentRun(trace=trace, report=sess.report, truncated=sess.truncated)
