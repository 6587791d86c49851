"""Trial measurement machinery: report matching, visited regions, and metrics.

Reported mitosis points are cross-referenced against ground truth by greedy
nearest-first matching within a radius. The visited region is the set of HPF
grid cells touched by any viewport state at examination magnification, from
which navigation efficiency and the visited-area mitotic rate derive.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .navigate import Trace
from .scoring import DEFAULT_HPF_PX, Detection
from .slide import HPF_AREA_MM2, GroundTruth, Rect, SlideMeta

# 30 px at 0.25 mpp is 7.5 um, the customary centroid-matching radius for
# mitosis detection benchmarks.
DEFAULT_MATCH_RADIUS_PX = 30.0

# A viewport counts as examining at HPF detail when its scale (level-0 px per
# screen px) is at or below this; selecting an HPF on a ~1000 px screen gives
# scale ~1.87, while a Local overview sits at ~11.
DEFAULT_EXAM_MAX_SCALE = 2.0


@dataclass
class Report:
    """Reported mitosis points for one trial."""

    points: list[tuple[float, float, int]] = field(default_factory=list)  # (x, y, t_ms)

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "points": [{"x": x, "y": y, "t": t} for x, y, t in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(points=[(float(p["x"]), float(p["y"]), int(p.get("t", 0))) for p in d["points"]])

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Report":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: list[tuple[int, int]]  # (report index, ground-truth index)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp > 0 else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn > 0 else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


def match_reports(
    report_points: list[tuple[float, float]],
    gt_points: list[tuple[float, float]],
    eps: float = DEFAULT_MATCH_RADIUS_PX,
) -> MatchResult:
    """Greedy one-to-one matching on ascending pairwise distance.

    Only pairs within ``eps`` are eligible; each report and each ground-truth
    point matches at most once. Near-optimal at realistic densities and fully
    deterministic (distance ties break by report then ground-truth index).
    """
    if eps <= 0:
        raise ValidationError("match radius must be positive")
    eps2 = eps * eps
    pairs = []
    for i, (rx, ry) in enumerate(report_points):
        for j, (gx, gy) in enumerate(gt_points):
            d2 = (rx - gx) ** 2 + (ry - gy) ** 2
            if d2 <= eps2:
                pairs.append((d2, i, j))
    pairs.sort()
    used_r: set[int] = set()
    used_g: set[int] = set()
    matched = []
    for _, i, j in pairs:
        if i in used_r or j in used_g:
            continue
        used_r.add(i)
        used_g.add(j)
        matched.append((i, j))
    tp = len(matched)
    return MatchResult(tp=tp, fp=len(report_points) - tp, fn=len(gt_points) - tp, pairs=matched)


def visited_region(
    trace: Trace,
    meta: SlideMeta,
    *,
    hpf_px: int = DEFAULT_HPF_PX,
    max_scale: float = DEFAULT_EXAM_MAX_SCALE,
) -> set[Rect]:
    """HPF grid cells overlapped by any examination-magnification viewport.

    Any positive overlap counts the cell; overview states above ``max_scale``
    contribute nothing. Returned rects are clamped at the slide edge.
    """
    cols = -(-meta.width0 // hpf_px)
    rows = -(-meta.height0 // hpf_px)
    seen: set[tuple[int, int]] = set()
    for ev in trace.events:
        vp = ev.viewport_after
        if vp.scale > max_scale:
            continue
        x0, y0, x1, y1 = vp.visible_rect()
        x0, y0 = max(x0, 0.0), max(y0, 0.0)
        x1, y1 = min(x1, float(meta.width0)), min(y1, float(meta.height0))
        if x1 <= x0 or y1 <= y0:
            continue
        c0, c1 = int(x0 // hpf_px), min(int(math.ceil(x1 / hpf_px)), cols)
        r0, r1 = int(y0 // hpf_px), min(int(math.ceil(y1 / hpf_px)), rows)
        for row in range(r0, r1):
            for col in range(c0, c1):
                seen.add((col, row))
    out = set()
    for col, row in seen:
        out.add(
            Rect(col * hpf_px, row * hpf_px, hpf_px, hpf_px).clamped(meta.width0, meta.height0)
        )
    return out


def _points_in_region(points, region: set[Rect]) -> int:
    return sum(1 for x, y in points if any(r.contains_point(x, y) for r in region))


@dataclass
class TrialMetrics:
    """All measurements for one trial, serialized with a stable key order."""

    precision: float
    recall: float
    f1: float
    duration_s: float
    efficiency: float  # ground-truth mitoses inside the visited area per second
    visited_mr_hpf: float  # mitoses per HPF-equivalent area within the visited region
    visited_mr_mm2: float
    visited_area_mm2: float
    gt_visited: int
    interaction_counts: dict[str, int]
    final_viewport: dict

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "duration_s": self.duration_s,
            "efficiency": self.efficiency,
            "visited_mr_hpf": self.visited_mr_hpf,
            "visited_mr_mm2": self.visited_mr_mm2,
            "visited_area_mm2": self.visited_area_mm2,
            "gt_visited": self.gt_visited,
            "interaction_counts": dict(sorted(self.interaction_counts.items())),
            "final_viewport": self.final_viewport,
        }

    def to_json_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), separators=(",", ":")).encode()


def trial_metrics(
    trace: Trace,
    report: Report,
    gt: GroundTruth,
    meta: SlideMeta,
    *,
    eps: float = DEFAULT_MATCH_RADIUS_PX,
    hpf_px: int = DEFAULT_HPF_PX,
    hpf_area_mm2: float = HPF_AREA_MM2,
    max_scale: float = DEFAULT_EXAM_MAX_SCALE,
) -> TrialMetrics:
    """Compute every per-trial measurement from one trace, report, and truth."""
    if not trace.events:
        raise ValidationError("trace has no events")
    if trace.slide_id and trace.slide_id != meta.id:
        raise ValidationError(
            f"trace belongs to slide {trace.slide_id!r}, metrics requested for {meta.id!r}"
        )
    duration_s = (trace.events[-1].t - trace.events[0].t) / 1000.0
    if duration_s < 1.0:
        raise ValidationError(f"trial duration {duration_s:.3f}s is below the 1 s floor")

    match = match_reports([(x, y) for x, y, _ in report.points], gt.mitoses, eps)
    region = visited_region(trace, meta, hpf_px=hpf_px, max_scale=max_scale)
    gt_visited = _points_in_region(gt.mitoses, region)
    area_mm2 = sum(r.area_px for r in region) * meta.mpp * meta.mpp / 1e6
    mr_mm2 = gt_visited / area_mm2 if area_mm2 > 0 else 0.0
    mr_hpf = gt_visited / (area_mm2 / hpf_area_mm2) if area_mm2 > 0 else 0.0
    return TrialMetrics(
        precision=match.precision,
        recall=match.recall,
        f1=match.f1,
        duration_s=duration_s,
        efficiency=gt_visited / duration_s,
        visited_mr_hpf=mr_hpf,
        visited_mr_mm2=mr_mm2,
        visited_area_mm2=area_mm2,
        gt_visited=gt_visited,
        interaction_counts=dict(Counter(ev.kind for ev in trace.events)),
        final_viewport=trace.final_viewport().to_dict(),
    )


def ai_only_metrics(
    detections: list[Detection],
    tau: float,
    gt: GroundTruth,
    region: set[Rect],
    eps: float = DEFAULT_MATCH_RADIUS_PX,
) -> MatchResult:
    """Precision/recall of thresholded detections within a visited region.

    Both the detections and the ground truth are restricted to the region, so
    the AI is judged only where the trial actually looked.
    """
    if not region:
        raise ValidationError("region must be non-empty")
    dets = [
        (float(d.x), float(d.y))
        for d in detections
        if d.prob >= tau and any(r.contains_point(d.x, d.y) for r in region)
    ]
    gt_pts = [
        (float(x), float(y))
        for x, y in gt.mitoses
        if any(r.contains_point(x, y) for r in region)
    ]
    return match_reports(dets, gt_pts, eps)
