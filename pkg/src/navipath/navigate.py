"""Viewport state machine: selection zoom, discrete edge panning, off-screen
cue geometry, and append-only trace recording.

Viewport scale is level-0 pixels per screen pixel, so a smaller scale means
higher magnification. All transitions are pure functions; traces persist as
JSON lines, one event per line, and replay by folding the recorded
viewport-after states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import NotFoundError, TimeRegressionError, ValidationError
from .recommend import Recommendation, RecommendationSet
from .slide import Rect, SlideMeta

EV_PAN = "pan"
EV_ZOOM = "zoom"
EV_SELECT_REC = "select_rec"
EV_EDGE_PAN = "edge_pan"
EV_CUE_HOP = "cue_hop"
EV_REPORT = "report_mitosis"
EV_WEIGHTS = "weights_change"
EVENT_KINDS = (EV_PAN, EV_ZOOM, EV_SELECT_REC, EV_EDGE_PAN, EV_CUE_HOP, EV_REPORT, EV_WEIGHTS)

CONDITION_MANUAL = "manual"
CONDITION_NAVIPATH = "navipath"

SELECT_FILL_FRACTION = 0.9  # a selected rec fills 90% of the shorter screen edge
CUE_COLLISION_PX = 16.0


@dataclass(frozen=True)
class Viewport:
    """Level-0 center plus scale and the screen it is rendered on."""

    cx: float
    cy: float
    scale: float
    screen_w: int
    screen_h: int

    def __post_init__(self):
        if self.scale <= 0:
            raise ValidationError("viewport scale must be positive")
        if self.screen_w < 1 or self.screen_h < 1:
            raise ValidationError("screen dimensions must be >= 1")

    def visible_rect(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) of the visible region in level-0 coordinates."""
        hw = self.scale * self.screen_w / 2.0
        hh = self.scale * self.screen_h / 2.0
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    def sees(self, rect: Rect) -> bool:
        x0, y0, x1, y1 = self.visible_rect()
        return rect.x < x1 and x0 < rect.right and rect.y < y1 and y0 < rect.bottom

    def to_dict(self) -> dict:
        return {
            "cx": self.cx,
            "cy": self.cy,
            "scale": self.scale,
            "screen_w": self.screen_w,
            "screen_h": self.screen_h,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Viewport":
        return cls(
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            scale=float(d["scale"]),
            screen_w=int(d["screen_w"]),
            screen_h=int(d["screen_h"]),
        )


@dataclass(frozen=True)
class Cue:
    """Edge marker pointing at one off-screen HPF recommendation."""

    rec_id: str
    index: int
    edge_point: tuple[float, float]  # screen coordinates on the viewport boundary
    direction: tuple[float, float]  # unit vector toward the rec center


@dataclass
class NavEvent:
    t: int  # milliseconds since session start
    kind: str
    viewport_after: Viewport
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValidationError(f"unknown event kind {self.kind!r}")
        if self.t < 0:
            raise ValidationError("event time must be >= 0")

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "kind": self.kind,
            "viewport": self.viewport_after.to_dict(),
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NavEvent":
        return cls(
            t=int(d["t"]),
            kind=d["kind"],
            viewport_after=Viewport.from_dict(d["viewport"]),
            payload=d.get("payload", {}),
        )


@dataclass
class Trace:
    """Timestamped event log of one examination session."""

    session_id: str
    slide_id: str
    condition: str = CONDITION_NAVIPATH
    events: list[NavEvent] = field(default_factory=list)

    def final_viewport(self) -> Viewport:
        if not self.events:
            raise ValidationError("trace has no events")
        return self.events[-1].viewport_after

    def to_jsonl(self) -> str:
        return "".join(json.dumps(ev.to_dict(), separators=(",", ":")) + "\n" for ev in self.events)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl())
        return path

    @classmethod
    def load(
        cls,
        path: str | Path,
        *,
        session_id: str | None = None,
        slide_id: str = "",
        condition: str = CONDITION_NAVIPATH,
    ) -> "Trace":
        """Load a JSONL trace; session metadata comes from the sidecar if present."""
        path = Path(path)
        sid = session_id or path.stem
        sidecar = path.with_suffix(".json")
        if sidecar.is_file():
            meta = json.loads(sidecar.read_text())
            sid = meta.get("id", sid)
            slide_id = meta.get("slide_id", slide_id)
            condition = meta.get("condition", condition)
        events = [
            NavEvent.from_dict(json.loads(line))
            for line in path.read_text().splitlines()
            if line.strip()
        ]
        trace = cls(session_id=sid, slide_id=slide_id, condition=condition)
        for ev in events:
            append_event(trace, ev)
        return trace


def append_event(trace: Trace, ev: NavEvent) -> Trace:
    """Append one event, enforcing nondecreasing timestamps."""
    if trace.events and ev.t < trace.events[-1].t:
        raise TimeRegressionError(
            f"event time {ev.t} precedes last event time {trace.events[-1].t}"
        )
    trace.events.append(ev)
    return trace


def replay(trace: Trace) -> list[Viewport]:
    """Viewport sequence reproduced from a trace; a pure fold over its events."""
    return [ev.viewport_after for ev in trace.events]


def select_recommendation(vp: Viewport, rec: Recommendation) -> Viewport:
    """Zoom and center on a recommendation.

    The new scale makes the rec's longer edge fill 90% of the shorter screen
    edge, leaving a context margin all around.
    """
    target = max(rec.bounds.w, rec.bounds.h)
    scale = target / (SELECT_FILL_FRACTION * min(vp.screen_w, vp.screen_h))
    return Viewport(
        cx=rec.bounds.cx,
        cy=rec.bounds.cy,
        scale=scale,
        screen_w=vp.screen_w,
        screen_h=vp.screen_h,
    )


def hpf_center_viewport(
    col: int, row: int, hpf_px: int, vp: Viewport
) -> Viewport:
    scale = hpf_px / (SELECT_FILL_FRACTION * min(vp.screen_w, vp.screen_h))
    return Viewport(
        cx=(col + 0.5) * hpf_px,
        cy=(row + 0.5) * hpf_px,
        scale=scale,
        screen_w=vp.screen_w,
        screen_h=vp.screen_h,
    )


def adjacent_pan(vp: Viewport, direction: str, hpf_px: int, meta: SlideMeta) -> Viewport:
    """Discrete pan by one HPF cell, snapping to the nearest cell center.

    At the slide boundary the move clamps, so panning off the last column or
    row leaves the viewport unchanged. Scale is preserved.
    """
    steps = {"N": (0, -1), "S": (0, 1), "E": (1, 0), "W": (-1, 0)}
    if direction not in steps:
        raise ValidationError(f"direction must be one of N/S/E/W, got {direction!r}")
    cols = -(-meta.width0 // hpf_px)
    rows = -(-meta.height0 // hpf_px)
    # Snap the current center onto the grid, then take one step.
    col = min(max(int(round(vp.cx / hpf_px - 0.5)), 0), cols - 1)
    row = min(max(int(round(vp.cy / hpf_px - 0.5)), 0), rows - 1)
    dc, dr = steps[direction]
    col = min(max(col + dc, 0), cols - 1)
    row = min(max(row + dr, 0), rows - 1)
    cx = min((col + 0.5) * hpf_px, float(meta.width0))
    cy = min((row + 0.5) * hpf_px, float(meta.height0))
    return Viewport(cx=cx, cy=cy, scale=vp.scale, screen_w=vp.screen_w, screen_h=vp.screen_h)


def compute_cues(vp: Viewport, hpf_recs: list[Recommendation]) -> list[Cue]:
    """Edge cues for every off-screen HPF recommendation.

    The edge point is the exact intersection of the segment from the screen
    center toward the rec center with the viewport rectangle boundary; the
    binding coordinate is set to the extreme exactly. Cues landing within 16
    screen px of an already placed cue are shifted outward along their edge,
    lowest index first, so placement is deterministic and no cue is dropped.
    """
    hw, hh = vp.screen_w / 2.0, vp.screen_h / 2.0
    raw: list[Cue] = []
    for rec in sorted(hpf_recs, key=lambda r: r.index):
        if vp.sees(rec.bounds):
            continue
        dx = rec.bounds.cx - vp.cx
        dy = rec.bounds.cy - vp.cy
        norm = math.hypot(dx, dy)
        if norm == 0:
            continue
        dxs, dys = dx / vp.scale, dy / vp.scale
        tx = hw / abs(dxs) if dxs != 0 else math.inf
        ty = hh / abs(dys) if dys != 0 else math.inf
        if tx <= ty:
            ex = float(vp.screen_w) if dxs > 0 else 0.0
            ey = min(max(hh + dys * tx, 0.0), float(vp.screen_h))
        else:
            ey = float(vp.screen_h) if dys > 0 else 0.0
            ex = min(max(hw + dxs * ty, 0.0), float(vp.screen_w))
        raw.append(
            Cue(rec_id=rec.id, index=rec.index, edge_point=(ex, ey), direction=(dx / norm, dy / norm))
        )

    placed: list[Cue] = []
    for cue in raw:
        ex, ey = cue.edge_point
        on_vertical = ex in (0.0, float(vp.screen_w))
        for _ in range(64):
            hit = next(
                (
                    p
                    for p in placed
                    if math.hypot(p.edge_point[0] - ex, p.edge_point[1] - ey) < CUE_COLLISION_PX
                ),
                None,
            )
            if hit is None:
                break
            if on_vertical:
                step = CUE_COLLISION_PX if ey >= hit.edge_point[1] else -CUE_COLLISION_PX
                ey = min(max(ey + step, 0.0), float(vp.screen_h))
            else:
                step = CUE_COLLISION_PX if ex >= hit.edge_point[0] else -CUE_COLLISION_PX
                ex = min(max(ex + step, 0.0), float(vp.screen_w))
        placed.append(Cue(cue.rec_id, cue.index, (ex, ey), cue.direction))
    return placed


def cue_hop(vp: Viewport, cue: Cue, recs: RecommendationSet) -> Viewport:
    """Jump to the recommendation a cue points at.

    Raises NotFoundError when the cue references a rec that is no longer in
    the current set (stale after a re-rank); callers then refresh their cues.
    """
    rec = recs.find(cue.rec_id)
    return select_recommendation(vp, rec)
