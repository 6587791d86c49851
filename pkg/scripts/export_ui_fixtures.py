#!/usr/bin/env python3
"""Export shared geometry fixtures for the viewer client.

The frontend renders cues and viewport transitions with its own TypeScript
code; these fixtures pin that code to the engine's geometry so there is one
oracle for both sides. Regenerate after changing navigate.py:

    python3 scripts/export_ui_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from navipath.navigate import Viewport, adjacent_pan, compute_cues, select_recommendation
from navipath.recommend import Recommendation
from navipath.slide import Rect, SlideMeta, pyramid_levels

OUT_DIR = Path(__file__).resolve().parents[1] / "frontend" / "tests" / "fixtures"


def vp_dict(vp: Viewport) -> dict:
    return vp.to_dict()


def cue_cases() -> list[dict]:
    rng = np.random.default_rng(2025)
    cases = []
    # Randomized single-rec cases, a mix of on- and off-screen.
    while len(cases) < 160:
        vp = Viewport(
            cx=float(round(rng.uniform(1000, 19000), 3)),
            cy=float(round(rng.uniform(1000, 19000), 3)),
            scale=float(round(rng.uniform(0.3, 12.0), 4)),
            screen_w=int(rng.integers(300, 1800)),
            screen_h=int(rng.integers(300, 1800)),
        )
        bounds = Rect(int(rng.uniform(0, 18000)), int(rng.uniform(0, 18000)), 1680, 1680)
        rec = Recommendation(
            id=f"hpf-{bounds.x}-{bounds.y}", level="hpf", bounds=bounds,
            index=int(rng.integers(1, 40)), score=1.0, explanation={},
        )
        cues = compute_cues(vp, [rec])
        cases.append(
            {
                "viewport": vp_dict(vp),
                "recs": [{"id": rec.id, "index": rec.index, "bounds": bounds.to_dict()}],
                "cues": [
                    {
                        "rec_id": c.rec_id,
                        "index": c.index,
                        "edge_point": list(c.edge_point),
                        "direction": list(c.direction),
                    }
                    for c in cues
                ],
            }
        )
    # Collision clusters: nearly collinear rec fans that force offsetting.
    for k in range(8):
        vp = Viewport(cx=5000.0, cy=5000.0, scale=1.8, screen_w=1000, screen_h=1000)
        recs = []
        for i in range(6):
            bounds = Rect(15000 + 50 * k, 3200 + i * 120 + 30 * k, 1680, 1680)
            recs.append(
                Recommendation(
                    id=f"hpf-c{k}-{i}", level="hpf", bounds=bounds,
                    index=i + 1, score=1.0, explanation={},
                )
            )
        cues = compute_cues(vp, recs)
        cases.append(
            {
                "viewport": vp_dict(vp),
                "recs": [
                    {"id": r.id, "index": r.index, "bounds": r.bounds.to_dict()} for r in recs
                ],
                "cues": [
                    {
                        "rec_id": c.rec_id,
                        "index": c.index,
                        "edge_point": list(c.edge_point),
                        "direction": list(c.direction),
                    }
                    for c in cues
                ],
            }
        )
    return cases


def viewport_cases() -> dict:
    rng = np.random.default_rng(7)
    meta = SlideMeta(
        id="fx", width0=20160, height0=18480, levels=pyramid_levels(20160, 18480, 256)
    )
    select = []
    for _ in range(60):
        vp = Viewport(
            cx=float(round(rng.uniform(0, 20000), 2)),
            cy=float(round(rng.uniform(0, 18000), 2)),
            scale=float(round(rng.uniform(0.2, 14.0), 4)),
            screen_w=int(rng.integers(400, 1900)),
            screen_h=int(rng.integers(400, 1900)),
        )
        size = int(rng.choice([10080, 1680, 240]))
        x = int(rng.uniform(0, meta.width0 - size))
        y = int(rng.uniform(0, meta.height0 - size))
        rec = Recommendation(
            id="r", level="hpf", bounds=Rect(x, y, size, size), index=1, score=0.0,
            explanation={},
        )
        select.append(
            {
                "viewport": vp_dict(vp),
                "bounds": rec.bounds.to_dict(),
                "after": vp_dict(select_recommendation(vp, rec)),
            }
        )
    pans = []
    for _ in range(80):
        vp = Viewport(
            cx=float(round(rng.uniform(0, 20160), 2)),
            cy=float(round(rng.uniform(0, 18480), 2)),
            scale=1.867,
            screen_w=1000,
            screen_h=1000,
        )
        direction = str(rng.choice(["N", "S", "E", "W"]))
        pans.append(
            {
                "viewport": vp_dict(vp),
                "direction": direction,
                "hpf_px": 1680,
                "slide_w": meta.width0,
                "slide_h": meta.height0,
                "after": vp_dict(adjacent_pan(vp, direction, 1680, meta)),
            }
        )
    return {"slide": {"width0": meta.width0, "height0": meta.height0}, "select": select,
            "adjacent_pan": pans}


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    (OUT_DIR / "cue_geometry.json").write_text(json.dumps(cue_cases(), indent=1))
    (OUT_DIR / "viewport_cases.json").write_text(json.dumps(viewport_cases(), indent=1))
    print(f"wrote fixtures to {OUT_DIR}")


if __name__ == "__main__":
    main()
