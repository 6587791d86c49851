"""Shared fixtures: one rendered synthetic slide and one grid-level hotspot slide.

The rendered slide exercises the raster path (pyramid, scorers, service, CLI).
The hotspot slide is built directly at the ScoreGrid level: agents and metrics
only consume grid/ground-truth data, so skipping the raster keeps the suite fast
while using a slide large enough for meaningful block structure (12x12 HPF
cells = four full 6x6 Local blocks).
"""

from __future__ import annotations

import numpy as np
import pytest

from navipath.scoring import Detection, grid_from_detections, score_slide
from navipath.slide import GroundTruth, SlideMeta, SlideStore, pyramid_levels
from navipath.synth import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="session")
def rendered(tmp_path_factory):
    """A 6720x5040 rendered slide: store, meta, ground truth, scored grid."""
    root = tmp_path_factory.mktemp("slides")
    store = SlideStore(root)
    spec = SyntheticSpec(
        width0=6720,
        height0=5040,
        tissue_regions=3,
        hotspot_count=1,
        background_cell_density=600.0,
        hotspot_mitosis_rate=2.0,
        baseline_mitosis_rate=0.15,
        seed=7,
    )
    meta, gt = generate_synthetic(spec, store, "fixture-7")
    grid = score_slide(store, meta)
    grid.save(store)
    return {"store": store, "meta": meta, "gt": gt, "grid": grid, "spec": spec}


def build_hotspot_slide(
    *,
    slide_px: int = 20160,
    hpf_px: int = 1680,
    hot_cells_spec: dict[tuple[int, int], float] | None = None,
    base_rate: float = 0.02,
    base_count_range: tuple[int, int] = (90, 115),
    hot_count_range: tuple[int, int] = (190, 230),
    det_prob: float = 0.97,
    seed: int = 11,
    slide_id: str = "hotspot-11",
):
    """Grid-level synthetic slide: meta + ground truth + ScoreGrid, no raster.

    ``hot_cells_spec`` maps (col, row) cells to their mitosis rate; remaining
    cells get ``base_rate``. Detections mirror the planted points at a fixed
    probability, the same shape the detection import path produces.
    """
    rng = np.random.default_rng(seed)
    meta = SlideMeta(
        id=slide_id,
        width0=slide_px,
        height0=slide_px,
        levels=pyramid_levels(slide_px, slide_px, 256),
    )
    cols = rows = slide_px // hpf_px
    if hot_cells_spec is None:
        # Ten hot cells spread over all four 6x6 blocks, clustered per block.
        hot_cells_spec = {
            (2, 2): 6.0, (3, 2): 6.0, (2, 3): 6.0,
            (8, 2): 6.0, (9, 3): 6.0,
            (2, 8): 6.0, (3, 9): 6.0,
            (8, 8): 6.0, (9, 8): 6.0, (8, 9): 6.0,
        }
    points: list[tuple[int, int]] = []
    margin = 40
    for row in range(rows):
        for col in range(cols):
            rate = hot_cells_spec.get((col, row), base_rate)
            n = int(rng.poisson(rate))
            placed = 0
            while placed < n:
                x = int(rng.integers(col * hpf_px + margin, (col + 1) * hpf_px - margin))
                y = int(rng.integers(row * hpf_px + margin, (row + 1) * hpf_px - margin))
                if all((x - px) ** 2 + (y - py) ** 2 >= 64**2 for px, py in points[-60:]):
                    points.append((x, y))
                    placed += 1
    gt = GroundTruth(slide_id=slide_id, mitoses=points, proliferative_hpfs=sorted(hot_cells_spec))
    gt.validate(meta)
    cell_counts = {}
    for row in range(rows):
        for col in range(cols):
            lo, hi = hot_count_range if (col, row) in hot_cells_spec else base_count_range
            cell_counts[(col, row)] = int(rng.integers(lo, hi))
    dets = [Detection(x=x, y=y, prob=det_prob) for x, y in points]
    grid = grid_from_detections(meta, dets, hpf_px=hpf_px, cell_counts=cell_counts)
    return {"meta": meta, "gt": gt, "grid": grid, "hot_cells": set(hot_cells_spec)}


@pytest.fixture(scope="session")
def hotspot():
    return build_hotspot_slide()


@pytest.fixture(scope="session")
def separation():
    """Hotspot fixture for strategy-separation runs: one dense 3x3 cluster.

    The baseline is nearly empty, so visited-area mitotic rate contrasts the
    comprehensive sweep against recommendation-following strategies.
    """
    cluster = {(c, r): 7.0 for c in (7, 8, 9) for r in (5, 6, 7)}
    return build_hotspot_slide(
        hot_cells_spec=cluster, base_rate=0.005, seed=11, slide_id="separation-11"
    )
