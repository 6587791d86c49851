"""Per-HPF-tile criteria scoring: cellular count, proliferation, mitosis detections.

The slide is split into a fixed, non-overlapping grid of HPF cells anchored
at the slide origin. Each cell is scored independently by pluggable scorers;
the defaults are deterministic image heuristics tuned to the synthetic
renderer, and a JSON import path accepts detections produced elsewhere.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
from scipy import ndimage

from .errors import NotFoundError, StorageError, ValidationError
from .slide import Rect, SlideMeta, SlideStore

FORMAT_VERSION = 1
DEFAULT_HPF_PX = 1680
PROLIF_LAMBDA = 0.7

_LABEL_STRUCTURE = np.ones((3, 3), dtype=int)  # 8-connected components


@dataclass(frozen=True)
class GridIndex:
    col: int
    row: int

    def as_tuple(self) -> tuple[int, int]:
        return (self.col, self.row)


@dataclass(frozen=True)
class Detection:
    """A suspected mitosis centroid in level-0 pixels with a probability."""

    x: int
    y: int
    prob: float

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise ValidationError(f"detection prob {self.prob} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "prob": self.prob}


@dataclass
class CriteriaScores:
    """The three ranking criteria for one HPF cell."""

    idx: GridIndex
    cell_count: int = 0
    prolif_prob: float = 0.0
    detections: list[Detection] = field(default_factory=list)

    def mitosis_count(self, tau: float) -> int:
        return sum(1 for d in self.detections if d.prob >= tau)

    def prob_sum(self) -> float:
        return sum(d.prob for d in self.detections)


@dataclass(frozen=True)
class ScorerConfig:
    """Fixed, documented defaults for the heuristic scorers.

    Dark blobs count as cells when their relative luminance is below 0.5 and
    their area falls in [20, 2000] px^2. Mitosis candidates are saturated
    blobs with hue in [265, 360) degrees; the probability is a calibrated
    affine function of mean blob saturation with a small-blob penalty, so
    planted mitoses land around 0.97 and near-miss distractors around 0.67.
    """

    luminance_threshold: float = 0.5
    min_area: int = 20
    max_area: int = 2000
    hue_min_deg: float = 265.0
    hue_max_deg: float = 360.0
    saturation_floor: float = 0.30
    prob_sat_gain: float = 0.8
    prob_sat_offset: float = 0.25
    prob_area_ref: int = 80


DEFAULT_SCORER_CONFIG = ScorerConfig()


def grid_shape(width0: int, height0: int, hpf_px: int = DEFAULT_HPF_PX) -> tuple[int, int]:
    """(cols, rows) of the HPF grid covering the slide."""
    if hpf_px <= 0:
        raise ValidationError("hpf_px must be positive")
    return (-(-width0 // hpf_px), -(-height0 // hpf_px))


def cell_rect(idx: GridIndex, meta: SlideMeta, hpf_px: int = DEFAULT_HPF_PX) -> Rect:
    """Level-0 rect of one HPF cell, clamped at the slide edge."""
    cols, rows = grid_shape(meta.width0, meta.height0, hpf_px)
    if not (0 <= idx.col < cols and 0 <= idx.row < rows):
        raise NotFoundError(f"grid index {idx} outside {cols}x{rows} grid")
    return Rect(idx.col * hpf_px, idx.row * hpf_px, hpf_px, hpf_px).clamped(
        meta.width0, meta.height0
    )


def cell_of_point(x: float, y: float, hpf_px: int = DEFAULT_HPF_PX) -> GridIndex:
    return GridIndex(col=int(x // hpf_px), row=int(y // hpf_px))


def _dark_mask(region: np.ndarray, threshold: float) -> np.ndarray:
    """Pixels with relative luminance below threshold, in pure integer math."""
    r = region[..., 0].astype(np.uint32)
    g = region[..., 1].astype(np.uint32)
    b = region[..., 2].astype(np.uint32)
    # 0.2126 r + 0.7152 g + 0.0722 b < threshold * 255, scaled by 10^4.
    return 2126 * r + 7152 * g + 722 * b < int(round(threshold * 2_550_000))


def _saturated_mask(region: np.ndarray, floor: float) -> np.ndarray:
    """Pixels with HSV saturation >= floor: minc / maxc <= 1 - floor."""
    r, g, b = region[..., 0], region[..., 1], region[..., 2]
    maxc = np.maximum(np.maximum(r, g), b).astype(np.uint32)
    minc = np.minimum(np.minimum(r, g), b).astype(np.uint32)
    return (minc * 1000 <= maxc * int(round((1.0 - floor) * 1000))) & (maxc > 0)


def _saturation_of_pixels(rgb: np.ndarray) -> np.ndarray:
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    return np.where(maxc > 0, (maxc - minc) / np.maximum(maxc, 1e-6), 0.0)


def _hue_of_pixels(rgb: np.ndarray) -> np.ndarray:
    """Hue in degrees for an (N, 3) float array; gray pixels map to 0."""
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    safe = np.maximum(delta, 1e-6)
    hue = np.where(
        maxc == r,
        np.mod((g - b) / safe, 6.0),
        np.where(maxc == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    return np.where(delta > 0, hue * 60.0, 0.0)


def heuristic_cell_count(region: np.ndarray, cfg: ScorerConfig = DEFAULT_SCORER_CONFIG) -> int:
    """Count dark blobs (connected low-luminance components) in one HPF tile."""
    if region.size == 0:
        return 0
    mask = _dark_mask(region, cfg.luminance_threshold)
    labels, n = ndimage.label(mask, structure=_LABEL_STRUCTURE)
    if n == 0:
        return 0
    areas = np.bincount(labels.ravel())[1:]
    return int(np.count_nonzero((areas >= cfg.min_area) & (areas <= cfg.max_area)))


def heuristic_mitosis_detect(
    region: np.ndarray, cfg: ScorerConfig = DEFAULT_SCORER_CONFIG
) -> list[Detection]:
    """Detect saturated hue-window blobs; returns region-local detections.

    prob = clip(gain * mean_saturation + offset, 0, 1) * min(1, area / area_ref),
    rounded to 4 decimals. Centroids are component centers of mass.
    """
    if region.size == 0:
        return []
    mask = _saturated_mask(region, cfg.saturation_floor)
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return []
    # Hue and exact saturation only where saturated; blobs are a tiny
    # fraction of the tile, so the float math stays sparse.
    pixels = region[ys, xs].astype(np.float32)
    hue = _hue_of_pixels(pixels)
    in_window = (hue >= cfg.hue_min_deg) & (hue < cfg.hue_max_deg)
    mask[:] = False
    mask[ys[in_window], xs[in_window]] = True
    labels, n = ndimage.label(mask, structure=_LABEL_STRUCTURE)
    if n == 0:
        return []
    ids = np.arange(1, n + 1)
    areas = np.bincount(labels.ravel())[1:]
    keep = (areas >= cfg.min_area) & (areas <= cfg.max_area)
    if not keep.any():
        return []
    centroids = ndimage.center_of_mass(mask, labels, ids[keep])
    sat_sparse = _saturation_of_pixels(pixels[in_window])
    blob_labels = labels[ys[in_window], xs[in_window]]
    mean_sats = ndimage.mean(sat_sparse, blob_labels, ids[keep])
    out = []
    for (cy, cx), ms, area in zip(centroids, np.atleast_1d(mean_sats), areas[keep]):
        p = min(max(cfg.prob_sat_gain * float(ms) + cfg.prob_sat_offset, 0.0), 1.0)
        p *= min(1.0, float(area) / cfg.prob_area_ref)
        out.append(Detection(x=int(round(cx)), y=int(round(cy)), prob=round(p, 4)))
    out.sort(key=lambda d: (d.y, d.x))
    return out


@dataclass(frozen=True)
class Scorers:
    """Pluggable per-tile scorers; swap in adapters for real model output."""

    cell_counter: Callable[[np.ndarray], int]
    mitosis_detector: Callable[[np.ndarray], list[Detection]]


def default_scorers(cfg: ScorerConfig = DEFAULT_SCORER_CONFIG) -> Scorers:
    return Scorers(
        cell_counter=lambda region: heuristic_cell_count(region, cfg),
        mitosis_detector=lambda region: heuristic_mitosis_detect(region, cfg),
    )


@dataclass
class ScoreGrid:
    """Dense criteria grid covering the slide, one entry per HPF cell."""

    slide_id: str
    hpf_px: int
    cols: int
    rows: int
    cells: list[list[CriteriaScores]]  # [row][col]

    def cell(self, idx: GridIndex) -> CriteriaScores:
        if not (0 <= idx.col < self.cols and 0 <= idx.row < self.rows):
            raise NotFoundError(f"grid index {idx} outside {self.cols}x{self.rows} grid")
        return self.cells[idx.row][idx.col]

    def __iter__(self) -> Iterator[CriteriaScores]:
        for row in self.cells:
            yield from row

    def neighborhood_evidence(self, idx: GridIndex) -> float:
        """Sum of detection probabilities over the 3x3 neighborhood of idx."""
        total = 0.0
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                r, c = idx.row + dr, idx.col + dc
                if 0 <= r < self.rows and 0 <= c < self.cols:
                    total += self.cells[r][c].prob_sum()
        return total

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "slide_id": self.slide_id,
            "hpf_px": self.hpf_px,
            "cells": [
                {
                    "col": c.idx.col,
                    "row": c.idx.row,
                    "cell_count": c.cell_count,
                    "prolif_prob": c.prolif_prob,
                    "detections": [d.to_dict() for d in c.detections],
                }
                for c in self
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreGrid":
        entries = d["cells"]
        cols = max(e["col"] for e in entries) + 1
        rows = max(e["row"] for e in entries) + 1
        grid = cls(
            slide_id=d["slide_id"],
            hpf_px=int(d["hpf_px"]),
            cols=cols,
            rows=rows,
            cells=[
                [CriteriaScores(GridIndex(c, r)) for c in range(cols)] for r in range(rows)
            ],
        )
        for e in entries:
            cs = CriteriaScores(
                idx=GridIndex(e["col"], e["row"]),
                cell_count=int(e["cell_count"]),
                prolif_prob=float(e["prolif_prob"]),
                detections=[
                    Detection(int(p["x"]), int(p["y"]), float(p["prob"]))
                    for p in e["detections"]
                ],
            )
            grid.cells[e["row"]][e["col"]] = cs
        return grid

    def save(self, store: SlideStore) -> Path:
        path = store.slide_dir(self.slide_id) / "scores.json"
        path.write_text(json.dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, store: SlideStore, slide_id: str) -> "ScoreGrid":
        path = store.slide_dir(slide_id) / "scores.json"
        if not path.is_file():
            raise NotFoundError(f"no scores stored for slide {slide_id!r}")
        return cls.from_dict(json.loads(path.read_text()))


def proliferation_score(grid: ScoreGrid, idx: GridIndex, lam: float = PROLIF_LAMBDA) -> float:
    """p = 1 - exp(-lam * evidence) over the 3x3 neighborhood of idx.

    Evidence is the sum of detection probabilities, so the score is smooth,
    threshold independent, monotone in evidence, and zero iff evidence is zero.
    """
    return 1.0 - math.exp(-lam * grid.neighborhood_evidence(idx))


def score_slide(
    store: SlideStore,
    meta: SlideMeta,
    *,
    scorers: Scorers | None = None,
    hpf_px: int = DEFAULT_HPF_PX,
    lam: float = PROLIF_LAMBDA,
    jobs: int = 1,
) -> ScoreGrid:
    """Score every HPF cell of a stored slide.

    Cells are independent, so the per-tile work fans out to ``jobs`` threads;
    assembly order is fixed by grid index, keeping the result deterministic.
    """
    cols, rows = grid_shape(meta.width0, meta.height0, hpf_px)
    scorers = scorers or default_scorers()
    background = 255

    def score_cell(idx: GridIndex) -> CriteriaScores:
        rect = cell_rect(idx, meta, hpf_px)
        region = np.full((hpf_px, hpf_px, 3), background, dtype=np.uint8)
        region[: rect.h, : rect.w] = store.read_region(meta, rect)
        count = scorers.cell_counter(region)
        dets = [
            Detection(x=d.x + rect.x, y=d.y + rect.y, prob=d.prob)
            for d in scorers.mitosis_detector(region)
        ]
        return CriteriaScores(idx=idx, cell_count=count, detections=dets)

    indices = [GridIndex(c, r) for r in range(rows) for c in range(cols)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scored = list(pool.map(score_cell, indices))
    else:
        scored = [score_cell(i) for i in indices]

    grid = ScoreGrid(
        slide_id=meta.id,
        hpf_px=hpf_px,
        cols=cols,
        rows=rows,
        cells=[scored[r * cols : (r + 1) * cols] for r in range(rows)],
    )
    for cs in grid:
        cs.prolif_prob = round(proliferation_score(grid, cs.idx, lam), 6)
    return grid


def grid_from_detections(
    meta: SlideMeta,
    detections: list[Detection],
    *,
    hpf_px: int = DEFAULT_HPF_PX,
    cell_counts: dict[tuple[int, int], int] | None = None,
    lam: float = PROLIF_LAMBDA,
) -> ScoreGrid:
    """Build a ScoreGrid from imported detections (the file-import scorer path).

    ``cell_counts`` optionally supplies cellular counts keyed by (col, row);
    cells without an entry get zero.
    """
    cols, rows = grid_shape(meta.width0, meta.height0, hpf_px)
    cells = [[CriteriaScores(GridIndex(c, r)) for c in range(cols)] for r in range(rows)]
    for det in detections:
        idx = cell_of_point(det.x, det.y, hpf_px)
        cells[idx.row][idx.col].detections.append(det)
    for row in cells:
        for cs in row:
            cs.detections.sort(key=lambda d: (d.y, d.x))
    if cell_counts:
        for (col, row), n in cell_counts.items():
            cells[row][col].cell_count = int(n)
    grid = ScoreGrid(slide_id=meta.id, hpf_px=hpf_px, cols=cols, rows=rows, cells=cells)
    for cs in grid:
        cs.prolif_prob = round(proliferation_score(grid, cs.idx, lam), 6)
    return grid


def import_detections(path: str | Path, meta: SlideMeta) -> list[Detection]:
    """Read and validate a detection import file.

    Expected schema: ``{"detections": [{"x": int, "y": int, "prob": float}, ...]}``.
    The first malformed or out-of-bounds record is reported with its index.
    """
    path = Path(path)
    if not path.is_file():
        raise StorageError(f"detection file {path} not found")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"detection file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("detections"), list):
        raise ValidationError('detection file must be an object with a "detections" list')
    out = []
    for i, rec in enumerate(payload["detections"]):
        try:
            x, y, prob = int(rec["x"]), int(rec["y"]), float(rec["prob"])
        except (TypeError, KeyError, ValueError) as exc:
            raise ValidationError(f"malformed detection record {i}: {rec!r}") from exc
        if not 0.0 <= prob <= 1.0:
            raise ValidationError(f"detection record {i}: prob {prob} outside [0, 1]")
        if not (0 <= x < meta.width0 and 0 <= y < meta.height0):
            raise ValidationError(f"detection record {i}: point ({x},{y}) outside slide bounds")
        out.append(Detection(x=x, y=y, prob=prob))
    return out


def export_detections(path: str | Path, detections: list[Detection]) -> Path:
    path = Path(path)
    path.write_text(
        json.dumps({"format_version": FORMAT_VERSION, "detections": [d.to_dict() for d in detections]})
    )
    return path
