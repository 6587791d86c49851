"""Synthetic slide generator with planted, machine-checkable ground truth.

Renders an H&E-like scene at desk scale: light pink tissue blobs on a white
background, dark blue-violet nuclei inside tissue, and mitosis stand-ins as
saturated magenta blobs whose hue/saturation the heuristic scorers key on.
Near-miss "distractor" blobs are planted with a muted purple so that a
calibrated detector scores them below the default probability threshold.

Everything is driven by one seeded RNG, so a spec with a fixed seed produces
byte-identical pyramids and identical ground truth on every run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .slide import DEFAULT_MAX_DIM, DEFAULT_MPP, GroundTruth, Rect, SlideMeta, SlideStore

TISSUE_COLOR = (241, 224, 231)
NUCLEUS_COLOR = (70, 60, 140)
MITOSIS_COLOR = (190, 20, 120)
DISTRACTOR_COLOR = (120, 62, 130)

NUCLEUS_JITTER = 8  # per-channel color wobble; keeps hue well clear of the detector window
CELL_MARGIN = 24  # blobs stay this far inside their HPF cell so counts stay per-cell exact
MITOSIS_MIN_SEP = 64  # > 2x the default match radius, keeps matching unambiguous
NUCLEUS_MIN_SEP = 22


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for one synthetic slide.

    Rates are expressed per HPF grid cell (``hpf_px`` square). Hotspots are
    clusters of grid cells (a seed cell plus its ``hotspot_radius_cells``
    neighborhood) with elevated mitosis rate and cell density.
    """

    width0: int
    height0: int
    tissue_regions: int = 3
    hotspot_count: int = 2
    background_cell_density: float = 600.0  # cells per mm^2
    hotspot_mitosis_rate: float = 1.2  # mitoses per HPF cell
    baseline_mitosis_rate: float = 0.05
    seed: int = 0
    hotspot_cell_density: float | None = None  # defaults to 2x background
    hotspot_radius_cells: int = 1
    distractor_rate: float = 0.3  # near-miss blobs per tissue HPF cell
    hpf_px: int = 1680

    def __post_init__(self):
        if self.width0 < 1 or self.height0 < 1:
            raise ValidationError("slide dimensions must be >= 1 px")
        if self.hotspot_mitosis_rate <= self.baseline_mitosis_rate:
            raise ValidationError("hotspot_mitosis_rate must exceed baseline_mitosis_rate")
        if self.baseline_mitosis_rate < 0 or self.background_cell_density < 0:
            raise ValidationError("densities must be >= 0")
        if self.distractor_rate < 0:
            raise ValidationError("distractor_rate must be >= 0")
        if self.hpf_px < 256:
            raise ValidationError("hpf_px too small for blob placement")

    @property
    def cell_density_hot(self) -> float:
        return (
            self.hotspot_cell_density
            if self.hotspot_cell_density is not None
            else 2.0 * self.background_cell_density
        )

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)


@dataclass
class SyntheticTruth:
    """Generator-side truth beyond the ground-truth mitosis list.

    ``dark_blobs_per_cell`` counts every below-luminance blob planted in each
    HPF cell (nuclei + mitoses + distractors), which is exactly what the
    heuristic cell counter is expected to find.
    """

    hpf_px: int
    cols: int
    rows: int
    dark_blobs_per_cell: list[list[int]]  # [row][col]
    hotspot_cells: list[tuple[int, int]]  # (col, row)
    distractors: list[tuple[int, int]]
    tissue_cells: list[tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "hpf_px": self.hpf_px,
            "cols": self.cols,
            "rows": self.rows,
            "dark_blobs_per_cell": self.dark_blobs_per_cell,
            "hotspot_cells": [{"col": c, "row": r} for c, r in self.hotspot_cells],
            "distractors": [{"x": x, "y": y} for x, y in self.distractors],
            "tissue_cells": [{"col": c, "row": r} for c, r in self.tissue_cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTruth":
        return cls(
            hpf_px=d["hpf_px"],
            cols=d["cols"],
            rows=d["rows"],
            dark_blobs_per_cell=d["dark_blobs_per_cell"],
            hotspot_cells=[(p["col"], p["row"]) for p in d["hotspot_cells"]],
            distractors=[(p["x"], p["y"]) for p in d["distractors"]],
            tissue_cells=[(p["col"], p["row"]) for p in d["tissue_cells"]],
        )


def load_synthetic_truth(store: SlideStore, slide_id: str) -> SyntheticTruth:
    path = store.slide_dir(slide_id) / "synthetic_truth.json"
    return SyntheticTruth.from_dict(json.loads(path.read_text()))


def _ellipse_mask(shape, cx, cy, rx, ry, angle):
    yy, xx = np.ogrid[: shape[0], : shape[1]]
    dx = xx - cx
    dy = yy - cy
    ca, sa = math.cos(angle), math.sin(angle)
    u = dx * ca + dy * sa
    v = dy * ca - dx * sa
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _paint_ellipse(img, cx, cy, rx, ry, angle, color):
    r = int(max(rx, ry)) + 2
    x0, x1 = max(0, int(cx) - r), min(img.shape[1], int(cx) + r + 1)
    y0, y1 = max(0, int(cy) - r), min(img.shape[0], int(cy) + r + 1)
    if x0 >= x1 or y0 >= y1:
        return
    mask = _ellipse_mask((y1 - y0, x1 - x0), cx - x0, cy - y0, rx, ry, angle)
    img[y0:y1, x0:x1][mask] = color


class _Occupancy:
    """Coarse spatial hash used to keep planted blobs apart."""

    def __init__(self, cell=64):
        self.cell = cell
        self.buckets: dict[tuple[int, int], list[tuple[float, float]]] = {}

    def ok(self, x, y, min_sep):
        c = self.cell
        bx, by = int(x // c), int(y // c)
        reach = int(min_sep // c) + 1
        for gy in range(by - reach, by + reach + 1):
            for gx in range(bx - reach, bx + reach + 1):
                for px, py in self.buckets.get((gx, gy), ()):
                    if (px - x) ** 2 + (py - y) ** 2 < min_sep * min_sep:
                        return False
        return True

    def add(self, x, y):
        self.buckets.setdefault((int(x // self.cell), int(y // self.cell)), []).append((x, y))


def _sample_in_cell(rng, cell_rect: Rect, occupancy, min_sep, max_tries=60):
    lo_x = cell_rect.x + CELL_MARGIN
    hi_x = cell_rect.right - CELL_MARGIN
    lo_y = cell_rect.y + CELL_MARGIN
    hi_y = cell_rect.bottom - CELL_MARGIN
    if hi_x <= lo_x or hi_y <= lo_y:
        return None
    for _ in range(max_tries):
        x = float(rng.uniform(lo_x, hi_x))
        y = float(rng.uniform(lo_y, hi_y))
        if occupancy.ok(x, y, min_sep):
            occupancy.add(x, y)
            return (int(round(x)), int(round(y)))
    return None


def _split_total(rng, total: int, n_cells: int) -> np.ndarray:
    """Spread an exact total across cells (multinomial, equal weights)."""
    if n_cells == 0 or total <= 0:
        return np.zeros(max(n_cells, 0), dtype=np.int64)
    return rng.multinomial(total, np.full(n_cells, 1.0 / n_cells))


def render_synthetic(spec: SyntheticSpec) -> tuple[np.ndarray, list[tuple[int, int]], SyntheticTruth]:
    """Render the raster and return (image, mitosis points, planted truth).

    Mitosis totals are drawn per stratum as round(rate * cells) and spread
    multinomially, i.e. a Poisson process conditioned on its expected count.
    That pins the achieved global rate to the requested rates up to rounding,
    which an unconditioned draw could not guarantee at desk scale.
    """
    rng = np.random.default_rng(spec.seed)
    w, h = spec.width0, spec.height0
    img = np.full((h, w, 3), 255, dtype=np.uint8)

    # Tissue: big soft ellipses clustered around the slide center. Rendered at
    # 1/8 scale (tissue is backdrop; blob placement only needs coarse coverage)
    # and block-upsampled to full resolution.
    ds = 8
    th, tw = -(-h // ds), -(-w // ds)
    tissue_small = np.zeros((th, tw), dtype=bool)
    for _ in range(max(spec.tissue_regions, 1)):
        cx = rng.uniform(0.22, 0.78) * w
        cy = rng.uniform(0.22, 0.78) * h
        rx = rng.uniform(0.28, 0.42) * w
        ry = rng.uniform(0.28, 0.42) * h
        angle = rng.uniform(0, math.pi)
        tissue_small |= _ellipse_mask((th, tw), cx / ds, cy / ds, rx / ds, ry / ds, angle)
    tissue_mask = np.repeat(np.repeat(tissue_small, ds, axis=0), ds, axis=1)[:h, :w]
    img[tissue_mask] = TISSUE_COLOR

    # HPF grid bookkeeping.
    hpf = spec.hpf_px
    cols, rows = -(-w // hpf), -(-h // hpf)

    def cell_rect(col, row):
        return Rect(col * hpf, row * hpf, hpf, hpf).clamped(w, h)

    coverage = np.zeros((rows, cols))
    for row in range(rows):
        for col in range(cols):
            r = cell_rect(col, row)
            sm = tissue_small[r.y // ds : -(-r.bottom // ds), r.x // ds : -(-r.right // ds)]
            coverage[row, col] = sm.mean() if sm.size else 0.0
    tissue_cells = [
        (col, row) for row in range(rows) for col in range(cols) if coverage[row, col] >= 0.5
    ]
    if not tissue_cells:
        raise ValidationError("tissue regions cover no whole HPF cell; enlarge the slide")

    # Hotspots: seed cells spread apart, grown to a small neighborhood.
    hot: set[tuple[int, int]] = set()
    seeds: list[tuple[int, int]] = []
    order = rng.permutation(len(tissue_cells))
    min_seed_gap = 2 * spec.hotspot_radius_cells + 1
    for i in order:
        col, row = tissue_cells[i]
        if len(seeds) >= spec.hotspot_count:
            break
        if all(max(abs(col - c), abs(row - r)) >= min_seed_gap for c, r in seeds):
            seeds.append((col, row))
    for col, row in seeds:
        rad = spec.hotspot_radius_cells
        for dc in range(-rad, rad + 1):
            for dr in range(-rad, rad + 1):
                cand = (col + dc, row + dr)
                if cand in tissue_cells:
                    hot.add(cand)
    base_cells = [c for c in tissue_cells if c not in hot]
    hot_cells = sorted(hot)

    occupancy = _Occupancy()
    mitoses: list[tuple[int, int]] = []
    mit_per_cell = np.zeros((rows, cols), dtype=np.int64)

    def place_points(cells, total, min_sep):
        placed = []
        counts = _split_total(rng, total, len(cells))
        for (col, row), n in zip(cells, counts):
            r = cell_rect(col, row)
            for _ in range(int(n)):
                pt = _sample_in_cell(rng, r, occupancy, min_sep)
                if pt is not None:
                    placed.append(pt)
                    mit_per_cell[row, col] += 1
        return placed

    hot_total = int(round(spec.hotspot_mitosis_rate * len(hot_cells)))
    base_total = int(round(spec.baseline_mitosis_rate * len(base_cells)))
    mitoses += place_points(hot_cells, hot_total, MITOSIS_MIN_SEP)
    mitoses += place_points(base_cells, base_total, MITOSIS_MIN_SEP)

    distractors = []
    distr_per_cell = np.zeros((rows, cols), dtype=np.int64)
    n_distr = int(round(spec.distractor_rate * len(tissue_cells)))
    counts = _split_total(rng, n_distr, len(tissue_cells))
    for (col, row), n in zip(tissue_cells, counts):
        r = cell_rect(col, row)
        for _ in range(int(n)):
            pt = _sample_in_cell(rng, r, occupancy, MITOSIS_MIN_SEP)
            if pt is not None:
                distractors.append(pt)
                distr_per_cell[row, col] += 1

    # Nuclei: count fixed per cell from density * physical area * coverage.
    cell_area_mm2 = (hpf * DEFAULT_MPP) ** 2 / 1e6
    nuclei = []
    nuc_per_cell = np.zeros((rows, cols), dtype=np.int64)
    for col, row in tissue_cells:
        density = spec.cell_density_hot if (col, row) in hot else spec.background_cell_density
        r = cell_rect(col, row)
        frac_area = cell_area_mm2 * (r.area_px / (hpf * hpf))
        n = int(round(density * frac_area * coverage[row, col]))
        for _ in range(n):
            pt = _sample_in_cell(rng, r, occupancy, NUCLEUS_MIN_SEP)
            if pt is not None:
                nuclei.append(pt)
                nuc_per_cell[row, col] += 1

    for x, y in nuclei:
        rx = rng.uniform(5.0, 9.0)
        ry = rx * rng.uniform(0.65, 1.0)
        angle = rng.uniform(0, math.pi)
        color = np.clip(
            np.array(NUCLEUS_COLOR) + rng.integers(-NUCLEUS_JITTER, NUCLEUS_JITTER + 1, 3),
            0,
            255,
        ).astype(np.uint8)
        _paint_ellipse(img, x, y, rx, ry, angle, color)
    for x, y in mitoses:
        rx = rng.uniform(7.0, 10.0)
        ry = rx * rng.uniform(0.75, 1.0)
        _paint_ellipse(img, x, y, rx, ry, rng.uniform(0, math.pi), MITOSIS_COLOR)
    for x, y in distractors:
        rx = rng.uniform(7.0, 10.0)
        ry = rx * rng.uniform(0.75, 1.0)
        _paint_ellipse(img, x, y, rx, ry, rng.uniform(0, math.pi), DISTRACTOR_COLOR)

    dark = (nuc_per_cell + mit_per_cell + distr_per_cell).tolist()
    truth = SyntheticTruth(
        hpf_px=hpf,
        cols=cols,
        rows=rows,
        dark_blobs_per_cell=dark,
        hotspot_cells=hot_cells,
        distractors=distractors,
        tissue_cells=tissue_cells,
    )
    return img, mitoses, truth


def generate_synthetic(
    spec: SyntheticSpec,
    store: SlideStore,
    slide_id: str,
    *,
    max_dim: int = DEFAULT_MAX_DIM,
) -> tuple[SlideMeta, GroundTruth]:
    """Render, build the pyramid, and persist ground truth plus planted truth."""
    if max(spec.width0, spec.height0) > max_dim:
        raise ValidationError(
            f"spec dimensions {spec.width0}x{spec.height0} exceed configured max {max_dim}"
        )
    img, mitoses, truth = render_synthetic(spec)
    meta = store.build_pyramid(slide_id, img, mpp=DEFAULT_MPP, max_dim=max_dim)
    gt = GroundTruth(slide_id=slide_id, mitoses=mitoses, proliferative_hpfs=truth.hotspot_cells)
    gt.validate(meta)
    store.write_ground_truth(gt)
    sidecar = store.slide_dir(slide_id) / "synthetic_truth.json"
    sidecar.write_text(json.dumps(truth.to_dict()))
    return meta, gt
