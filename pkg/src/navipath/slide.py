"""Slide coordinate model, tile pyramid storage, and physical-unit conversion.

All geometry lives in level-0 pixel coordinates. A slide is stored as a plain
directory of lossless PNG tiles, one subdirectory per pyramid level, plus a
``meta.json`` describing the coordinate space. Level L is a 2x box-filtered
downsample of level L-1; the top level always fits in a single tile.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import NotFoundError, StorageError, ValidationError

FORMAT_VERSION = 1

DEFAULT_TILE_SIZE = 256
DEFAULT_MPP = 0.25  # micrometers per level-0 pixel
DEFAULT_MAX_DIM = 20_000  # desk-scale guard for raster operations
BACKGROUND = 255  # white, the H&E slide-background convention

# Metric counting window: 0.16 mm^2, i.e. a 1600 px square at 0.25 mpp.
# Distinct from the 1680 px examination tile used by the recommendation grid.
HPF_AREA_MM2 = 0.16

_PNG_OPTS = {"compress_level": 1, "optimize": False}


def pyramid_levels(width0: int, height0: int, tile_size: int) -> int:
    """Number of levels so that the top level fits in one tile.

    Equals 1 + ceil(log2(max(width0, height0) / tile_size)), floored at 1.
    """
    levels = 1
    extent = max(width0, height0)
    while extent > tile_size:
        extent = -(-extent // 2)
        levels += 1
    return levels


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in level-0 pixels."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"rect must have positive extent, got {self.w}x{self.h}")

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2

    @property
    def cy(self) -> float:
        return self.y + self.h / 2

    @property
    def area_px(self) -> int:
        return self.w * self.h

    def contains_point(self, px: float, py: float) -> bool:
        return self.x <= px < self.right and self.y <= py < self.bottom

    def intersects(self, other: "Rect") -> bool:
        """Positive-area overlap; touching edges do not count."""
        return (
            self.x < other.right
            and other.x < self.right
            and self.y < other.bottom
            and other.y < self.bottom
        )

    def clamped(self, width: int, height: int) -> "Rect":
        """Intersection with the slide extent [0, width) x [0, height)."""
        x0 = max(self.x, 0)
        y0 = max(self.y, 0)
        x1 = min(self.right, width)
        y1 = min(self.bottom, height)
        if x1 <= x0 or y1 <= y0:
            raise ValidationError("rect lies entirely outside the slide")
        return Rect(x0, y0, x1 - x0, y1 - y0)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class SlideMeta:
    """Dimensions and physical scale of one stored slide."""

    id: str
    width0: int
    height0: int
    levels: int
    tile_size: int = DEFAULT_TILE_SIZE
    mpp: float = DEFAULT_MPP

    def __post_init__(self):
        if not self.id:
            raise ValidationError("slide id must be non-empty")
        if self.width0 < 1 or self.height0 < 1:
            raise ValidationError("slide dimensions must be >= 1 px")
        if self.mpp <= 0:
            raise ValidationError("mpp must be positive")
        if self.tile_size < 64:
            raise ValidationError("tile_size must be >= 64")
        expected = pyramid_levels(self.width0, self.height0, self.tile_size)
        if self.levels != expected:
            raise ValidationError(
                f"levels must be {expected} for {self.width0}x{self.height0}"
                f" at tile_size {self.tile_size}, got {self.levels}"
            )

    def level_dims(self, level: int) -> tuple[int, int]:
        """(width, height) in pixels at the given level."""
        if not 0 <= level < self.levels:
            raise NotFoundError(f"level {level} out of range [0, {self.levels})")
        f = 1 << level
        return (-(-self.width0 // f), -(-self.height0 // f))

    def tile_grid(self, level: int) -> tuple[int, int]:
        """(cols, rows) of the tile grid at the given level."""
        w, h = self.level_dims(level)
        return (-(-w // self.tile_size), -(-h // self.tile_size))

    def bounds(self) -> Rect:
        return Rect(0, 0, self.width0, self.height0)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "id": self.id,
            "width0": self.width0,
            "height0": self.height0,
            "levels": self.levels,
            "tile_size": self.tile_size,
            "mpp": self.mpp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SlideMeta":
        return cls(
            id=d["id"],
            width0=int(d["width0"]),
            height0=int(d["height0"]),
            levels=int(d["levels"]),
            tile_size=int(d["tile_size"]),
            mpp=float(d["mpp"]),
        )


@dataclass
class GroundTruth:
    """Planted or annotated mitosis centroids for one slide."""

    slide_id: str
    mitoses: list[tuple[int, int]] = field(default_factory=list)
    proliferative_hpfs: list[tuple[int, int]] | None = None  # (col, row) cells

    def validate(self, meta: SlideMeta) -> None:
        for x, y in self.mitoses:
            if not (0 <= x < meta.width0 and 0 <= y < meta.height0):
                raise ValidationError(f"mitosis ({x},{y}) outside slide bounds")
        pts = sorted(self.mitoses)
        for a, b in zip(pts, pts[1:]):
            if abs(a[0] - b[0]) < 1 and abs(a[1] - b[1]) < 1:
                raise ValidationError(f"duplicate mitosis points near {a}")

    def to_dict(self) -> dict:
        d = {
            "format_version": FORMAT_VERSION,
            "slide_id": self.slide_id,
            "mitoses": [{"x": int(x), "y": int(y)} for x, y in self.mitoses],
        }
        if self.proliferative_hpfs is not None:
            d["proliferative_hpfs"] = [
                {"col": int(c), "row": int(r)} for c, r in self.proliferative_hpfs
            ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        hpfs = None
        if d.get("proliferative_hpfs") is not None:
            hpfs = [(int(p["col"]), int(p["row"])) for p in d["proliferative_hpfs"]]
        return cls(
            slide_id=d["slide_id"],
            mitoses=[(int(p["x"]), int(p["y"])) for p in d["mitoses"]],
            proliferative_hpfs=hpfs,
        )


def area_mm2(rect: Rect, meta: SlideMeta) -> float:
    """Physical area of a level-0 rect in mm^2: w * h * mpp^2 / 10^6."""
    return rect.w * rect.h * meta.mpp * meta.mpp / 1e6


def box_downsample_2x(img: np.ndarray) -> np.ndarray:
    """2x box filter with round-half-up integer averaging.

    Odd trailing rows/columns average over the pixels actually present, so
    output dims are ceil(h/2) x ceil(w/2).
    """
    h, w = img.shape[:2]
    oh, ow = -(-h // 2), -(-w // 2)
    acc = np.zeros((oh, ow) + img.shape[2:], dtype=np.uint32)
    cnt = np.zeros((oh, ow) + (1,) * (img.ndim - 2), dtype=np.uint32)
    for dy in (0, 1):
        for dx in (0, 1):
            sub = img[dy::2, dx::2]
            acc[: sub.shape[0], : sub.shape[1]] += sub
            cnt[: sub.shape[0], : sub.shape[1]] += 1
    return ((acc + cnt // 2) // cnt).astype(np.uint8)


def _as_rgb(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise ValidationError("source raster must be uint8")
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError("source raster must be HxW or HxWx3")
    return arr


class SlideStore:
    """Directory-backed slide storage.

    Layout per slide::

        <root>/<slide_id>/meta.json
        <root>/<slide_id>/level_<L>/<col>_<row>.png
        <root>/<slide_id>/ground_truth.json
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def slide_dir(self, slide_id: str) -> Path:
        return self.root / slide_id

    def tile_path(self, slide_id: str, level: int, col: int, row: int) -> Path:
        return self.slide_dir(slide_id) / f"level_{level}" / f"{col}_{row}.png"

    def list_slides(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir() if (p / "meta.json").is_file())

    def build_pyramid(
        self,
        slide_id: str,
        image: np.ndarray,
        *,
        tile_size: int = DEFAULT_TILE_SIZE,
        mpp: float = DEFAULT_MPP,
        max_dim: int = DEFAULT_MAX_DIM,
    ) -> SlideMeta:
        """Write the full tile pyramid for a level-0 raster and persist meta.

        Each level is a 2x box-filtered downsample of the previous one; edge
        tiles are padded to tile_size with the white background value.
        """
        arr = _as_rgb(image)
        h, w = arr.shape[:2]
        if h < 1 or w < 1:
            raise ValidationError("source raster is empty")
        if max(h, w) > max_dim:
            raise ValidationError(f"raster {w}x{h} exceeds configured max dim {max_dim}")
        meta = SlideMeta(
            id=slide_id,
            width0=w,
            height0=h,
            levels=pyramid_levels(w, h, tile_size),
            tile_size=tile_size,
            mpp=mpp,
        )
        sdir = self.slide_dir(slide_id)
        try:
            sdir.mkdir(parents=True, exist_ok=True)
            cur = arr
            for level in range(meta.levels):
                self._write_level(sdir, level, cur, tile_size)
                if level < meta.levels - 1:
                    cur = box_downsample_2x(cur)
            (sdir / "meta.json").write_text(json.dumps(meta.to_dict(), indent=2))
        except OSError as exc:
            raise StorageError(f"failed to write pyramid for {slide_id}: {exc}") from exc
        return meta

    @staticmethod
    def _write_level(sdir: Path, level: int, img: np.ndarray, tile_size: int) -> None:
        ldir = sdir / f"level_{level}"
        ldir.mkdir(exist_ok=True)
        h, w = img.shape[:2]
        cols, rows = -(-w // tile_size), -(-h // tile_size)
        for row in range(rows):
            for col in range(cols):
                tile = np.full((tile_size, tile_size, 3), BACKGROUND, dtype=np.uint8)
                y0, x0 = row * tile_size, col * tile_size
                part = img[y0 : y0 + tile_size, x0 : x0 + tile_size]
                tile[: part.shape[0], : part.shape[1]] = part
                Image.fromarray(tile).save(ldir / f"{col}_{row}.png", **_PNG_OPTS)

    def load_meta(self, slide_id: str) -> SlideMeta:
        path = self.slide_dir(slide_id) / "meta.json"
        if not path.is_file():
            raise NotFoundError(f"unknown slide {slide_id!r}")
        return SlideMeta.from_dict(json.loads(path.read_text()))

    def tile_at(self, meta: SlideMeta, level: int, col: int, row: int) -> np.ndarray:
        """Stored tile as a (tile_size, tile_size, 3) uint8 array."""
        cols, rows = meta.tile_grid(level)  # raises NotFoundError on bad level
        if not (0 <= col < cols and 0 <= row < rows):
            raise NotFoundError(
                f"tile ({col},{row}) out of grid {cols}x{rows} at level {level}"
            )
        path = self.tile_path(meta.id, level, col, row)
        if not path.is_file():
            raise StorageError(f"missing tile file {path}")
        return np.asarray(Image.open(path).convert("RGB"))

    def read_region(self, meta: SlideMeta, rect: Rect) -> np.ndarray:
        """Assemble a level-0 region. The rect must lie inside the slide."""
        if rect.x < 0 or rect.y < 0 or rect.right > meta.width0 or rect.bottom > meta.height0:
            raise ValidationError(f"region {rect} outside slide bounds")
        ts = meta.tile_size
        out = np.empty((rect.h, rect.w, 3), dtype=np.uint8)
        for row in range(rect.y // ts, (rect.bottom - 1) // ts + 1):
            for col in range(rect.x // ts, (rect.right - 1) // ts + 1):
                tile = self.tile_at(meta, 0, col, row)
                tx0, ty0 = col * ts, row * ts
                sx0 = max(rect.x, tx0)
                sy0 = max(rect.y, ty0)
                sx1 = min(rect.right, tx0 + ts)
                sy1 = min(rect.bottom, ty0 + ts)
                out[sy0 - rect.y : sy1 - rect.y, sx0 - rect.x : sx1 - rect.x] = tile[
                    sy0 - ty0 : sy1 - ty0, sx0 - tx0 : sx1 - tx0
                ]
        return out

    def write_ground_truth(self, gt: GroundTruth) -> Path:
        path = self.slide_dir(gt.slide_id) / "ground_truth.json"
        path.write_text(json.dumps(gt.to_dict(), indent=2))
        return path

    def load_ground_truth(self, slide_id: str) -> GroundTruth:
        path = self.slide_dir(slide_id) / "ground_truth.json"
        if not path.is_file():
            raise NotFoundError(f"no ground truth stored for slide {slide_id!r}")
        return GroundTruth.from_dict(json.loads(path.read_text()))
