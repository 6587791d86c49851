"""Explanation payloads: verbal dialogs for area recommendations, cards for cells."""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ValidationError
from .scoring import Detection
from .slide import Rect

RATING_SPARSE = "sparse"
RATING_CELLULAR = "cellular"
RATING_VERY_CELLULAR = "very cellular"

PROLIF_UNLIKELY = "unlikely"
PROLIF_MODERATE = "moderately likely"
PROLIF_VERY_LIKELY = "very likely"

CONF_LOW = "low confidence"
CONF_MODERATE = "moderately confident"
CONF_HIGH = "highly confident"


@dataclass(frozen=True)
class ExplainConfig:
    """Bin edges for the qualitative labels plus saliency geometry.

    The upper proliferation bin starts at 0.77, the operating threshold the
    proliferation model is calibrated against.
    """

    cellular_lo: float = 50.0
    cellular_hi: float = 150.0
    prolif_lo: float = 0.40
    prolif_hi: float = 0.77
    conf_lo: float = 0.90
    conf_hi: float = 0.98
    cell_px: int = 240

    @property
    def saliency_sigma(self) -> float:
        return self.cell_px / 6.0


DEFAULT_EXPLAIN_CONFIG = ExplainConfig()


def cellular_rating(mean_cells_per_hpf: float, cfg: ExplainConfig = DEFAULT_EXPLAIN_CONFIG) -> str:
    if mean_cells_per_hpf < cfg.cellular_lo:
        return RATING_SPARSE
    if mean_cells_per_hpf <= cfg.cellular_hi:
        return RATING_CELLULAR
    return RATING_VERY_CELLULAR


def prolif_rating(max_prolif: float, cfg: ExplainConfig = DEFAULT_EXPLAIN_CONFIG) -> str:
    if max_prolif < cfg.prolif_lo:
        return PROLIF_UNLIKELY
    if max_prolif < cfg.prolif_hi:
        return PROLIF_MODERATE
    return PROLIF_VERY_LIKELY


def confidence_label(prob: float, cfg: ExplainConfig = DEFAULT_EXPLAIN_CONFIG) -> str:
    if prob < cfg.conf_lo:
        return CONF_LOW
    if prob < cfg.conf_hi:
        return CONF_MODERATE
    return CONF_HIGH


def verbal_dialog(
    cell_total: float,
    prolif_max: float,
    mitosis_total: float,
    n_hpfs: int,
    cfg: ExplainConfig = DEFAULT_EXPLAIN_CONFIG,
) -> dict:
    """Dialog payload for a Local or HPF recommendation.

    Example rendering: "Cellular rating: cellular (36HPF), Proliferative
    rating: very likely, Average mitosis: 0.333".
    """
    if n_hpfs < 1:
        raise ValidationError("n_hpfs must be >= 1")
    return {
        "variant": "dialog",
        "cellular_rating": cellular_rating(cell_total / n_hpfs, cfg),
        "prolif_rating": prolif_rating(prolif_max, cfg),
        "avg_mitosis": round(mitosis_total / n_hpfs, 3),
        "n_hpfs": n_hpfs,
    }


def saliency_map(det: Detection, bounds: Rect, cfg: ExplainConfig = DEFAULT_EXPLAIN_CONFIG) -> np.ndarray:
    """Placeholder saliency: isotropic Gaussian peaked at the detection pixel.

    Evaluated at pixel centers of the bounds patch and normalized to max 1.0,
    so the argmax is exactly the pixel containing the detection point.
    """
    xs = bounds.x + np.arange(bounds.w) + 0.5
    ys = bounds.y + np.arange(bounds.h) + 0.5
    mu_x, mu_y = det.x + 0.5, det.y + 0.5
    sig2 = 2.0 * cfg.saliency_sigma**2
    gx = np.exp(-((xs - mu_x) ** 2) / sig2)
    gy = np.exp(-((ys - mu_y) ** 2) / sig2)
    m = np.outer(gy, gx)
    return m / m.max()


def _encode_png_gray(arr: np.ndarray) -> str:
    img = Image.fromarray(np.round(arr * 255).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG", compress_level=1, optimize=False)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def explanation_card(
    det: Detection,
    bounds: Rect | None = None,
    cfg: ExplainConfig = DEFAULT_EXPLAIN_CONFIG,
) -> dict:
    """Card payload for a Cell recommendation.

    The saliency raster is a stand-in, not model evidence, and says so in the
    payload. Bounds default to an unclamped square centered on the detection.
    """
    if bounds is None:
        half = cfg.cell_px // 2
        bounds = Rect(det.x - half, det.y - half, cfg.cell_px, cfg.cell_px)
    return {
        "variant": "card",
        "prob": det.prob,
        "confidence_label": confidence_label(det.prob, cfg),
        "saliency_png_b64": _encode_png_gray(saliency_map(det, bounds, cfg)),
        "saliency_source": "placeholder",
    }
