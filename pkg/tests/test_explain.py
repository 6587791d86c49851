import base64
import io

import numpy as np
import pytest
from PIL import Image

from navipath.explain import (
    confidence_label,
    explanation_card,
    cellular_rating,
    prolif_rating,
    saliency_map,
    verbal_dialog,
)
from navipath.recommend import Weights, generate_recommendations
from navipath.scoring import Detection
from navipath.slide import Rect


class TestDialog:
    def test_fig_example_average(self):
        d = verbal_dialog(cell_total=3600, prolif_max=0.9, mitosis_total=12, n_hpfs=36)
        assert d["avg_mitosis"] == 0.333
        assert d["prolif_rating"] == "very likely"
        assert d["cellular_rating"] == "cellular"
        assert d["n_hpfs"] == 36

    def test_zero_everything(self):
        d = verbal_dialog(0, 0.0, 0, 36)
        assert d == {
            "variant": "dialog",
            "cellular_rating": "sparse",
            "prolif_rating": "unlikely",
            "avg_mitosis": 0.0,
            "n_hpfs": 36,
        }

    def test_bin_edges(self):
        assert cellular_rating(49.9) == "sparse"
        assert cellular_rating(50.0) == "cellular"
        assert cellular_rating(150.0) == "cellular"
        assert cellular_rating(150.1) == "very cellular"
        assert prolif_rating(0.39) == "unlikely"
        assert prolif_rating(0.40) == "moderately likely"
        assert prolif_rating(0.769) == "moderately likely"
        assert prolif_rating(0.77) == "very likely"

    def test_label_monotonicity(self):
        order = ["sparse", "cellular", "very cellular"]
        ranks = [order.index(cellular_rating(v)) for v in np.linspace(0, 400, 200)]
        assert ranks == sorted(ranks)
        order_p = ["unlikely", "moderately likely", "very likely"]
        ranks_p = [order_p.index(prolif_rating(v)) for v in np.linspace(0, 1, 200)]
        assert ranks_p == sorted(ranks_p)

    def test_requires_hpfs(self):
        with pytest.raises(Exception):
            verbal_dialog(1, 0.5, 1, 0)


class TestCard:
    def test_confidence_bins(self):
        assert confidence_label(0.89) == "low confidence"
        assert confidence_label(0.97) == "moderately confident"
        assert confidence_label(0.99) == "highly confident"
        assert confidence_label(0.98) == "highly confident"

    def test_card_payload(self):
        det = Detection(x=500, y=400, prob=0.97)
        card = explanation_card(det)
        assert card["variant"] == "card"
        assert card["prob"] == 0.97
        assert card["confidence_label"] == "moderately confident"
        assert card["saliency_source"] == "placeholder"
        png = base64.b64decode(card["saliency_png_b64"])
        img = Image.open(io.BytesIO(png))
        assert img.size == (240, 240)

    def test_saliency_peak_at_detection(self):
        det = Detection(x=500, y=400, prob=0.97)
        bounds = Rect(380, 280, 240, 240)
        m = saliency_map(det, bounds)
        assert m.max() == 1.0
        py, px = np.unravel_index(np.argmax(m), m.shape)
        assert (bounds.x + px, bounds.y + py) == (det.x, det.y)

    def test_saliency_sum_invariant_unclamped(self):
        a = saliency_map(Detection(x=1000, y=1000, prob=0.9), Rect(880, 880, 240, 240))
        b = saliency_map(Detection(x=5000, y=777, prob=0.9), Rect(4880, 657, 240, 240))
        assert a.sum() == pytest.approx(b.sum(), rel=1e-12)

    def test_saliency_shifts_when_clamped(self):
        det = Detection(x=10, y=10, prob=0.9)
        m = saliency_map(det, Rect(0, 0, 240, 240))
        py, px = np.unravel_index(np.argmax(m), m.shape)
        assert (px, py) == (10, 10)


class TestDialogRankingConsistency:
    def test_index_one_has_max_avg_mitosis(self, hotspot):
        recs = generate_recommendations(
            hotspot["grid"], hotspot["meta"], Weights(w_cell=0, w_prolif=0, w_mitosis=1)
        )
        for loc in recs.locals_:
            if not loc.children:
                continue
            top = min(loc.children, key=lambda h: h.index)
            best = max(h.explanation["avg_mitosis"] for h in loc.children)
            assert top.explanation["avg_mitosis"] == best
