"""Three-level recommendation hierarchy with customizable weighted ranking.

Local recommendations aggregate 6x6 blocks of HPF cells, HPF recommendations
rank the member cells of a Local, and Cell recommendations surface individual
above-threshold detections. Ranking is a weighted sum of min-max-normalized
criteria; the whole pipeline is a pure function of (ScoreGrid, Weights,
RecConfig), so identical inputs always serialize to identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import NotFoundError, ValidationError
from .explain import DEFAULT_EXPLAIN_CONFIG, ExplainConfig, explanation_card, verbal_dialog
from .scoring import Detection, GridIndex, ScoreGrid
from .slide import Rect, SlideMeta

FORMAT_VERSION = 1

LEVEL_LOCAL = "local"
LEVEL_HPF = "hpf"
LEVEL_CELL = "cell"

# The sensitivity slider value whose threshold is the documented default
# operating point tau = 0.85 (tau_max 0.95 - (2/9) * span 0.45).
DEFAULT_SENSITIVITY = 2.0 / 9.0


@dataclass(frozen=True)
class Weights:
    """User customization state; every component lives in [0, 1]."""

    w_cell: float = 1.0
    w_prolif: float = 1.0
    w_mitosis: float = 1.0
    sensitivity: float = DEFAULT_SENSITIVITY

    def __post_init__(self):
        for name in ("w_cell", "w_prolif", "w_mitosis", "sensitivity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name}={v} outside [0, 1]")
            object.__setattr__(self, name, float(v))

    def to_dict(self) -> dict:
        return {
            "w_cell": self.w_cell,
            "w_prolif": self.w_prolif,
            "w_mitosis": self.w_mitosis,
            "sensitivity": self.sensitivity,
        }


DEFAULT_WEIGHTS = Weights()


@dataclass(frozen=True)
class RecConfig:
    """Geometry and cutoffs of the recommendation hierarchy."""

    local_px: int = 10080
    hpf_px: int = 1680
    cell_px: int = 240
    max_local: int = 10
    hpf_score_quantile: float = 0.45
    tau_min: float = 0.50
    tau_max: float = 0.95
    tau_default: float = 0.85

    def __post_init__(self):
        if self.local_px != 6 * self.hpf_px:
            raise ValidationError(f"local_px must be 6*hpf_px, got {self.local_px}/{self.hpf_px}")
        if self.hpf_px != 7 * self.cell_px:
            raise ValidationError(f"hpf_px must be 7*cell_px, got {self.hpf_px}/{self.cell_px}")
        if not (self.tau_min < self.tau_default < self.tau_max):
            raise ValidationError("tau thresholds must satisfy tau_min < tau_default < tau_max")
        if self.max_local < 1:
            raise ValidationError("max_local must be >= 1")
        if not 0.0 <= self.hpf_score_quantile <= 1.0:
            raise ValidationError("hpf_score_quantile must be in [0, 1]")

    @property
    def hpfs_per_local(self) -> int:
        return 36

    @property
    def cells_per_hpf(self) -> int:
        return 49


DEFAULT_REC_CONFIG = RecConfig()


def sensitivity_to_threshold(s: float, cfg: RecConfig = DEFAULT_REC_CONFIG) -> float:
    """Map slider sensitivity to the detection threshold, strictly decreasing."""
    if not 0.0 <= s <= 1.0:
        raise ValidationError(f"sensitivity {s} outside [0, 1]")
    return cfg.tau_max - s * (cfg.tau_max - cfg.tau_min)


def normalize_criterion(values: list[float]) -> list[float]:
    """Min-max normalize to [0, 1]; a flat list maps to all zeros."""
    if not values:
        raise ValidationError("cannot normalize an empty list")
    lo = min(values)
    hi = max(values)
    if hi == lo:
        return [0.0] * len(values)
    span = hi - lo
    return [(v - lo) / span for v in values]


@dataclass
class Candidate:
    """One ranking candidate: a grid cell or an aggregated block.

    ``pos`` is the (row, col) position used for row-major tie breaking.
    The mitosis criterion is either an aggregated count (``mitosis``) or is
    derived from ``detections`` by thresholding at the current tau.
    """

    pos: tuple[int, int]
    cell: float = 0.0
    prolif: float = 0.0
    detections: list[Detection] | None = None
    mitosis: float | None = None

    def __post_init__(self):
        self._mit_at: dict[float, float] = {}

    def mitosis_value(self, tau: float) -> float:
        if self.mitosis is not None:
            return self.mitosis
        if self.detections is None:
            return 0.0
        cached = self._mit_at.get(tau)
        if cached is None:
            cached = float(sum(1 for d in self.detections if d.prob >= tau))
            self._mit_at[tau] = cached
        return cached


@dataclass(frozen=True)
class Ranked:
    candidate: Candidate
    index: int
    score: float


def rank(candidates: list[Candidate], weights: Weights, tau: float) -> list[Ranked]:
    """Order candidates by weighted normalized criteria, descending.

    score = w_cell * n_cell + w_prolif * n_prolif + w_mitosis * n_mitosis,
    where each n_* is the min-max normalization of that criterion over the
    candidate set and the mitosis criterion counts detections with
    prob >= tau. Ties break by row-major position; indices run 1..N.
    """
    if not candidates:
        raise ValidationError("candidates must be non-empty")
    n_cell = normalize_criterion([c.cell for c in candidates])
    n_prolif = normalize_criterion([c.prolif for c in candidates])
    n_mit = normalize_criterion([c.mitosis_value(tau) for c in candidates])
    wc, wp, wm = weights.w_cell, weights.w_prolif, weights.w_mitosis
    keyed = [
        (-(wc * n_cell[i] + wp * n_prolif[i] + wm * n_mit[i]), c.pos, i)
        for i, c in enumerate(candidates)
    ]
    keyed.sort()
    return [Ranked(candidates[i], k + 1, -neg) for k, (neg, _, i) in enumerate(keyed)]


def _quantile(values: list[float], q: float) -> float:
    """Linear-interpolation quantile, matching numpy's default method."""
    xs = sorted(values)
    if len(xs) == 1:
        return xs[0]
    pos = q * (len(xs) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(xs) - 1)
    frac = pos - lo
    return xs[lo] * (1.0 - frac) + xs[hi] * frac


def _effective_nonzero(candidate: Candidate, weights: Weights, tau: float) -> bool:
    """Whether the candidate survives the weight customization at all.

    A zero weight rules its criterion out, so only criteria with positive
    weight can keep a candidate alive; with all weights at zero the check
    falls back to any raw criterion being nonzero.
    """
    raws = (candidate.cell, candidate.prolif, candidate.mitosis_value(tau))
    ws = (weights.w_cell, weights.w_prolif, weights.w_mitosis)
    if any(w > 0 for w in ws):
        return sum(w * r for w, r in zip(ws, raws)) > 0
    return any(r > 0 for r in raws)


@dataclass
class Recommendation:
    """A ranked, indexed rectangle at one hierarchy level."""

    id: str
    level: str
    bounds: Rect
    index: int
    score: float
    explanation: dict
    parent_id: str | None = None
    member_cells: int = 0  # HPF slots of a Local; 0 elsewhere
    children: list["Recommendation"] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "index": self.index,
            "level": self.level,
            "bounds": self.bounds.to_dict(),
            "score": round(self.score, 6),
            "explanation": self.explanation,
        }
        if self.parent_id is not None:
            d["parent_id"] = self.parent_id
        if self.level == LEVEL_LOCAL:
            d["hpf_slots"] = self.member_cells
            d["hpfs"] = [h.to_dict() for h in self.children]
        elif self.level == LEVEL_HPF:
            d["cells"] = [c.to_dict() for c in self.children]
        return d


def _block_member_cells(
    grid: ScoreGrid, bcol: int, brow: int
) -> list[GridIndex]:
    out = []
    for row in range(brow * 6, min((brow + 1) * 6, grid.rows)):
        for col in range(bcol * 6, min((bcol + 1) * 6, grid.cols)):
            out.append(GridIndex(col, row))
    return out


def gen_local_recs(
    grid: ScoreGrid,
    meta: SlideMeta,
    weights: Weights,
    cfg: RecConfig = DEFAULT_REC_CONFIG,
    explain_cfg: ExplainConfig = DEFAULT_EXPLAIN_CONFIG,
) -> list[Recommendation]:
    """Rank non-overlapping 6x6-HPF blocks and emit the top ones.

    Block criteria: summed cell count, max proliferation, summed thresholded
    mitosis count. Blocks whose weighted criteria are all ruled out are
    dropped; at most ``max_local`` survive, reindexed 1..N.
    """
    tau = sensitivity_to_threshold(weights.sensitivity, cfg)
    bcols = -(-grid.cols // 6)
    brows = -(-grid.rows // 6)
    candidates = []
    extras = {}
    for brow in range(brows):
        for bcol in range(bcols):
            members = _block_member_cells(grid, bcol, brow)
            cells = [grid.cell(m) for m in members]
            cand = Candidate(
                pos=(brow, bcol),
                cell=float(sum(c.cell_count for c in cells)),
                prolif=max((c.prolif_prob for c in cells), default=0.0),
                mitosis=float(sum(c.mitosis_count(tau) for c in cells)),
            )
            candidates.append(cand)
            extras[(brow, bcol)] = len(members)
    ranked = rank(candidates, weights, tau)
    kept = [r for r in ranked if _effective_nonzero(r.candidate, weights, tau)]
    kept = kept[: cfg.max_local]
    out = []
    for new_index, r in enumerate(kept, start=1):
        brow, bcol = r.candidate.pos
        bounds = Rect(bcol * cfg.local_px, brow * cfg.local_px, cfg.local_px, cfg.local_px)
        bounds = bounds.clamped(meta.width0, meta.height0)
        n = extras[(brow, bcol)]
        out.append(
            Recommendation(
                id=f"local-{bcol}-{brow}",
                level=LEVEL_LOCAL,
                bounds=bounds,
                index=new_index,
                score=r.score,
                member_cells=n,
                explanation=verbal_dialog(
                    r.candidate.cell, r.candidate.prolif, r.candidate.mitosis, n, explain_cfg
                ),
            )
        )
    return out


def gen_hpf_recs(
    local: Recommendation,
    grid: ScoreGrid,
    meta: SlideMeta,
    weights: Weights,
    cfg: RecConfig = DEFAULT_REC_CONFIG,
    explain_cfg: ExplainConfig = DEFAULT_EXPLAIN_CONFIG,
) -> list[Recommendation]:
    """Rank the member cells of a Local block and emit the strong ones.

    A cell is emitted when its score reaches the block's score quantile, or
    unconditionally when it holds an above-threshold detection and the
    mitosis criterion is not ruled out; confirmed mitoses are never hidden
    behind the quantile cut.
    """
    tau = sensitivity_to_threshold(weights.sensitivity, cfg)
    bcol = local.bounds.x // cfg.local_px
    brow = local.bounds.y // cfg.local_px
    members = _block_member_cells(grid, bcol, brow)
    candidates = []
    for m in members:
        cs = grid.cell(m)
        candidates.append(
            Candidate(
                pos=(m.row, m.col),
                cell=float(cs.cell_count),
                prolif=cs.prolif_prob,
                detections=cs.detections,
            )
        )
    ranked = rank(candidates, weights, tau)
    q = _quantile([r.score for r in ranked], cfg.hpf_score_quantile)
    kept = []
    for r in ranked:
        mitotic = weights.w_mitosis > 0 and r.candidate.mitosis_value(tau) > 0
        passes = _effective_nonzero(r.candidate, weights, tau) and r.score >= q
        if passes or mitotic:
            kept.append(r)
    out = []
    for new_index, r in enumerate(kept, start=1):
        row, col = r.candidate.pos
        bounds = Rect(col * cfg.hpf_px, row * cfg.hpf_px, cfg.hpf_px, cfg.hpf_px)
        bounds = bounds.clamped(meta.width0, meta.height0)
        cs = grid.cell(GridIndex(col, row))
        out.append(
            Recommendation(
                id=f"hpf-{col}-{row}",
                level=LEVEL_HPF,
                bounds=bounds,
                index=new_index,
                score=r.score,
                parent_id=local.id,
                explanation=verbal_dialog(
                    float(cs.cell_count), cs.prolif_prob, float(cs.mitosis_count(tau)), 1, explain_cfg
                ),
            )
        )
    return out


def cell_bounds(det: Detection, meta: SlideMeta, cfg: RecConfig = DEFAULT_REC_CONFIG) -> Rect:
    """cell_px square centered on the detection, shifted to stay on the slide."""
    half = cfg.cell_px // 2
    x = min(max(det.x - half, 0), max(meta.width0 - cfg.cell_px, 0))
    y = min(max(det.y - half, 0), max(meta.height0 - cfg.cell_px, 0))
    return Rect(x, y, min(cfg.cell_px, meta.width0), min(cfg.cell_px, meta.height0))


def gen_cell_recs(
    hpf: Recommendation,
    grid: ScoreGrid,
    meta: SlideMeta,
    tau: float,
    cfg: RecConfig = DEFAULT_REC_CONFIG,
    explain_cfg: ExplainConfig = DEFAULT_EXPLAIN_CONFIG,
) -> list[Recommendation]:
    """One Cell recommendation per above-threshold detection in the HPF."""
    idx = GridIndex(hpf.bounds.x // cfg.hpf_px, hpf.bounds.y // cfg.hpf_px)
    dets = [d for d in grid.cell(idx).detections if d.prob >= tau]
    dets.sort(key=lambda d: (-d.prob, d.y, d.x))
    out = []
    for i, det in enumerate(dets, start=1):
        bounds = cell_bounds(det, meta, cfg)
        out.append(
            Recommendation(
                id=f"cell-{det.x}-{det.y}",
                level=LEVEL_CELL,
                bounds=bounds,
                index=i,
                score=det.prob,
                parent_id=hpf.id,
                explanation=explanation_card(det, bounds, explain_cfg),
            )
        )
    return out


@dataclass
class RecommendationSet:
    """The full hierarchy generated for one (grid, weights, config) input."""

    slide_id: str
    weights: Weights
    tau: float
    locals_: list[Recommendation]

    def __post_init__(self):
        self._by_id: dict[str, Recommendation] = {}
        for loc in self.locals_:
            self._by_id[loc.id] = loc
            for hpf in loc.children:
                self._by_id[hpf.id] = hpf
                for cell in hpf.children:
                    self._by_id[cell.id] = cell

    def find(self, rec_id: str) -> Recommendation:
        try:
            return self._by_id[rec_id]
        except KeyError:
            raise NotFoundError(f"recommendation {rec_id!r} not in the current set") from None

    def hpf_recs(self) -> list[Recommendation]:
        """All HPF recommendations, ordered by (local index, hpf index)."""
        out = []
        for loc in sorted(self.locals_, key=lambda r: r.index):
            out.extend(sorted(loc.children, key=lambda r: r.index))
        return out

    def cells_total(self) -> int:
        return sum(len(h.children) for h in self.hpf_recs())

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "slide_id": self.slide_id,
            "weights": self.weights.to_dict(),
            "tau": self.tau,
            "cells_total": self.cells_total(),
            "locals": [loc.to_dict() for loc in self.locals_],
        }

    def to_json_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), separators=(",", ":")).encode()


def generate_recommendations(
    grid: ScoreGrid,
    meta: SlideMeta,
    weights: Weights = DEFAULT_WEIGHTS,
    cfg: RecConfig = DEFAULT_REC_CONFIG,
    explain_cfg: ExplainConfig = DEFAULT_EXPLAIN_CONFIG,
) -> RecommendationSet:
    """Generate the full Local -> HPF -> Cell hierarchy in one pure pass."""
    if grid.hpf_px != cfg.hpf_px:
        raise ValidationError(
            f"grid was scored at hpf_px={grid.hpf_px}, config expects {cfg.hpf_px}"
        )
    tau = sensitivity_to_threshold(weights.sensitivity, cfg)
    locals_ = gen_local_recs(grid, meta, weights, cfg, explain_cfg)
    for loc in locals_:
        loc.children = gen_hpf_recs(loc, grid, meta, weights, cfg, explain_cfg)
        for hpf in loc.children:
            hpf.children = gen_cell_recs(hpf, grid, meta, tau, cfg, explain_cfg)
    return RecommendationSet(slide_id=meta.id, weights=weights, tau=tau, locals_=locals_)
