"""NaviPath: hierarchical slide navigation engine and evaluation harness."""

__version__ = "0.1.0"

from .errors import (
    NaviPathError,
    NotFoundError,
    StorageError,
    TimeRegressionError,
    ValidationError,
)
from .slide import GroundTruth, Rect, SlideMeta, SlideStore, area_mm2
from .synth import SyntheticSpec, generate_synthetic
from .scoring import Detection, GridIndex, ScoreGrid, score_slide
from .recommend import (
    RecConfig,
    Recommendation,
    RecommendationSet,
    Weights,
    generate_recommendations,
)
from .navigate import Cue, NavEvent, Trace, Viewport
from .evaluate import Report, TrialMetrics, match_reports, trial_metrics, visited_region
from .agents import Agent, AgentRun, run_agent

__all__ = [
    "Agent",
    "AgentRun",
    "Cue",
    "Detection",
    "GridIndex",
    "GroundTruth",
    "NavEvent",
    "NaviPathError",
    "NotFoundError",
    "RecConfig",
    "Recommendation",
    "RecommendationSet",
    "Rect",
    "Report",
    "ScoreGrid",
    "SlideMeta",
    "SlideStore",
    "StorageError",
    "SyntheticSpec",
    "TimeRegressionError",
    "Trace",
    "TrialMetrics",
    "ValidationError",
    "Viewport",
    "Weights",
    "area_mm2",
    "generate_recommendations",
    "generate_synthetic",
    "match_reports",
    "run_agent",
    "score_slide",
    "trial_metrics",
    "visited_region",
]
