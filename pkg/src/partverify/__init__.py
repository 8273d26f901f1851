"""Evaluation toolkit for visual part verification.

Scores detector outputs against part annotations that carry presence-state
labels, combining present and missing recall into a recall-based F-beta
score, and ships a synthetic data lab plus context-manipulation experiments
to exercise every metric without trained detectors.
"""

from .geometry import ImageExtent, expand, iou, mirror_about_center, shrink
from .masking import (
    DEFAULT_CONTEXT_GRID,
    DEFAULT_FILL,
    ContextRunReport,
    MaskPlan,
    apply_plan,
    evaluate_context_run,
    plan_hide_bg,
    plan_hide_fg,
    plan_location_shift,
)
from .matching import ApFlags, MatchResult, greedy_ap_match, hit_test
from .metrics import (
    ApReport,
    LayoutStats,
    RecallCurve,
    UndefinedMetricError,
    VerificationReport,
    average_precision,
    ap_report,
    compute_fvv,
    layout_stats,
    recall,
    recall_curve,
    verify,
)
from .model import (
    Box,
    Dataset,
    Detection,
    EvalConfig,
    ImageInfo,
    PartAnnotation,
    PartState,
    Presence,
    ValidationError,
    group_state,
    load_dataset,
    load_detections,
    save_dataset,
    save_detections,
)
from .synth import (
    DetectorParams,
    LayoutSpec,
    PartLayout,
    default_layout,
    generate_dataset,
    run_noisy,
    run_oracle,
    run_prior,
)

__version__ = "0.1.0"

__all__ = [
    "ApFlags",
    "ApReport",
    "Box",
    "ContextRunReport",
    "DEFAULT_CONTEXT_GRID",
    "DEFAULT_FILL",
    "Dataset",
    "Detection",
    "DetectorParams",
    "EvalConfig",
    "ImageExtent",
    "ImageInfo",
    "LayoutSpec",
    "LayoutStats",
    "MaskPlan",
    "MatchResult",
    "PartAnnotation",
    "PartLayout",
    "PartState",
    "Presence",
    "RecallCurve",
    "UndefinedMetricError",
    "ValidationError",
    "VerificationReport",
    "ap_report",
    "apply_plan",
    "average_precision",
    "compute_fvv",
    "default_layout",
    "evaluate_context_run",
    "expand",
    "generate_dataset",
    "greedy_ap_match",
    "group_state",
    "hit_test",
    "iou",
    "layout_stats",
    "load_dataset",
    "load_detections",
    "mirror_about_center",
    "plan_hide_bg",
    "plan_hide_fg",
    "plan_location_shift",
    "recall",
    "recall_curve",
    "run_noisy",
    "run_oracle",
    "run_prior",
    "save_dataset",
    "save_detections",
    "shrink",
    "verify",
]
