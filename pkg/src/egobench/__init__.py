"""egobench: benchmark toolkit for egocentric fine-grained object detection.

Provides the annotation data model and validators, capture-condition
rules, multi-annotator consensus, train/target/val/test split building,
federated category- and instance-level detection metrics (including
continual-learning experience metrics), numerical kernels for a
target-aware instance-detection head, and an embedding-index baseline
matcher.
"""

from egobench._core import BACKEND
from egobench.errors import (
    EgobenchError,
    EmbeddingError,
    EvalError,
    IntegrityError,
    ParseError,
    SplitError,
    StreamError,
)
from egobench.geometry import Box, giou, greedy_match, iou
from egobench.schema import (
    BoxAnnotation,
    Category,
    Dataset,
    ImageRecord,
    Prediction,
    VideoMeta,
    load_dataset,
    load_predictions,
    save_dataset,
    subset_images,
    validate,
)
from egobench.conditions import (
    CaptureConfig,
    canonical_configs,
    check_video_coverage,
    classify_distance,
    classify_lighting,
)
from egobench.consensus import (
    AnnotatorSet,
    consensus_scores,
    pairwise_agreement,
    select_source_of_truth,
)
from egobench.evaluation import (
    CLReport,
    EvalConfig,
    EvalReport,
    Experience,
    ExperienceStream,
    cl_evaluate,
    experience_average_precision,
    federated_ap_category,
    instance_ap,
    serialize_report,
)
from egobench.instindex import EmbeddingIndex
from egobench.splits import SplitSpec, build_splits, load_splits, save_splits, verify_splits
from egobench.stats import StatsReport, compute_stats, relative_size

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AnnotatorSet",
    "Box",
    "BoxAnnotation",
    "CLReport",
    "CaptureConfig",
    "Category",
    "Dataset",
    "EgobenchError",
    "EmbeddingError",
    "EmbeddingIndex",
    "EvalConfig",
    "EvalError",
    "EvalReport",
    "Experience",
    "ExperienceStream",
    "ImageRecord",
    "IntegrityError",
    "ParseError",
    "Prediction",
    "SplitError",
    "SplitSpec",
    "StatsReport",
    "StreamError",
    "VideoMeta",
    "build_splits",
    "canonical_configs",
    "check_video_coverage",
    "cl_evaluate",
    "classify_distance",
    "classify_lighting",
    "compute_stats",
    "consensus_scores",
    "experience_average_precision",
    "federated_ap_category",
    "giou",
    "greedy_match",
    "instance_ap",
    "iou",
    "load_dataset",
    "load_predictions",
    "load_splits",
    "pairwise_agreement",
    "relative_size",
    "save_dataset",
    "save_splits",
    "select_source_of_truth",
    "serialize_report",
    "subset_images",
    "validate",
    "verify_splits",
]
