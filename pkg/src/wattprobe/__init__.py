"""Baseline fixed-workload CPU power profiles and flag anomalous runs.

The pipeline: ingest a power recording, resample it onto a uniform grid,
cut it into task segments delimited by full-load stress markers, turn each
segment into statistical and symbolic time-series features, and classify
runs with a one-class z-score voting ensemble (optionally kernel SVMs).
"""

__version__ = "0.1.0"

from wattprobe.detect import Metrics, VoteEnsembleDetector
from wattprobe.features import (
    FeatureConfig,
    FeatureVector,
    extract_features,
    learn_task_models,
    moments,
    perm_entropy,
)
from wattprobe.pipeline import (
    ModelBundle,
    PipelineConfig,
    detect_runs,
    evaluate_corpus,
    train_models,
)
from wattprobe.smash import SmashConfig, dsd_distance
from wattprobe.svm import SmoSVC
from wattprobe.symbolize import ShapeSymbolizer, SymbolStream, gap_statistic, kmeans
from wattprobe.synth import generate_corpus, generate_run
from wattprobe.trace import (
    MarkerConfig,
    PowerTrace,
    RawRecording,
    RunManifest,
    TaskSegment,
    UniformProfile,
    compute_power,
    detect_markers,
    load_power_trace,
    resample_uniform,
    segment_tasks,
)

__all__ = [
    "FeatureConfig",
    "FeatureVector",
    "MarkerConfig",
    "Metrics",
    "ModelBundle",
    "PipelineConfig",
    "PowerTrace",
    "RawRecording",
    "RunManifest",
    "ShapeSymbolizer",
    "SmashConfig",
    "SmoSVC",
    "SymbolStream",
    "TaskSegment",
    "UniformProfile",
    "VoteEnsembleDetector",
    "compute_power",
    "detect_markers",
    "detect_runs",
    "dsd_distance",
    "evaluate_corpus",
    "extract_features",
    "gap_statistic",
    "generate_corpus",
    "generate_run",
    "kmeans",
    "learn_task_models",
    "load_power_trace",
    "moments",
    "perm_entropy",
    "resample_uniform",
    "segment_tasks",
    "train_models",
    "__version__",
]
