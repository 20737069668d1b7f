"""End-to-end wiring: corpus -> segments -> models -> verdicts -> reports."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from wattprobe.detect import (
    Metrics,
    VoteEnsembleDetector,
    default_svm_grid,
    evaluate_ensemble,
    holdout_evaluate,
)
from wattprobe.features import (
    FeatureConfig,
    FeatureVector,
    TaskModels,
    extract_features,
    learn_task_models,
)
from wattprobe.synth import load_corpus_index
from wattprobe.trace import (
    DEFAULT_DT,
    DEFAULT_RAIL,
    MarkerConfig,
    detect_markers,
    load_power_trace,
    resample_uniform,
    segment_tasks,
)

SCHEMA_VERSION = "1"

DEFAULT_KERNELS = ("linear", "rbf_0.1", "rbf_0.01", "rbf_0.001", "poly_2", "poly_3")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the commands need, overridable from a config file."""

    dt: float = DEFAULT_DT
    rail: str = DEFAULT_RAIL
    marker: MarkerConfig = MarkerConfig()
    guard_seconds: float = 0.25
    features: FeatureConfig = FeatureConfig()
    feature_subset: str = "all"
    two_sided: bool = False
    training_clean_count: int = 10
    svm_kernels: tuple = DEFAULT_KERNELS
    svm_c: float = 1.0
    svm_tol: float = 1e-3
    seed: int = 8


def make_svm_grid(cfg: PipelineConfig):
    """Build the kernel grid named by the config."""
    all_kernels = default_svm_grid(C=cfg.svm_c, tol=cfg.svm_tol)
    grid = {}
    for name in cfg.svm_kernels:
        if name not in all_kernels:
            raise ValueError(
                f"unknown kernel {name!r}; expected one of {sorted(all_kernels)}"
            )
        grid[name] = all_kernels[name]
    return grid


def segment_run(manifest, corpus_dir, cfg: PipelineConfig):
    """Load, resample, and cut one run into its labeled task segments."""
    trace = load_power_trace(Path(corpus_dir) / manifest.trace_file, rail=cfg.rail)
    profile = resample_uniform(trace, dt=cfg.dt)
    markers = detect_markers(profile, cfg.marker)
    return segment_tasks(
        profile,
        markers,
        manifest.task_order,
        run_id=manifest.run_id,
        label=manifest.label,
        family=manifest.family,
        guard_seconds=cfg.guard_seconds,
    )


@dataclass
class ModelBundle:
    """Serialized training state: per-task models plus the fitted detector.

    The training runs' feature vectors ride along so the detector can be
    refitted under a different feature subset or vote rule at detect time.
    """

    task_order: tuple
    feature_config: FeatureConfig
    tasks: dict
    detector: VoteEnsembleDetector
    dt: float = DEFAULT_DT
    rail: str = DEFAULT_RAIL
    guard_seconds: float = 0.25
    marker: MarkerConfig = MarkerConfig()
    training_run_ids: tuple = ()
    training_vectors: tuple = ()
    schema_version: str = SCHEMA_VERSION

    def refit_detector(self, feature_subset=None, two_sided=None) -> VoteEnsembleDetector:
        """The fitted detector, or a refit under overridden vote settings."""
        subset = self.detector.feature_subset if feature_subset is None else feature_subset
        sided = self.detector.two_sided if two_sided is None else two_sided
        if subset == self.detector.feature_subset and sided == self.detector.two_sided:
            return self.detector
        if not self.training_vectors:
            raise ValueError(
                "bundle carries no training vectors; cannot override vote settings"
            )
        detector = VoteEnsembleDetector(feature_subset=subset, two_sided=sided)
        return detector.fit(list(self.training_vectors), pe_stats=self.pe_stats())

    def pe_stats(self):
        return {
            task: (models.permutation.entropy, models.permutation.information_std)
            for task, models in self.tasks.items()
        }

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            dt=self.dt,
            rail=self.rail,
            marker=self.marker,
            guard_seconds=self.guard_seconds,
            features=self.feature_config,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": self.schema_version,
                "dt": self.dt,
                "rail": self.rail,
                "guard_seconds": self.guard_seconds,
                "marker": {
                    "level_fraction": self.marker.level_fraction,
                    "min_duration": self.marker.min_duration,
                    "reference": self.marker.reference,
                    "quantile": self.marker.quantile,
                },
                "task_order": list(self.task_order),
                "feature_config": self.feature_config.to_dict(),
                "tasks": {task: models.to_dict() for task, models in self.tasks.items()},
                "detector": self.detector.get_state(),
                "training_run_ids": list(self.training_run_ids),
                "training_vectors": [fv.to_dict() for fv in self.training_vectors],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelBundle":
        raw = json.loads(text)
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(
                f"bundle schema {raw.get('schema_version')!r} does not match "
                f"supported version {SCHEMA_VERSION!r}"
            )
        return cls(
            task_order=tuple(raw["task_order"]),
            feature_config=FeatureConfig.from_dict(raw["feature_config"]),
            tasks={task: TaskModels.from_dict(m) for task, m in raw["tasks"].items()},
            detector=VoteEnsembleDetector.from_state(raw["detector"]),
            dt=raw["dt"],
            rail=raw["rail"],
            guard_seconds=raw["guard_seconds"],
            marker=MarkerConfig(**raw["marker"]),
            training_run_ids=tuple(raw["training_run_ids"]),
            training_vectors=tuple(
                FeatureVector.from_dict(v) for v in raw.get("training_vectors", [])
            ),
            schema_version=raw["schema_version"],
        )


def train_models(corpus_dir, cfg: PipelineConfig = PipelineConfig()) -> ModelBundle:
    """Learn per-task models and fit the ensemble on the clean training runs."""
    manifests = load_corpus_index(corpus_dir)
    clean = [m for m in manifests if m.label == "clean"]
    if len(clean) < cfg.training_clean_count:
        raise ValueError(
            f"need {cfg.training_clean_count} clean runs, corpus has {len(clean)}"
        )
    training = clean[: cfg.training_clean_count]
    task_order = training[0].task_order

    segments_by_run = {}
    failures = []
    for manifest in training:
        try:
            segments_by_run[manifest.run_id] = segment_run(manifest, corpus_dir, cfg)
        except ValueError as err:
            failures.append(f"{manifest.run_id}: {err}")
    if failures:
        raise ValueError("segmentation failed for:\n  " + "\n  ".join(failures))

    profiles_by_task = {task: [] for task in task_order}
    for run_id in (m.run_id for m in training):
        for segment in segments_by_run[run_id]:
            profiles_by_task[segment.task].append(segment.profile)
    missing = [task for task, profiles in profiles_by_task.items() if not profiles]
    if missing:
        raise ValueError(f"corpus has no segments for tasks: {missing}")

    task_models = {
        task: learn_task_models(task, profiles, cfg=cfg.features, seed=cfg.seed)
        for task, profiles in profiles_by_task.items()
    }

    vectors = [
        extract_features(segments_by_run[m.run_id], task_models, cfg.features)
        for m in training
    ]
    detector = VoteEnsembleDetector(
        feature_subset=cfg.feature_subset, two_sided=cfg.two_sided
    )
    pe_stats = {
        task: (models.permutation.entropy, models.permutation.information_std)
        for task, models in task_models.items()
    }
    detector.fit(vectors, pe_stats=pe_stats)

    return ModelBundle(
        task_order=task_order,
        feature_config=cfg.features,
        tasks=task_models,
        detector=detector,
        dt=cfg.dt,
        rail=cfg.rail,
        guard_seconds=cfg.guard_seconds,
        marker=cfg.marker,
        training_run_ids=tuple(m.run_id for m in training),
        training_vectors=tuple(vectors),
    )


def extract_run_features(manifest, corpus_dir, bundle: ModelBundle) -> FeatureVector:
    segments = segment_run(manifest, corpus_dir, bundle.pipeline_config())
    return extract_features(segments, bundle.tasks, bundle.feature_config)


@dataclass
class DetectionReport:
    """Per-run verdicts with full voting detail; JSON round-trips verdicts."""

    runs: list
    feature_subset: str
    two_sided: bool
    vote_mean: float
    vote_std: float
    schema_version: str = SCHEMA_VERSION

    @property
    def verdicts(self):
        return {run["run_id"]: run["verdict"] for run in self.runs}

    @property
    def any_infected(self):
        return any(run["verdict"] == "infected" for run in self.runs)

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": self.schema_version,
                "feature_subset": self.feature_subset,
                "two_sided": self.two_sided,
                "vote_mean": self.vote_mean,
                "vote_std": self.vote_std,
                "runs": self.runs,
            },
            sort_keys=True,
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "DetectionReport":
        raw = json.loads(text)
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(
                f"report schema {raw.get('schema_version')!r} does not match "
                f"supported version {SCHEMA_VERSION!r}"
            )
        return cls(
            runs=raw["runs"],
            feature_subset=raw["feature_subset"],
            two_sided=raw["two_sided"],
            vote_mean=raw["vote_mean"],
            vote_std=raw["vote_std"],
            schema_version=raw["schema_version"],
        )

    def zscore_csv(self) -> str:
        """Runs-by-features z-score table."""
        names = sorted({name for run in self.runs for name in run["z_scores"]})
        lines = ["run_id,label,verdict,total,z_votes," + ",".join(names)]
        for run in self.runs:
            z = run["z_scores"]
            cells = [
                run["run_id"],
                run.get("label") or "",
                run["verdict"],
                str(run["total"]),
                "" if run["z_votes"] is None else f"{run['z_votes']:.4f}",
            ]
            cells += ["" if name not in z else f"{z[name]:.4f}" for name in names]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def detect_runs(
    bundle: ModelBundle, manifests, corpus_dir, feature_subset=None, two_sided=None
) -> DetectionReport:
    """Score runs against a trained bundle.

    feature_subset / two_sided override the bundle's vote settings; the
    detector is refitted from the stored training vectors when they differ.
    """
    detector = bundle.refit_detector(feature_subset=feature_subset, two_sided=two_sided)
    runs = []
    for manifest in manifests:
        fv = extract_run_features(manifest, corpus_dir, bundle)
        record = detector.score_run(fv)
        entry = record.to_dict()
        entry["features"] = fv.flat()
        entry["feature_errors"] = fv.errors
        entry["in_training"] = manifest.run_id in bundle.training_run_ids
        runs.append(entry)
    return DetectionReport(
        runs=runs,
        feature_subset=detector.feature_subset
        if isinstance(detector.feature_subset, str)
        else ",".join(detector.feature_subset),
        two_sided=detector.two_sided,
        vote_mean=detector.vote_mean_,
        vote_std=detector.vote_std_,
    )


@dataclass
class EvaluationReport:
    ensemble: Metrics
    blind_tpr: float
    blind_fdr: float
    feature_metrics: dict
    task_metrics: dict
    svm_metrics: dict
    records: list = field(default_factory=list)
    schema_version: str = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": self.schema_version,
                "ensemble": self.ensemble.to_dict(),
                "blind_baseline": {"tpr": self.blind_tpr, "fdr": self.blind_fdr},
                "features": {k: m.to_dict() for k, m in self.feature_metrics.items()},
                "tasks": {k: m.to_dict() for k, m in self.task_metrics.items()},
                "svm": {k: m.to_dict() for k, m in self.svm_metrics.items()},
                "runs": self.records,
            },
            sort_keys=True,
            indent=2,
        )


def corpus_feature_vectors(corpus_dir, cfg: PipelineConfig = PipelineConfig()):
    """Train task models on the clean training split, then featurize all runs."""
    bundle = train_models(corpus_dir, cfg)
    manifests = load_corpus_index(corpus_dir)
    vectors = [extract_run_features(m, corpus_dir, bundle) for m in manifests]
    return bundle, manifests, vectors


def evaluate_corpus(
    corpus_dir, cfg: PipelineConfig = PipelineConfig(), with_svm: bool = True
) -> EvaluationReport:
    """Run both the one-class ensemble and the supervised harness on a corpus."""
    bundle, manifests, vectors = corpus_feature_vectors(corpus_dir, cfg)
    result = evaluate_ensemble(
        vectors,
        pe_stats=bundle.pe_stats(),
        training_clean_count=cfg.training_clean_count,
        feature_subset=cfg.feature_subset,
        two_sided=cfg.two_sided,
    )
    svm_metrics = {}
    if with_svm:
        svm_metrics = holdout_evaluate(vectors, classifiers=make_svm_grid(cfg))
    return EvaluationReport(
        ensemble=result.metrics,
        blind_tpr=result.blind_tpr,
        blind_fdr=result.blind_fdr,
        feature_metrics=result.feature_metrics,
        task_metrics=result.task_metrics,
        svm_metrics=svm_metrics,
        records=[r.to_dict() for r in result.records],
    )


def write_atomic(path, text: str):
    """Write via a temp file and rename so readers never see partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
