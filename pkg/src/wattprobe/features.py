"""Per-task features: moments, baseline distance, permutation entropy,
and the two annihilation distances.

Training profiles for a task yield a feature model (canonical baseline,
permutation distribution, shape codebook, reference streams); each task
segment of a run is then reduced to a small feature map, and the per-task
maps together form the run's feature vector.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from wattprobe.smash import SmashConfig, dsd_distance
from wattprobe.symbolize import (
    ShapeBook,
    SymbolStream,
    binarize,
    concat_repeat,
    gap_statistic,
    kmeans,
    learn_shapes,
    pooled_threshold,
    shape_encode,
)
from wattprobe.trace import TaskSegment, UniformProfile

MOMENT_FEATURES = ("mean", "variance", "skewness", "kurtosis")
RECOMMENDED_FEATURES = MOMENT_FEATURES + ("l2",)
ALL_FEATURES = RECOMMENDED_FEATURES + ("perm_entropy", "dsd_data", "dsd_shape")

PE_ESTIMATORS = ("mean_self_information", "weighted_self_information")


class ConstantInputError(ValueError):
    """Skewness and kurtosis are undefined on zero-variance input."""


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    skewness: float
    kurtosis: float


def moments(p: UniformProfile) -> Moments:
    """First four moments with population (1/N) normalization.

    Kurtosis is excess kurtosis (3 subtracted), so normally distributed
    data score 0.
    """
    x = p.values
    mu = float(x.mean())
    centered = x - mu
    var = float(np.mean(centered**2))
    if var == 0.0:
        raise ConstantInputError(
            "constant input: skewness and kurtosis are undefined at zero variance"
        )
    sigma = math.sqrt(var)
    skew = float(np.mean(centered**3)) / sigma**3
    kurt = float(np.mean(centered**4)) / sigma**4 - 3.0
    return Moments(mean=mu, variance=var, skewness=skew, kurtosis=kurt)


@dataclass(frozen=True)
class BaselineProfile:
    """Canonical per-task profile: the training-cluster centroid."""

    task: str
    dt: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self):
        return self.values.size

    def to_dict(self):
        return {"task": self.task, "dt": self.dt, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, raw):
        return cls(task=raw["task"], dt=raw["dt"], values=np.asarray(raw["values"]))


def learn_baseline(
    training: list, task: str, seed: int = 0, k_max: int = 8, gap_b: int = 20
) -> BaselineProfile:
    """Cluster equal-length training profiles and keep a single centroid.

    The gap statistic picks the cluster count; consistent training data
    gives one cluster whose centroid is the pointwise mean. More than one
    cluster is a sanity-check failure: a warning is emitted and the largest
    cluster's centroid is used.
    """
    if not training:
        raise ValueError("no training profiles")
    dt = training[0].dt
    if any(abs(p.dt - dt) > 1e-12 for p in training):
        raise ValueError("training profiles disagree on dt")
    shortest = min(len(p) for p in training)
    X = np.vstack([p.values[:shortest] for p in training])
    k_max = min(k_max, len(training))
    k = gap_statistic(X, k_max=k_max, B=gap_b, seed=seed) if len(training) > 1 else 1
    if k == 1:
        centroid = X.mean(axis=0)
    else:
        warnings.warn(
            f"training profiles for task {task!r} split into {k} clusters; "
            "using the largest cluster's centroid",
            stacklevel=2,
        )
        result = kmeans(X, k, seed=seed)
        largest = int(np.bincount(result.assignments).argmax())
        centroid = result.centroids[largest]
    return BaselineProfile(task=task, dt=dt, values=centroid)


def l2_distance(p: UniformProfile, base: BaselineProfile) -> float:
    """Integral-style distance: sqrt(dt * sum of squared gaps).

    Profiles are truncated to the shorter length; a run a constant 1 W away
    from its baseline over 1 s scores 1.0 regardless of dt.
    """
    if abs(p.dt - base.dt) > 1e-12:
        raise ValueError(f"dt mismatch: profile {p.dt} vs baseline {base.dt}")
    n = min(len(p), len(base))
    gap = p.values[:n] - base.values[:n]
    return float(np.sqrt(p.dt * np.sum(gap * gap)))


def window_permutation(window) -> tuple:
    """Sort permutation of a window: indices of values in ascending order.

    Stable, so equal values keep their original left-to-right order.
    """
    return tuple(int(j) for j in np.argsort(np.asarray(window), kind="stable"))


def _window_codes(values, m, stride):
    """Base-m integer code of each window's sort permutation."""
    if len(values) < m:
        return np.empty(0, dtype=np.int64)
    windows = np.lib.stride_tricks.sliding_window_view(values, m)[::stride]
    perms = np.argsort(windows, axis=1, kind="stable")
    weights = m ** np.arange(m - 1, -1, -1, dtype=np.int64)
    return perms @ weights


def _code_to_perm(code, m):
    digits = []
    for _ in range(m):
        digits.append(code % m)
        code //= m
    return tuple(reversed(digits))


@dataclass(frozen=True)
class PermutationModel:
    """Smoothed distribution over the m! window sort permutations.

    Each permutation's probability is (count + 1) / (total + m!), so
    patterns never seen in training keep a positive floor. The analytic
    entropy and information spread are over the full m!-point distribution.
    """

    m: int
    counts: dict
    total: int

    def __post_init__(self):
        if not 2 <= self.m <= 8:
            raise ValueError("window length m must be between 2 and 8")
        if self.total != sum(self.counts.values()):
            raise ValueError("total does not match counts")
        dense = np.zeros(self.m**self.m, dtype=np.int64)
        weights = self.m ** np.arange(self.m - 1, -1, -1, dtype=np.int64)
        for perm, count in self.counts.items():
            dense[np.dot(np.asarray(perm, dtype=np.int64), weights)] = count
        object.__setattr__(self, "_dense_counts", dense)
        n_perms = math.factorial(self.m)
        denom = self.total + n_perms
        observed = np.asarray(sorted(self.counts.values()), dtype=float)
        probs = (observed + 1.0) / denom
        info = -np.log(probs)
        floor_p = 1.0 / denom
        floor_info = -math.log(floor_p)
        n_unseen = n_perms - len(self.counts)
        entropy = float(np.sum(probs * info) + n_unseen * floor_p * floor_info)
        second = float(np.sum(probs * info**2) + n_unseen * floor_p * floor_info**2)
        object.__setattr__(self, "entropy", entropy)
        object.__setattr__(self, "information_std", math.sqrt(max(second - entropy**2, 0.0)))

    @property
    def stride(self):
        return max(self.m // 2, 1)

    def probability(self, perm) -> float:
        count = self.counts.get(tuple(perm), 0)
        return (count + 1.0) / (self.total + math.factorial(self.m))

    def self_information(self, codes) -> np.ndarray:
        counts = self._dense_counts[codes]
        return np.log(self.total + math.factorial(self.m)) - np.log1p(counts)

    def to_dict(self):
        return {
            "m": self.m,
            "total": self.total,
            "counts": {"".join(map(str, perm)): int(c) for perm, c in self.counts.items()},
        }

    @classmethod
    def from_dict(cls, raw):
        counts = {
            tuple(int(ch) for ch in key): int(c) for key, c in raw["counts"].items()
        }
        return cls(m=raw["m"], counts=counts, total=raw["total"])


def learn_permutation_model(training: list, m: int = 6) -> PermutationModel:
    """Count window sort permutations across training profiles (stride m/2)."""
    if m < 2 or m % 2:
        raise ValueError("window length m must be even and at least 2")
    stride = m // 2
    tallies = {}
    total = 0
    for p in training:
        codes = _window_codes(p.values, m, stride)
        for code, count in zip(*np.unique(codes, return_counts=True)):
            perm = _code_to_perm(int(code), m)
            tallies[perm] = tallies.get(perm, 0) + int(count)
            total += int(count)
    if total == 0:
        raise ValueError("no permutation windows in training profiles")
    model = PermutationModel(m=m, counts=tallies, total=total)
    if model.information_std == 0.0:
        raise ValueError(
            "degenerate permutation model: every permutation is equally likely"
        )
    return model


def perm_entropy(
    p: UniformProfile, model: PermutationModel, estimator: str = "mean_self_information"
) -> float:
    """Average rarity of a profile's window permutations under the model.

    The default is the mean self-information, whose expectation under the
    model equals the model's analytic entropy. The probability-weighted
    variant down-weights rare patterns and is kept for comparison only.
    """
    if estimator not in PE_ESTIMATORS:
        raise ValueError(f"estimator must be one of {PE_ESTIMATORS}")
    codes = _window_codes(p.values, model.m, model.stride)
    if codes.size == 0:
        raise ValueError(f"profile shorter than one window of length {model.m}")
    info = model.self_information(codes)
    if estimator == "weighted_self_information":
        info = info * np.exp(-info)
    return float(info.mean())


@dataclass(frozen=True)
class FeatureConfig:
    """Feature-extraction knobs shared across the pipeline."""

    pe_window: int = 6
    pe_estimator: str = "mean_self_information"
    word_length_max: int = 3
    annihilation_epsilon: float = 0.05
    repeats: int = 100
    shape_k: int = 4
    shape_window_seconds: float = 3.0
    shape_overlap_seconds: float = 1.5
    shape_skip_tasks: tuple = ("idle",)

    def smash_config(self) -> SmashConfig:
        return SmashConfig(
            word_length_max=self.word_length_max,
            annihilation_epsilon=self.annihilation_epsilon,
        )

    def skips_shapes(self, task: str) -> bool:
        return task.lower() in tuple(t.lower() for t in self.shape_skip_tasks)

    def to_dict(self):
        return {
            "pe_window": self.pe_window,
            "pe_estimator": self.pe_estimator,
            "word_length_max": self.word_length_max,
            "annihilation_epsilon": self.annihilation_epsilon,
            "repeats": self.repeats,
            "shape_k": self.shape_k,
            "shape_window_seconds": self.shape_window_seconds,
            "shape_overlap_seconds": self.shape_overlap_seconds,
            "shape_skip_tasks": list(self.shape_skip_tasks),
        }

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        raw["shape_skip_tasks"] = tuple(raw.get("shape_skip_tasks", ("idle",)))
        return cls(**raw)


@dataclass(frozen=True)
class TaskModels:
    """Everything learned from one task's clean training profiles."""

    task: str
    baseline: BaselineProfile
    permutation: PermutationModel
    shapes: ShapeBook | None
    reference_values: np.ndarray
    reference_shape_stream: SymbolStream | None

    def __post_init__(self):
        object.__setattr__(
            self, "reference_values", np.asarray(self.reference_values, dtype=float)
        )

    def to_dict(self):
        return {
            "task": self.task,
            "baseline": self.baseline.to_dict(),
            "permutation": self.permutation.to_dict(),
            "shapes": self.shapes.to_dict() if self.shapes else None,
            "reference_values": self.reference_values.tolist(),
            "reference_shape_stream": (
                self.reference_shape_stream.to_string()
                if self.reference_shape_stream
                else None
            ),
        }

    @classmethod
    def from_dict(cls, raw):
        shapes = ShapeBook.from_dict(raw["shapes"]) if raw["shapes"] else None
        ref_stream = None
        if raw["reference_shape_stream"] is not None:
            ref_stream = SymbolStream.from_string(raw["reference_shape_stream"], shapes.k)
        return cls(
            task=raw["task"],
            baseline=BaselineProfile.from_dict(raw["baseline"]),
            permutation=PermutationModel.from_dict(raw["permutation"]),
            shapes=shapes,
            reference_values=np.asarray(raw["reference_values"]),
            reference_shape_stream=ref_stream,
        )


def learn_task_models(
    task: str, training: list, cfg: FeatureConfig = FeatureConfig(), seed: int = 0
) -> TaskModels:
    """Fit the baseline, permutation model, and shape codebook for one task."""
    baseline = learn_baseline(training, task, seed=seed)
    permutation = learn_permutation_model(training, m=cfg.pe_window)
    shapes = None
    reference_shape_stream = None
    if not cfg.skips_shapes(task):
        shapes = learn_shapes(
            training,
            k=cfg.shape_k,
            seed=seed,
            window_seconds=cfg.shape_window_seconds,
            overlap_seconds=cfg.shape_overlap_seconds,
        )
        encoded = [shape_encode(p, shapes) for p in training]
        reference_shape_stream = SymbolStream(
            alphabet_size=shapes.k,
            symbols=np.concatenate([s.symbols for s in encoded]),
        )
    reference_values = np.concatenate([p.values for p in training])
    return TaskModels(
        task=task,
        baseline=baseline,
        permutation=permutation,
        shapes=shapes,
        reference_values=reference_values,
        reference_shape_stream=reference_shape_stream,
    )


@dataclass
class FeatureVector:
    """Per-run feature values keyed by task, with per-feature error notes."""

    run_id: str
    label: str | None = None
    family: str | None = None
    tasks: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def flat(self) -> dict:
        return {
            f"{task}:{name}": value
            for task, values in self.tasks.items()
            for name, value in values.items()
        }

    def to_dict(self):
        return {
            "run_id": self.run_id,
            "label": self.label,
            "family": self.family,
            "tasks": self.tasks,
            "errors": self.errors,
        }

    @classmethod
    def from_dict(cls, raw):
        return cls(
            run_id=raw["run_id"],
            label=raw.get("label"),
            family=raw.get("family"),
            tasks={t: dict(v) for t, v in raw["tasks"].items()},
            errors={t: dict(v) for t, v in raw.get("errors", {}).items()},
        )


def _dsd_data_feature(profile, models, cfg):
    reference = UniformProfile(dt=profile.dt, values=models.reference_values)
    threshold = pooled_threshold(profile, reference)
    test_stream = concat_repeat(binarize(profile, threshold), cfg.repeats)
    ref_stream = concat_repeat(binarize(reference, threshold), cfg.repeats)
    return dsd_distance(test_stream, ref_stream, cfg.smash_config())


def _dsd_shape_feature(profile, models, cfg):
    test_stream = concat_repeat(shape_encode(profile, models.shapes), cfg.repeats)
    ref_stream = concat_repeat(models.reference_shape_stream, cfg.repeats)
    return dsd_distance(test_stream, ref_stream, cfg.smash_config())


def extract_features(
    segments: list, models: dict, cfg: FeatureConfig = FeatureConfig()
) -> FeatureVector:
    """Reduce one run's task segments to its feature vector.

    Insufficient annihilation distances are recorded as absent (with a note
    in `errors`) rather than fabricated; a constant segment loses only its
    skewness/kurtosis entries. Shape distances are never computed for tasks
    in cfg.shape_skip_tasks.
    """
    if not segments:
        raise ValueError("run has no segments")
    fv = FeatureVector(
        run_id=segments[0].run_id,
        label=segments[0].label,
        family=segments[0].family,
    )
    for seg in segments:
        if seg.task not in models:
            raise ValueError(f"no models for task {seg.task!r}")
        task_models = models[seg.task]
        values = {}
        errors = {}
        profile = seg.profile
        try:
            m = moments(profile)
            values.update(
                mean=m.mean, variance=m.variance, skewness=m.skewness, kurtosis=m.kurtosis
            )
        except ConstantInputError as err:
            values["mean"] = float(profile.values.mean())
            values["variance"] = 0.0
            errors["skewness"] = str(err)
            errors["kurtosis"] = str(err)
        values["l2"] = l2_distance(profile, task_models.baseline)
        values["perm_entropy"] = perm_entropy(
            profile, task_models.permutation, estimator=cfg.pe_estimator
        )
        outcome = _dsd_data_feature(profile, task_models, cfg)
        if outcome.insufficient:
            errors["dsd_data"] = "insufficient stream"
        else:
            values["dsd_data"] = outcome.distance
        if not cfg.skips_shapes(seg.task):
            outcome = _dsd_shape_feature(profile, task_models, cfg)
            if outcome.insufficient:
                errors["dsd_shape"] = "insufficient stream"
            else:
                values["dsd_shape"] = outcome.distance
        fv.tasks[seg.task] = values
        if errors:
            fv.errors[seg.task] = errors
    return fv
