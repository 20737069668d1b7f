"""One-class z-score voting ensemble and the supervised evaluation harness.

Every feature is its own weak detector: it votes when a run's value sits at
least one training standard deviation from the training mean. The vote
total is then itself z-scored against the training runs' totals, so a run
is flagged only when unusually many weak detectors fire at once.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from wattprobe.features import RECOMMENDED_FEATURES, FeatureVector
from wattprobe.svm import SmoSVC
from wattprobe.validation import check_fitted

Z_VOTE_THRESHOLD = 1.0


@dataclass(frozen=True)
class FeatureStat:
    """Training mean/std for one feature, and whether it may vote."""

    mean: float
    std: float
    source: str = "empirical"  # or "analytic_pe"
    usable: bool = True

    def to_dict(self):
        return {"mean": self.mean, "std": self.std, "source": self.source, "usable": self.usable}

    @classmethod
    def from_dict(cls, raw):
        return cls(**raw)


@dataclass
class VoteRecord:
    """Per-run voting breakdown."""

    run_id: str
    label: str | None
    z_scores: dict
    votes: dict
    task_totals: dict
    total: int
    max_votes: int
    z_votes: float | None = None
    verdict: str | None = None

    def to_dict(self):
        return {
            "run_id": self.run_id,
            "label": self.label,
            "z_scores": self.z_scores,
            "votes": self.votes,
            "task_totals": self.task_totals,
            "total": self.total,
            "max_votes": self.max_votes,
            "z_votes": self.z_votes,
            "verdict": self.verdict,
        }


@dataclass(frozen=True)
class Metrics:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def tpr(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 0.0

    @property
    def fdr(self) -> float:
        denom = self.tp + self.fp
        return self.fp / denom if denom else 0.0

    def __add__(self, other):
        return Metrics(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )

    def to_dict(self):
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "tpr": self.tpr, "fdr": self.fdr,
        }


def metrics_from_predictions(y_true, y_pred) -> Metrics:
    """Confusion counts; positives are infected runs."""
    tp = fp = tn = fn = 0
    for truth, pred in zip(y_true, y_pred):
        if truth and pred:
            tp += 1
        elif truth and not pred:
            fn += 1
        elif not truth and pred:
            fp += 1
        else:
            tn += 1
    return Metrics(tp=tp, fp=fp, tn=tn, fn=fn)


def resolve_subset(feature_subset, feature_names):
    """Expand a subset preset into concrete feature keys.

    'all' keeps everything seen in training; 'recommended' keeps the four
    moments plus the baseline distance for each task.
    """
    if feature_subset == "all":
        return sorted(feature_names)
    if feature_subset == "recommended":
        return sorted(
            name
            for name in feature_names
            if name.split(":", 1)[1] in RECOMMENDED_FEATURES
        )
    chosen = set(feature_subset)
    unknown = chosen - set(feature_names)
    if unknown:
        raise ValueError(f"unknown features in subset: {sorted(unknown)}")
    return sorted(chosen)


class VoteEnsembleDetector(BaseEstimator):
    """One-class ensemble: fit on clean runs only, flag outvoted runs.

    Parameters
    ----------
    feature_subset : 'all', 'recommended', or an explicit list of
        '<task>:<feature>' keys.
    two_sided : when False (default) a run must collect *more* votes than
        the training mean to be flagged; unusually quiet runs stay clean.
        True reproduces the plain |z| rule.
    """

    def __init__(self, feature_subset="all", two_sided=False):
        self.feature_subset = feature_subset
        self.two_sided = two_sided

    def fit(self, X, y=None, pe_stats=None):
        """Fit on clean training runs.

        X is a list of FeatureVector. pe_stats maps task name to the
        analytic (entropy, information std) pair of that task's permutation
        model; those replace the empirical mean/std for perm_entropy
        features.
        """
        vectors = list(X)
        if len(vectors) < 2:
            raise ValueError("need at least two training runs")
        if any(fv.label not in (None, "clean") for fv in vectors):
            raise ValueError("ensemble training runs must all be clean")
        seen = sorted({name for fv in vectors for name in fv.flat()})
        self.feature_names_ = resolve_subset(self.feature_subset, seen)
        if not self.feature_names_:
            raise ValueError("feature subset resolved to nothing")
        pe_stats = pe_stats or {}
        stats = {}
        for name in self.feature_names_:
            task, feat = name.split(":", 1)
            values = np.array([fv.flat()[name] for fv in vectors if name in fv.flat()])
            if feat == "perm_entropy" and task in pe_stats:
                mean, std = pe_stats[task]
                stats[name] = FeatureStat(mean=float(mean), std=float(std), source="analytic_pe")
                continue
            if values.size < 2 or np.all(values == values[0]):
                warnings.warn(
                    f"feature {name!r} has no spread in training; it will never vote",
                    stacklevel=2,
                )
                mean = float(values.mean()) if values.size else 0.0
                stats[name] = FeatureStat(mean=mean, std=0.0, usable=False)
                continue
            stats[name] = FeatureStat(mean=float(values.mean()), std=float(values.std()))
        self.stats_ = stats

        totals = []
        self.training_records_ = []
        for fv in vectors:
            record = self.vote(fv)
            totals.append(record.total)
            self.training_records_.append(record)
        totals = np.array(totals, dtype=float)
        self.vote_mean_ = float(totals.mean())
        self.vote_std_ = float(totals.std())
        if self.vote_std_ == 0.0:
            warnings.warn(
                "training vote totals are identical; falling back to the "
                "votes-above-mean rule",
                stacklevel=2,
            )
        task_totals = {}
        for record in self.training_records_:
            for task, count in record.task_totals.items():
                task_totals.setdefault(task, []).append(count)
        self.task_vote_stats_ = {
            task: (float(np.mean(counts)), float(np.std(counts)))
            for task, counts in task_totals.items()
        }
        for record in self.training_records_:
            self.classify(record)
        return self

    @property
    def vote_threshold_(self):
        check_fitted(self, "stats_")
        return self.vote_mean_ + self.vote_std_

    def vote(self, fv: FeatureVector) -> VoteRecord:
        """Score one run: per-feature z-scores and votes, per-task tallies."""
        check_fitted(self, "stats_")
        flat = fv.flat()
        z_scores = {}
        votes = {}
        task_totals = {}
        max_votes = 0
        for name in self.feature_names_:
            stat = self.stats_[name]
            task = name.split(":", 1)[0]
            task_totals.setdefault(task, 0)
            if not stat.usable or name not in flat:
                continue
            max_votes += 1
            z = abs(flat[name] - stat.mean) / stat.std
            z_scores[name] = z
            if z >= Z_VOTE_THRESHOLD:
                votes[name] = True
                task_totals[task] += 1
        return VoteRecord(
            run_id=fv.run_id,
            label=fv.label,
            z_scores=z_scores,
            votes=votes,
            task_totals=task_totals,
            total=sum(task_totals.values()),
            max_votes=max_votes,
        )

    def classify(self, record: VoteRecord) -> VoteRecord:
        """Fill in the run-level z-score and verdict."""
        check_fitted(self, "stats_")
        above = record.total > self.vote_mean_
        if self.vote_std_ == 0.0:
            record.z_votes = None
            infected = above if not self.two_sided else record.total != self.vote_mean_
        else:
            record.z_votes = abs(record.total - self.vote_mean_) / self.vote_std_
            fired = record.z_votes >= Z_VOTE_THRESHOLD
            infected = fired if self.two_sided else (fired and above)
        record.verdict = "infected" if infected else "clean"
        return record

    def score_run(self, fv: FeatureVector) -> VoteRecord:
        return self.classify(self.vote(fv))

    def predict(self, X):
        """1 for infected, 0 for clean, per run."""
        return np.array(
            [1 if self.score_run(fv).verdict == "infected" else 0 for fv in X]
        )

    def get_state(self):
        check_fitted(self, "stats_")
        return {
            "feature_subset": self.feature_subset if isinstance(self.feature_subset, str)
            else list(self.feature_subset),
            "two_sided": self.two_sided,
            "feature_names": list(self.feature_names_),
            "stats": {name: stat.to_dict() for name, stat in self.stats_.items()},
            "vote_mean": self.vote_mean_,
            "vote_std": self.vote_std_,
            "task_vote_stats": {t: list(v) for t, v in self.task_vote_stats_.items()},
        }

    @classmethod
    def from_state(cls, state):
        detector = cls(
            feature_subset=state["feature_subset"]
            if isinstance(state["feature_subset"], str)
            else tuple(state["feature_subset"]),
            two_sided=state["two_sided"],
        )
        detector.feature_names_ = list(state["feature_names"])
        detector.stats_ = {
            name: FeatureStat.from_dict(raw) for name, raw in state["stats"].items()
        }
        detector.vote_mean_ = state["vote_mean"]
        detector.vote_std_ = state["vote_std"]
        detector.task_vote_stats_ = {
            t: tuple(v) for t, v in state["task_vote_stats"].items()
        }
        detector.training_records_ = []
        return detector


@dataclass
class EnsembleEvaluation:
    metrics: Metrics
    records: list
    feature_metrics: dict
    task_metrics: dict
    blind_tpr: float
    blind_fdr: float
    detector: VoteEnsembleDetector
    training_ids: list = field(default_factory=list)


def evaluate_ensemble(
    feature_vectors,
    pe_stats=None,
    training_clean_count: int = 10,
    feature_subset="all",
    two_sided: bool = False,
) -> EnsembleEvaluation:
    """Train on the first clean runs (manifest order), test on the rest.

    Reports ensemble metrics plus each feature's and each task's standalone
    detection metrics, and the blind baseline a label-frequency guesser
    would achieve on the same test composition.
    """
    vectors = list(feature_vectors)
    clean = [fv for fv in vectors if fv.label == "clean"]
    if len(clean) < training_clean_count:
        raise ValueError(
            f"need {training_clean_count} clean runs for training, got {len(clean)}"
        )
    training = clean[:training_clean_count]
    training_ids = {fv.run_id for fv in training}
    test = [fv for fv in vectors if fv.run_id not in training_ids]
    if not test:
        raise ValueError("no test runs left after training split")

    detector = VoteEnsembleDetector(feature_subset=feature_subset, two_sided=two_sided)
    detector.fit(training, pe_stats=pe_stats)

    records = [detector.score_run(fv) for fv in vectors]
    test_records = [r for r in records if r.run_id not in training_ids]
    y_true = [r.label == "infected" for r in test_records]
    y_pred = [r.verdict == "infected" for r in test_records]
    metrics = metrics_from_predictions(y_true, y_pred)

    feature_metrics = {}
    for name in detector.feature_names_:
        if not detector.stats_[name].usable:
            continue
        flags = [r.votes.get(name, False) for r in test_records]
        feature_metrics[name] = metrics_from_predictions(y_true, flags)

    task_metrics = {}
    for task, (t_mean, t_std) in detector.task_vote_stats_.items():
        flags = []
        for r in test_records:
            count = r.task_totals.get(task, 0)
            if t_std == 0.0:
                fired = count > t_mean
            else:
                fired = abs(count - t_mean) / t_std >= Z_VOTE_THRESHOLD
                if not two_sided:
                    fired = fired and count > t_mean
            flags.append(fired)
        task_metrics[task] = metrics_from_predictions(y_true, flags)

    n_test = len(test_records)
    n_infected = sum(y_true)
    blind_tpr = n_infected / n_test if n_test else 0.0
    blind_fdr = 1.0 - blind_tpr if n_test else 0.0

    return EnsembleEvaluation(
        metrics=metrics,
        records=records,
        feature_metrics=feature_metrics,
        task_metrics=task_metrics,
        blind_tpr=blind_tpr,
        blind_fdr=blind_fdr,
        detector=detector,
        training_ids=sorted(training_ids),
    )


def default_svm_grid(C: float = 1.0, tol: float = 1e-3):
    """The six kernel configurations evaluated by the supervised harness."""
    grid = {}
    grid["linear"] = lambda: SmoSVC(kernel="linear", C=C, tol=tol)
    for gamma in (0.1, 0.01, 0.001):
        grid[f"rbf_{gamma:g}"] = (
            lambda gamma=gamma: SmoSVC(kernel="rbf", gamma=gamma, C=C, tol=tol)
        )
    for degree in (2, 3):
        grid[f"poly_{degree}"] = (
            lambda degree=degree: SmoSVC(kernel="poly", degree=degree, coef0=1.0, C=C, tol=tol)
        )
    return grid


def common_feature_names(vectors):
    """Feature keys present in every run (absent distances drop out)."""
    names = None
    for fv in vectors:
        keys = set(fv.flat())
        names = keys if names is None else names & keys
    return sorted(names or [])


def feature_matrix(vectors, feature_names):
    return np.array(
        [[fv.flat()[name] for name in feature_names] for fv in vectors], dtype=float
    )


def holdout_folds(vectors):
    """One fold per malware family.

    The held-out family's runs plus a round-robin share of the clean runs
    form the test set; everything else trains. Returns a list of
    (train, test) FeatureVector list pairs.
    """
    clean = [fv for fv in vectors if fv.label == "clean"]
    infected = [fv for fv in vectors if fv.label == "infected"]
    families = []
    for fv in infected:
        if fv.family is None:
            raise ValueError(f"infected run {fv.run_id!r} has no family")
        if fv.family not in families:
            families.append(fv.family)
    if len(families) < 2:
        raise ValueError("hold-one-out needs at least two families")
    folds = []
    for fold_idx, family in enumerate(families):
        test_infected = [fv for fv in infected if fv.family == family]
        if not test_infected:
            raise ValueError(f"family {family!r} has no runs")
        test_clean = [fv for i, fv in enumerate(clean) if i % len(families) == fold_idx]
        held_out = {id(fv) for fv in test_infected} | {id(fv) for fv in test_clean}
        train = [fv for fv in vectors if id(fv) not in held_out]
        folds.append((train, test_clean + test_infected))
    return folds


def holdout_evaluate(vectors, classifiers=None, C: float = 1.0, tol: float = 1e-3):
    """Family-wise hold-one-out evaluation with micro-averaged metrics.

    Each fold trains on all clean runs minus the fold's share plus every
    other family's infected runs, then predicts the held-out family and the
    held-out clean runs; counts are pooled across folds per classifier.
    """
    vectors = list(vectors)
    if classifiers is None:
        classifiers = default_svm_grid(C=C, tol=tol)
    folds = holdout_folds(vectors)
    feature_names = common_feature_names(vectors)
    if not feature_names:
        raise ValueError("no features are present in every run")
    results = {}
    for name, make in classifiers.items():
        total = Metrics()
        for train, test in folds:
            clf = make()
            X_train = feature_matrix(train, feature_names)
            y_train = np.array([1.0 if fv.label == "infected" else -1.0 for fv in train])
            clf.fit(X_train, y_train)
            X_test = feature_matrix(test, feature_names)
            y_true = [fv.label == "infected" for fv in test]
            y_pred = [p > 0 for p in clf.predict(X_test)]
            total = total + metrics_from_predictions(y_true, y_pred)
        results[name] = total
    return results
