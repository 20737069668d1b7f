"""Turn uniform power profiles into symbol streams.

Two encoders: a binary high/low split at the pooled median of a pair of
profiles, and a learned codebook of canonical window shapes found by
k-means over three-second snippets (cluster count chosen elsewhere by the
gap statistic).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from wattprobe.trace import UniformProfile
from wattprobe.validation import as_points_matrix, check_fitted

DEGENERATE_FRACTION = 0.9


@dataclass(frozen=True)
class SymbolStream:
    """A finite sequence over a small integer alphabet."""

    alphabet_size: int
    symbols: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        if self.alphabet_size < 2:
            raise ValueError("alphabet_size must be at least 2")
        symbols = np.asarray(self.symbols, dtype=np.int8)
        if symbols.ndim != 1:
            raise ValueError("symbols must be one-dimensional")
        if symbols.size and (symbols.min() < 0 or symbols.max() >= self.alphabet_size):
            raise ValueError("symbols out of alphabet range")
        object.__setattr__(self, "symbols", symbols)

    def __len__(self):
        return self.symbols.size

    def to_string(self) -> str:
        if self.alphabet_size > 10:
            raise ValueError("string form only supports alphabets up to 10 symbols")
        return "".join(chr(ord("0") + s) for s in self.symbols)

    @classmethod
    def from_string(cls, text: str, alphabet_size: int) -> "SymbolStream":
        symbols = np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0")
        return cls(alphabet_size=alphabet_size, symbols=symbols.astype(np.int8))


@dataclass(frozen=True)
class ShapeBook:
    """Canonical window shapes, ordered by descending mean power."""

    dt: float
    window_seconds: float
    overlap_seconds: float
    centroids: np.ndarray

    def __post_init__(self):
        centroids = np.asarray(self.centroids, dtype=float)
        if centroids.ndim != 2 or centroids.shape[0] < 2:
            raise ValueError("need at least two centroids of equal length")
        object.__setattr__(self, "centroids", centroids)

    @property
    def k(self):
        return self.centroids.shape[0]

    @property
    def window_samples(self):
        return int(round(self.window_seconds / self.dt))

    @property
    def stride_samples(self):
        return int(round(self.overlap_seconds / self.dt))

    def to_dict(self):
        return {
            "dt": self.dt,
            "window_seconds": self.window_seconds,
            "overlap_seconds": self.overlap_seconds,
            "centroids": self.centroids.tolist(),
        }

    @classmethod
    def from_dict(cls, raw):
        return cls(
            dt=raw["dt"],
            window_seconds=raw["window_seconds"],
            overlap_seconds=raw["overlap_seconds"],
            centroids=np.asarray(raw["centroids"], dtype=float),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))


@dataclass
class KMeansResult:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    within_dispersion: float


def pooled_threshold(a: UniformProfile, b: UniformProfile) -> float:
    """Median of both profiles' readings pooled together.

    Splitting at this level leaves (up to ties) equal counts of pooled
    readings above and below, which balances the two symbol probabilities.
    """
    return float(np.median(np.concatenate([a.values, b.values])))


def binarize(p: UniformProfile, threshold: float) -> SymbolStream:
    """Encode readings as 1 above the threshold, 0 otherwise.

    Streams where one symbol exceeds 90% occupancy are flagged degenerate;
    downstream annihilation checks will usually reject them.
    """
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    symbols = (p.values > threshold).astype(np.int8)
    ones = int(symbols.sum())
    top = max(ones, symbols.size - ones)
    return SymbolStream(
        alphabet_size=2, symbols=symbols, degenerate=top > DEGENERATE_FRACTION * symbols.size
    )


def _seed_centroids(X, k, rng):
    # distance-weighted seeding: each new center drawn with probability
    # proportional to squared distance from the nearest chosen center
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centroids[j] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centroids[j]) ** 2, axis=1))
    return centroids


def _squared_distances(X, centroids):
    d2 = (
        np.sum(X * X, axis=1)[:, None]
        - 2.0 * X @ centroids.T
        + np.sum(centroids * centroids, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _lloyd(X, centroids, max_iter):
    k = centroids.shape[0]
    assignments = None
    for _ in range(max_iter):
        d2 = _squared_distances(X, centroids)
        new_assignments = np.argmin(d2, axis=1)
        # re-seed empty clusters with the points farthest from their centers
        counts = np.bincount(new_assignments, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if empties.size:
            farthest = np.argsort(d2[np.arange(len(X)), new_assignments])[::-1]
            for empty, idx in zip(empties, farthest):
                new_assignments[idx] = empty
        if assignments is not None and np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for j in range(k):
            members = X[assignments == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    d2 = _squared_distances(X, centroids)
    dispersion = float(d2[np.arange(len(X)), assignments].sum())
    return centroids, assignments, dispersion


def kmeans(points, k: int, seed: int = 0, restarts: int = 10, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm, best of `restarts` seeded initializations by dispersion."""
    X = as_points_matrix(points)
    if not 1 <= k <= X.shape[0]:
        raise ValueError(f"k={k} out of range for {X.shape[0]} points")
    if k == 1:
        centroid = X.mean(axis=0, keepdims=True)
        dispersion = float(np.sum((X - centroid) ** 2))
        return KMeansResult(
            k=1,
            centroids=centroid,
            assignments=np.zeros(X.shape[0], dtype=int),
            within_dispersion=dispersion,
        )
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        centroids, assignments, dispersion = _lloyd(X, _seed_centroids(X, k, rng), max_iter)
        if best is None or dispersion < best.within_dispersion:
            best = KMeansResult(
                k=k,
                centroids=centroids,
                assignments=assignments,
                within_dispersion=dispersion,
            )
    return best


def _log_dispersion(points, k, seed, restarts):
    w = kmeans(points, k, seed=seed, restarts=restarts).within_dispersion
    return np.log(w) if w > 0 else -np.inf


def gap_statistic(points, k_max: int = 8, B: int = 20, seed: int = 0, restarts: int = 10) -> int:
    """Pick a cluster count by comparing dispersion against a uniform null.

    For each k, Gap(k) is the mean log dispersion of B reference datasets
    (uniform over the data's bounding box) minus the data's log dispersion.
    Returns the smallest k with Gap(k) >= Gap(k+1) - s_{k+1}, where s is the
    reference spread inflated by sqrt(1 + 1/B); falls back to k_max.
    """
    X = as_points_matrix(points)
    if X.shape[0] < k_max:
        raise ValueError(f"need at least k_max={k_max} points, got {X.shape[0]}")
    lo, hi = X.min(axis=0), X.max(axis=0)
    if np.all(lo == hi):
        return 1
    refs = []
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1, b]))
        refs.append(rng.uniform(lo, hi, size=X.shape))

    cache = {}

    def stats(k):
        if k not in cache:
            log_w_data = _log_dispersion(X, k, _child_seed(seed, 2, k), restarts)
            log_w_refs = np.array(
                [_log_dispersion(refs[b], k, _child_seed(seed, 3, k, b), restarts) for b in range(B)]
            )
            # zero dispersions (duplicated points, or k = n) break the log
            # comparison; a perfectly-clustered dataset beats any reference,
            # and a perfectly-clustered reference can never be beaten
            if np.isinf(log_w_data) and not np.all(np.isfinite(log_w_refs)):
                gap, spread = -np.inf, 0.0
            elif np.isinf(log_w_data):
                gap, spread = np.inf, 0.0
            elif not np.all(np.isfinite(log_w_refs)):
                gap, spread = -np.inf, 0.0
            else:
                gap = float(log_w_refs.mean() - log_w_data)
                spread = float(log_w_refs.std() * np.sqrt(1.0 + 1.0 / B))
            cache[k] = (gap, spread)
        return cache[k]

    for k in range(1, k_max):
        gap_k, _ = stats(k)
        gap_next, spread_next = stats(k + 1)
        if gap_k >= gap_next - spread_next:
            return k
    return k_max


def _child_seed(*entropy):
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def _windows(values, window_samples, stride_samples):
    if len(values) < window_samples:
        return np.empty((0, window_samples))
    view = np.lib.stride_tricks.sliding_window_view(values, window_samples)
    return view[::stride_samples].copy()


def learn_shapes(
    training_profiles,
    k: int = 4,
    seed: int = 0,
    window_seconds: float = 3.0,
    overlap_seconds: float = 1.5,
    restarts: int = 10,
) -> ShapeBook:
    """Cluster overlapping windows from the training profiles into k shapes.

    Centroids are stored in descending mean power so symbol identity is
    stable across retrainings on identical data and seed.
    """
    if not training_profiles:
        raise ValueError("no training profiles")
    dt = training_profiles[0].dt
    if any(abs(p.dt - dt) > 1e-12 for p in training_profiles):
        raise ValueError("training profiles disagree on dt")
    window = int(round(window_seconds / dt))
    stride = int(round(overlap_seconds / dt))
    pool = [_windows(p.values, window, stride) for p in training_profiles]
    windows = np.vstack([w for w in pool if len(w)]) if pool else np.empty((0, window))
    if windows.shape[0] < k:
        raise ValueError(f"only {windows.shape[0]} windows for k={k} shapes")
    result = kmeans(windows, k, seed=seed, restarts=restarts)
    order = np.argsort(-result.centroids.mean(axis=1), kind="stable")
    return ShapeBook(
        dt=dt,
        window_seconds=window_seconds,
        overlap_seconds=overlap_seconds,
        centroids=result.centroids[order],
    )


def shape_encode(p: UniformProfile, book: ShapeBook) -> SymbolStream:
    """One symbol per window: the index of the nearest shape (ties go low)."""
    if abs(p.dt - book.dt) > 1e-12:
        raise ValueError(f"profile dt {p.dt} does not match shape book dt {book.dt}")
    windows = _windows(p.values, book.window_samples, book.stride_samples)
    if not len(windows):
        raise ValueError("profile shorter than one shape window")
    d2 = _squared_distances(windows, book.centroids)
    return SymbolStream(alphabet_size=book.k, symbols=np.argmin(d2, axis=1).astype(np.int8))


def concat_repeat(s: SymbolStream, times: int = 100) -> SymbolStream:
    """Concatenate a stream with itself `times` times."""
    if times < 1:
        raise ValueError("times must be at least 1")
    return SymbolStream(
        alphabet_size=s.alphabet_size,
        symbols=np.tile(s.symbols, times),
        degenerate=s.degenerate,
    )


class ShapeSymbolizer(BaseEstimator, TransformerMixin):
    """Estimator wrapper: fit a shape codebook, transform profiles to streams.

    Parameters
    ----------
    k : number of canonical shapes.
    window_seconds, overlap_seconds : window geometry for both learning
        and encoding.
    seed : controls k-means initialization.
    """

    def __init__(self, k=4, window_seconds=3.0, overlap_seconds=1.5, seed=0, restarts=10):
        self.k = k
        self.window_seconds = window_seconds
        self.overlap_seconds = overlap_seconds
        self.seed = seed
        self.restarts = restarts

    def fit(self, X, y=None):
        self.book_ = learn_shapes(
            list(X),
            k=self.k,
            seed=self.seed,
            window_seconds=self.window_seconds,
            overlap_seconds=self.overlap_seconds,
            restarts=self.restarts,
        )
        return self

    def transform(self, X):
        check_fitted(self, "book_")
        return [shape_encode(p, self.book_) for p in X]
