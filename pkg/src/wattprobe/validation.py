"""Input validation helpers shared across the package."""

import numpy as np
from sklearn.exceptions import NotFittedError


def as_float_vector(values, name="values"):
    """Coerce to a 1-D float array, rejecting non-finite entries."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_points_matrix(points, name="points"):
    """Coerce to a 2-D (n_points, n_dims) float matrix."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_fitted(estimator, attribute):
    """Raise NotFittedError unless `attribute` exists on the estimator."""
    if getattr(estimator, attribute, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )
