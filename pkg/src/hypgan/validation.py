"""Input validation shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length


def check_images(X, n_features: int | None = 784, value_range=(-1.0, 1.0)) -> np.ndarray:
    """Validate a 2-d float64 image matrix; pixels must lie in ``value_range``."""
    X = check_array(X, dtype=np.float64)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features per row, got {X.shape[1]}")
    lo, hi = value_range
    if X.size and (X.min() < lo - 1e-12 or X.max() > hi + 1e-12):
        raise ValueError(f"pixel values must lie in [{lo}, {hi}]")
    return X


def check_labels(y, X=None, n_classes: int = 10) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("labels must be a 1-d array")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes - 1}]")
    if X is not None:
        check_consistent_length(X, y)
    return y.astype(np.int64)

