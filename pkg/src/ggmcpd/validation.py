"""Input validation helpers shared by the estimators and the CLI."""

import numbers

import numpy as np
from sklearn.utils import check_array


def check_samples(X, n_features=None, min_samples=1):
    """Validate an ``(n, p)`` float sample matrix.

    Wraps :func:`sklearn.utils.check_array` and additionally checks the
    feature count against ``n_features`` when given.
    """
    x = check_array(X, dtype=np.float64, ensure_min_samples=min_samples, ensure_2d=True)
    if n_features is not None and x.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {x.shape[1]}")
    return x


def check_window_length(w):
    if isinstance(w, bool) or not isinstance(w, numbers.Integral) or w < 1:
        raise ValueError(f"window length must be a positive integer, got {w!r}")
    return int(w)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_probability(value, name, open_interval=True):
    value = float(value)
    ok = 0.0 < value < 1.0 if open_interval else 0.0 <= value <= 1.0
    if not ok:
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
    return value
