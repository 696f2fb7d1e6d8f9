"""Input validation helpers used at the public boundary of each module."""

import math

import numpy as np
from sklearn.utils.validation import check_array, column_or_1d

from .exceptions import DomainError


def check_heights(X, *, name="z_a", allow_zero=True):
    """Return heights as a finite 1-D float array.

    Accepts a scalar, a 1-D sequence or an ``(n, 1)`` column (the shape
    scikit-learn passes to ``predict``).
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    elif arr.ndim == 2:
        if arr.shape[1] != 1:
            raise DomainError(f"{name} must be a single column, got shape {arr.shape}")
        arr = arr[:, 0]
    try:
        arr = check_array(arr, ensure_2d=False, dtype=float, ensure_all_finite=True,
                          input_name=name)
    except ValueError as exc:
        raise DomainError(str(exc)) from exc
    if arr.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional")
    if allow_zero:
        if np.any(arr < 0):
            raise DomainError(f"{name} must be non-negative")
    elif np.any(arr <= 0):
        raise DomainError(f"{name} must be strictly positive")
    return arr


def check_targets(y, n, *, name="counts"):
    y = column_or_1d(np.asarray(y, dtype=float), warn=False)
    if y.shape[0] != n:
        raise DomainError(f"{name} has {y.shape[0]} entries, expected {n}")
    if not np.all(np.isfinite(y)):
        raise DomainError(f"{name} must be finite")
    return y


def check_probability(p, name):
    p = float(p)
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise DomainError(f"{name} must lie in [0, 1], got {p}")
    return p


def check_positive(v, name, *, strict=True):
    v = float(v)
    if not math.isfinite(v) or v < 0 or (strict and v == 0):
        bound = "> 0" if strict else ">= 0"
        raise DomainError(f"{name} must be finite and {bound}, got {v}")
    return v


def check_weights(weights, n, name="weights"):
    """Per-level weights: ``None`` means uniform ones."""
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape[0] != n:
        raise DomainError(f"{name} must have {n} entries, got {w.shape[0]}")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise DomainError(f"{name} must be finite and non-negative")
    return w
