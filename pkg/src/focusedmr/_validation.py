"""Small argument checks shared by the public functions and estimators."""

import numbers

import numpy as np
from sklearn.utils import check_array


def check_level(value, name="alpha"):
    """Return ``value`` as float after checking ``0 < value < 1``."""
    if not isinstance(value, numbers.Real) or not 0.0 < float(value) < 1.0:
        raise ValueError(f"{name} must lie strictly between 0 and 1, got {value!r}")
    return float(value)


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_summary_array(X):
    """Validate a ``(p, 4)`` array of (beta_x, se_x, beta_y, se_y) rows."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] != 4:
        raise ValueError(
            "summary data must have 4 columns (beta_x, se_x, beta_y, se_y), "
            f"got shape {X.shape}"
        )
    if np.any(X[:, 1] <= 0) or np.any(X[:, 3] <= 0):
        raise ValueError("standard errors must be strictly positive")
    return X


def check_mask(mask, length, name="core"):
    mask = np.asarray(mask)
    if mask.shape != (length,):
        raise ValueError(f"{name} must have shape ({length},), got {mask.shape}")
    if mask.dtype != bool:
        if not np.isin(mask, (0, 1)).all():
            raise ValueError(f"{name} must be boolean or 0/1")
        mask = mask.astype(bool)
    return mask
