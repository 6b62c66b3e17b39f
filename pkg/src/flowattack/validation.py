"""Input validation helpers for the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ContractError


def check_images(X, allow_unit_range=True):
    """Return ``X`` as a float32 ``(N, C, H, W)`` array of pixels in [0, 1]."""
    X = check_array(X, dtype=np.float32, allow_nd=True, ensure_2d=False)
    if X.ndim == 3:
        X = X[:, None]
    if X.ndim != 4:
        raise ContractError(f"expected (N, C, H, W) images, got shape {X.shape}")
    if allow_unit_range and (X.min() < 0 or X.max() > 1):
        raise ContractError("pixels must lie in [0, 1]")
    return X


def check_labels(y, n):
    y = np.asarray(y)
    if y.shape != (n,):
        raise ContractError(f"expected {n} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer) or y.min() < 0:
        raise ContractError("labels must be non-negative integers")
    return y.astype(np.int64)
