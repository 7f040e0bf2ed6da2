"""Input validation helpers shared by the model functions and estimators."""

import math
import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DomainError, UsageError

TWO_PI = 2.0 * math.pi


def check_finite(name, value):
    """Raise :class:`DomainError` unless every element of ``value`` is finite."""
    arr = np.asarray(value)
    if arr.dtype == object or not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return value


def check_nonnegative(name, value):
    check_finite(name, value)
    if np.any(np.asarray(value) < 0):
        raise DomainError(f"{name} must be >= 0, got {value!r}")
    return value


def check_positive(name, value):
    check_finite(name, value)
    if np.any(np.asarray(value) <= 0):
        raise DomainError(f"{name} must be > 0, got {value!r}")
    return value


def check_unit_interval(name, value):
    check_finite(name, value)
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def is_scalar(value):
    return isinstance(value, numbers.Number) or np.ndim(value) == 0


def check_grid(freqs, name="freq_grid"):
    """Validate a frequency grid in Hz and return it as a float array.

    The grid must be one dimensional, non-empty, finite and strictly
    increasing.
    """
    arr = np.asarray(freqs, dtype=float)
    if arr.ndim != 1:
        raise UsageError(f"{name} must be one dimensional")
    if arr.size == 0:
        raise UsageError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    if arr.size > 1 and np.any(np.diff(arr) <= 0):
        bad = int(np.argmax(np.diff(arr) <= 0)) + 1
        raise UsageError(f"{name} must be strictly increasing (index {bad})")
    return arr


def hz_to_angular(freqs_hz):
    return TWO_PI * np.asarray(freqs_hz, dtype=float)


def angular_to_hz(omega):
    return np.asarray(omega, dtype=float) / TWO_PI


def check_spectrum_xy(X, y=None):
    """Validate estimator inputs.

    ``X`` is either a 1-d array of frequencies in Hz or a 2-d array whose
    first column is the frequency in Hz and whose optional second column is
    the homodyne phase in radians.  Returns ``(freqs_hz, phases, y)`` where
    ``phases`` is ``None`` for single-column input.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    X = check_array(X, ensure_2d=True, dtype=float)
    if X.shape[1] not in (1, 2):
        raise UsageError("X must have one column (freq_hz) or two (freq_hz, phi_rad)")
    freqs = X[:, 0]
    phases = X[:, 1] if X.shape[1] == 2 else None
    if y is not None:
        y = check_array(np.asarray(y, dtype=float), ensure_2d=False, dtype=float)
        if y.shape != freqs.shape:
            raise UsageError(f"y has shape {y.shape}, expected {freqs.shape}")
    return freqs, phases, y
