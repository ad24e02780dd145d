"""Input validation helpers shared by the public entry points."""

import numbers

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a parameter set cannot describe a valid instance."""


class DegenerateChannelError(ArithmeticError):
    """Raised when a selected user has zero effective channel q^H h."""


def check_finite_vector(values, name, dtype=np.float64, allow_empty=False):
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0 and not allow_empty:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_scalar(value, name, lo=None, hi=None, lo_inclusive=True, hi_inclusive=True):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if np.isnan(value):
        raise ValueError(f"{name} is NaN")
    if lo is not None:
        bad = value < lo if lo_inclusive else value <= lo
        if bad:
            op = ">=" if lo_inclusive else ">"
            raise ValueError(f"{name} must be {op} {lo}, got {value}")
    if hi is not None:
        bad = value > hi if hi_inclusive else value >= hi
        if bad:
            op = "<=" if hi_inclusive else "<"
            raise ValueError(f"{name} must be {op} {hi}, got {value}")
    return value


def check_sample_counts(sample_counts, n_users=None):
    counts = check_finite_vector(sample_counts, "sample_counts")
    if np.any(counts <= 0):
        raise ValueError("sample_counts must be strictly positive")
    if n_users is not None and counts.size != n_users:
        raise ValueError(f"expected {n_users} sample counts, got {counts.size}")
    return counts


def check_selection(selection, n_users):
    sel = np.asarray(selection)
    if sel.shape != (n_users,):
        raise ValueError(f"selection must have shape ({n_users},), got {sel.shape}")
    if sel.dtype == bool:
        return sel.copy()
    if not np.all((sel == 0) | (sel == 1)):
        raise ValueError("selection entries must be 0 or 1")
    return sel.astype(bool)


def check_unit_vector(q, name="q", atol=1e-8):
    q = np.asarray(q, dtype=np.complex128).ravel()
    if not np.all(np.isfinite(q)):
        raise ValueError(f"{name} contains non-finite entries")
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > atol:
        raise ValueError(f"{name} must have unit norm, got {norm:.6g}")
    return q
