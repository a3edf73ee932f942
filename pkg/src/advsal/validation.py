"""Input validation helpers used by estimators and module-level operations."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArguments, InvalidTarget, LengthMismatch

SAMPLE_RATE = 16_000


def as_signal_array(samples, name: str = "samples") -> np.ndarray:
    """Coerce to a finite 1-D float64 array without range restrictions.

    Containers use this so that intermediate signals (an unclipped x + delta,
    a perturbation larger than full scale) remain representable; operations
    that require valid audio range-check via as_sample_array.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidArguments(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size < 1:
        raise InvalidArguments(f"{name} must have length >= 1")
    if not np.all(np.isfinite(arr)):
        raise InvalidArguments(f"{name} contains non-finite values")
    return arr


def as_sample_array(samples, name: str = "samples") -> np.ndarray:
    """Coerce to a 1-D float64 array and check waveform invariants."""
    arr = as_signal_array(samples, name)
    if arr.min() < -1.0 or arr.max() > 1.0:
        raise InvalidArguments(
            f"{name} outside [-1, 1]: range [{arr.min():.6g}, {arr.max():.6g}]"
        )
    return arr


def check_waveform_batch(X, name: str = "X") -> np.ndarray:
    """Validate a batch of equal-length waveforms as a (n, length) float array.

    Accepts a 2-D array or a sequence of 1-D rows; a single 1-D waveform is
    promoted to a one-row batch.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise InvalidArguments(f"{name} must be (n_utterances, n_samples), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArguments(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArguments(f"{name} contains non-finite values")
    if np.abs(arr).max() > 1.0:
        raise InvalidArguments(f"{name} outside [-1, 1]")
    return arr


def check_same_length(a, b, name_a: str = "x", name_b: str = "y") -> None:
    la, lb = len(a), len(b)
    if la != lb:
        raise LengthMismatch(f"{name_a} has length {la}, {name_b} has length {lb}")


def check_target_position(t: int, k: int) -> int:
    """Validate a 1-based enrollment position against a DB of size k."""
    t = int(t)
    if not 1 <= t <= k:
        raise InvalidTarget(f"target position {t} not in 1..{k}")
    return t


def check_positive(value, name: str):
    if not value > 0:
        raise InvalidArguments(f"{name} must be > 0, got {value!r}")
    return value


def check_nonnegative(value, name: str):
    if value < 0:
        raise InvalidArguments(f"{name} must be >= 0, got {value!r}")
    return value
