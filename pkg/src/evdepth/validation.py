"""Input validation helpers shared across the package.

All helpers raise ``ValueError`` with a descriptive message; the CLI maps
these onto machine-parsable error categories.
"""

from __future__ import annotations

import numpy as np


def check_event_array(events, height=None, width=None):
    """Validate an event array of shape (N, 4) with columns t, x, y, p.

    Returns the array as float64. Polarities coded {0, 1} are remapped to
    {-1, +1} (0 -> -1); anything outside {-1, 0, +1} is rejected.
    """
    arr = np.asarray(events, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected event array of shape (N, 4), got {arr.shape}")
    pol = arr[:, 3]
    unique = np.unique(pol)
    if not np.all(np.isin(unique, (-1.0, 0.0, 1.0))):
        raise ValueError(f"polarity values must be in {{-1, 0, +1}}, got {unique[:8]}")
    if np.any(pol == 0.0):
        arr = arr.copy()
        arr[:, 3] = np.where(pol == 0.0, -1.0, pol)
    if height is not None or width is not None:
        check_event_bounds(arr, height, width)
    return arr


def check_event_bounds(events, height, width):
    """Reject events whose coordinates fall outside the sensor."""
    x, y = events[:, 1], events[:, 2]
    bad = (x < 0) | (x >= width) | (y < 0) | (y >= height)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"event {idx} at (x={x[idx]:g}, y={y[idx]:g}) outside "
            f"{height}x{width} sensor bounds"
        )


def check_sorted(timestamps, name="event stream"):
    t = np.asarray(timestamps)
    if t.size > 1 and np.any(np.diff(t) < 0):
        idx = int(np.flatnonzero(np.diff(t) < 0)[0])
        raise ValueError(
            f"{name} not sorted by timestamp: t[{idx}]={t[idx]:.9f} > "
            f"t[{idx + 1}]={t[idx + 1]:.9f}"
        )


def check_same_shape(a, b, what="inputs"):
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"{what} must share a shape, got {tuple(a.shape)} vs {tuple(b.shape)}")


def check_unit_interval(x, what="values"):
    lo, hi = float(x.min()), float(x.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"{what} must lie in [0, 1], got range [{lo:g}, {hi:g}]")


def check_multiple_of(height, width, divisor=32):
    if height % divisor or width % divisor:
        raise ValueError(
            f"spatial size {height}x{width} must be divisible by {divisor}; "
            "pad or crop the inputs first"
        )


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
