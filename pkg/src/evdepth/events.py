"""Event streams, fixed-interval windowing, and voxel-grid encoding.

An event stream is an (N, 4) float64 array with columns (t, x, y, p):
timestamp in seconds, pixel column, pixel row, polarity in {-1, +1}.
Streams are sliced into windows that each end at an intensity-frame
timestamp, and every window is encoded as a signed spatiotemporal voxel
grid of shape (bins, H, W): each event spreads its polarity over the two
nearest temporal bins with triangular weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .validation import (
    check_event_array,
    check_event_bounds,
    check_positive,
    check_sorted,
)

DEFAULT_NUM_BINS = 5
DEFAULT_WINDOW_SECONDS = 0.050

EVENT_RECORD_DTYPE = np.dtype([("t", "<f8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1")])


@dataclass(frozen=True)
class Event:
    """A single brightness-change record."""

    x: int
    y: int
    t: float
    p: int

    def __post_init__(self):
        if self.p not in (-1, 1):
            raise ValueError(f"polarity must be -1 or +1, got {self.p}")


@dataclass(frozen=True)
class EventWindow:
    """Events inside a fixed interval ending at an intensity frame.

    The window covers (t_start, t_end]; an event exactly at ``t_end``
    belongs to this window. ``events`` is an (N, 4) array sorted by t.
    """

    events: np.ndarray
    t_start: float
    t_end: float
    frame_index: int = 0

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def num_events(self) -> int:
        return int(self.events.shape[0])


@dataclass
class VoxelGrid:
    """Signed (bins, H, W) encoding of one event window."""

    data: np.ndarray
    window: Optional[EventWindow] = field(default=None, repr=False)

    @property
    def num_bins(self) -> int:
        return int(self.data.shape[0])

    @property
    def shape(self):
        return tuple(self.data.shape)


def slice_windows(stream, frame_timestamps: Sequence[float],
                  window_seconds: float = DEFAULT_WINDOW_SECONDS) -> list[EventWindow]:
    """Slice a sorted event stream into one window per frame timestamp.

    Window k covers (T_k - window_seconds, T_k]; events outside every
    window are dropped. Windows overlap only if frames are spaced closer
    than the window length, which is allowed.
    """
    check_positive(window_seconds, "window_seconds")
    stream = check_event_array(stream)
    check_sorted(stream[:, 0])
    frames = np.asarray(frame_timestamps, dtype=np.float64)
    if frames.size > 1 and np.any(np.diff(frames) <= 0):
        raise ValueError("frame timestamps must be strictly increasing")

    t = stream[:, 0]
    windows = []
    for k, t_end in enumerate(frames):
        t_start = t_end - window_seconds
        lo = np.searchsorted(t, t_start, side="right")  # exclusive left edge
        hi = np.searchsorted(t, t_end, side="right")    # inclusive right edge
        windows.append(EventWindow(stream[lo:hi], float(t_start), float(t_end), k))
    return windows


def voxelize(window: EventWindow, num_bins: int = DEFAULT_NUM_BINS,
             height: int = None, width: int = None,
             origin: str = "window", dtype=np.float32) -> VoxelGrid:
    """Encode a window as a (num_bins, height, width) voxel grid.

    Each event's timestamp is normalized to ``(num_bins - 1) * (t - t0) /
    duration`` and its polarity split between the two nearest integer bins
    with triangular weights. ``origin`` selects the normalization origin:
    ``"window"`` uses the window start (stable for sparse windows),
    ``"first_event"`` uses the first event's timestamp.
    """
    if num_bins < 2:
        raise ValueError(f"num_bins must be >= 2, got {num_bins}")
    if height is None or width is None:
        raise ValueError("height and width are required")
    if origin not in ("window", "first_event"):
        raise ValueError(f"unknown normalization origin {origin!r}")

    ev = window.events
    grid = np.zeros((num_bins, height, width), dtype=np.float64)
    if ev.shape[0] == 0:
        return VoxelGrid(grid.astype(dtype), window)

    check_event_bounds(ev, height, width)
    duration = window.duration
    if origin == "first_event":
        t0 = float(ev[0, 0])
    else:
        t0 = window.t_start
    if duration <= 0:
        raise ValueError(f"window duration must be positive, got {duration:g}")

    t_star = (num_bins - 1) * (ev[:, 0] - t0) / duration
    x = ev[:, 1].astype(np.int64)
    y = ev[:, 2].astype(np.int64)
    pol = ev[:, 3]

    left = np.floor(t_star).astype(np.int64)
    frac = t_star - left
    flat = grid.reshape(-1)
    plane = height * width
    for bins, weights in ((left, pol * (1.0 - frac)), (left + 1, pol * frac)):
        ok = (bins >= 0) & (bins < num_bins)
        if np.any(ok):
            idx = bins[ok] * plane + y[ok] * width + x[ok]
            flat += np.bincount(idx, weights=weights[ok], minlength=flat.size)

    return VoxelGrid(grid.astype(dtype), window)


def density(grid: VoxelGrid) -> float:
    """Fraction of pixels that received any event mass."""
    occupied = np.any(grid.data != 0, axis=0)
    return float(occupied.sum()) / occupied.size


# ---------------------------------------------------------------------------
# Event file I/O
#
# Binary format: packed little-endian records (t: float64 seconds, x: uint16,
# y: uint16, p: int8 in {-1, +1}) plus a JSON sidecar with height, width and
# count. A CSV fallback with columns t,x,y,p is also accepted.
# ---------------------------------------------------------------------------

def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_events(path, events, height: int, width: int) -> None:
    path = Path(path)
    arr = check_event_array(events, height=height, width=width)
    records = np.empty(arr.shape[0], dtype=EVENT_RECORD_DTYPE)
    records["t"] = arr[:, 0]
    records["x"] = arr[:, 1].astype(np.uint16)
    records["y"] = arr[:, 2].astype(np.uint16)
    records["p"] = arr[:, 3].astype(np.int8)
    path.parent.mkdir(parents=True, exist_ok=True)
    records.tofile(path)
    header = {"height": int(height), "width": int(width), "count": int(arr.shape[0])}
    sidecar_path(path).write_text(json.dumps(header, indent=2) + "\n")


def read_events(path):
    """Read events from a binary (+ JSON sidecar) or CSV file.

    Returns ``(events, height, width)``; height/width are None for CSV
    files without a sidecar.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"event file not found: {path}")
    if path.suffix.lower() == ".csv":
        return _read_events_csv(path)

    header_file = sidecar_path(path)
    if not header_file.exists():
        raise FileNotFoundError(f"missing event header sidecar: {header_file}")
    header = json.loads(header_file.read_text())
    records = np.fromfile(path, dtype=EVENT_RECORD_DTYPE)
    if "count" in header and records.shape[0] != int(header["count"]):
        raise ValueError(
            f"{path}: header promises {header['count']} events, file holds "
            f"{records.shape[0]}"
        )
    arr = np.column_stack([
        records["t"],
        records["x"].astype(np.float64),
        records["y"].astype(np.float64),
        records["p"].astype(np.float64),
    ])
    arr = check_event_array(arr)
    return arr, int(header["height"]), int(header["width"])


def _read_events_csv(path):
    first = ""
    with open(path) as fh:
        first = fh.readline()
    skip = 1 if any(c.isalpha() for c in first) else 0
    arr = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    arr = check_event_array(arr)
    return arr, None, None
