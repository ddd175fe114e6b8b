"""Background reference construction by temporal median filtering.

Two references characterize the scene: an "empty" background built from
hand-selected foreground-free frames near the start of the video, and a
"recent" background built from a sliding window of frames immediately
preceding the one being processed.  Pan-tilt-zoom videos replace both with
short recent-window medians because no fixed empty view exists.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    EmptySequenceError,
    IndexOutOfRangeError,
    InvalidConfigError,
    NoEligibleFramesError,
    ShapeMismatchError,
)
from .frames import (
    AutoFirst100,
    ColorFrame,
    EmptyBackgroundPolicy,
    ManualFrameList,
    PTZ,
)

PTZ_EMPTY_WINDOW = 100
PTZ_RECENT_WINDOW = 30


@dataclass(frozen=True)
class BackgroundPair:
    """The two background references for one processed frame."""

    empty_bg: ColorFrame
    recent_bg: ColorFrame

    def __post_init__(self):
        if self.empty_bg.shape != self.recent_bg.shape:
            raise ShapeMismatchError(
                f"background pair shapes differ: {self.empty_bg.shape} "
                f"vs {self.recent_bg.shape}"
            )


def _stack(frames: Sequence[ColorFrame]) -> np.ndarray:
    if len(frames) == 0:
        raise EmptySequenceError("temporal median needs at least one frame")
    shape = frames[0].shape
    for f in frames[1:]:
        if f.shape != shape:
            raise ShapeMismatchError(
                f"frames must share H, W; got {shape} and {f.shape}"
            )
    return np.stack([f.pixels for f in frames], axis=0)


def temporal_median(frames: Sequence[ColorFrame]) -> ColorFrame:
    """Per-pixel, per-channel median over the frame axis.

    Even counts use the mean of the two central order statistics, matching
    numpy's convention.
    """
    return ColorFrame(np.median(_stack(frames), axis=0))


def empty_background(
    frames: Sequence[ColorFrame], policy: EmptyBackgroundPolicy
) -> ColorFrame:
    """Median over the frames selected by the empty-background policy."""
    if isinstance(policy, PTZ):
        raise InvalidConfigError(
            "PTZ videos have no empty background; use ptz_backgrounds"
        )
    if isinstance(policy, AutoFirst100):
        if policy.foreground_free is None:
            raise NoEligibleFramesError(
                "no foreground-free frames identified in the first 100; "
                "supply the stationary set or switch to ManualFrameList"
            )
        indices = policy.foreground_free
        if not indices:
            raise NoEligibleFramesError(
                "the foreground-free set is empty; use ManualFrameList to "
                "pick frames by hand"
            )
    elif isinstance(policy, ManualFrameList):
        indices = policy.indices
    else:
        raise InvalidConfigError(f"unknown policy {policy!r}")
    for i in indices:
        if i < 1 or i > len(frames):
            raise IndexOutOfRangeError(
                f"frame index {i} outside 1..{len(frames)}"
            )
    return temporal_median([frames[i - 1] for i in indices])


def recent_background(
    frames: Sequence[ColorFrame], t: int, window: int = 100
) -> ColorFrame:
    """Median of up to `window` frames preceding frame t (1-based).

    The window truncates at the start of the video so inference can begin at
    frame 2.
    """
    if window < 1:
        raise InvalidConfigError("window must be positive")
    if t < 2 or t > len(frames):
        raise IndexOutOfRangeError(
            f"frame index {t} outside 2..{len(frames)}"
        )
    lo = max(1, t - window)
    return temporal_median(frames[lo - 1 : t - 1])


def ptz_backgrounds(frames: Sequence[ColorFrame], t: int) -> BackgroundPair:
    """Both references for pan-tilt-zoom videos, from 100- and 30-frame windows."""
    return BackgroundPair(
        empty_bg=recent_background(frames, t, PTZ_EMPTY_WINDOW),
        recent_bg=recent_background(frames, t, PTZ_RECENT_WINDOW),
    )


class StreamingMedian:
    """Sliding-window median over frames, updated in O(window) per pixel.

    Maintains one sorted multiset per pixel, stored column-wise in a single
    (window, pixels) array padded with +inf.  Push inserts the new frame's
    values into sorted position and, once the window is full, removes the
    oldest frame's values first.  Medians are read off the central rows, so
    results are bit-identical to sorting the window from scratch.
    """

    def __init__(self, window: int):
        if window < 1:
            raise InvalidConfigError("window must be positive")
        self.window = window
        self._queue: deque[np.ndarray] = deque()
        self._sorted: np.ndarray | None = None
        self._shape: tuple[int, ...] | None = None
        self._rows: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._queue)

    def push(self, frame: np.ndarray) -> None:
        arr = np.asarray(frame, dtype=np.float64)
        if self._sorted is None:
            self._shape = arr.shape
            self._sorted = np.full((self.window, arr.size), np.inf)
            self._rows = np.arange(self.window)[:, None]
        elif arr.shape != self._shape:
            raise ShapeMismatchError(
                f"expected frame shape {self._shape}; got {arr.shape}"
            )
        flat = arr.reshape(-1).copy()
        if len(self._queue) == self.window:
            self._remove(self._queue.popleft())
        self._queue.append(flat)
        self._insert(flat)

    def _insert(self, flat: np.ndarray) -> None:
        s, rows = self._sorted, self._rows
        pos = (s < flat).sum(axis=0)[None, :]
        shifted = np.vstack([s[:1], s[:-1]])
        self._sorted = np.where(
            rows < pos, s, np.where(rows == pos, flat, shifted)
        )

    def _remove(self, flat: np.ndarray) -> None:
        s, rows = self._sorted, self._rows
        idx = np.argmax(s == flat, axis=0)[None, :]
        shifted = np.vstack([s[1:], np.full((1, s.shape[1]), np.inf)])
        self._sorted = np.where(rows < idx, s, shifted)

    def median(self) -> np.ndarray:
        """Median over the currently held frames, in the pushed frame shape."""
        k = len(self._queue)
        if k == 0:
            raise EmptySequenceError("no frames pushed yet")
        s = self._sorted
        if k % 2:
            med = s[k // 2].copy()
        else:
            med = (s[k // 2 - 1] + s[k // 2]) * 0.5
        return med.reshape(self._shape)
