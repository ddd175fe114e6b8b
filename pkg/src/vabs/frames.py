"""Core domain types, label/mask codecs, and 12-channel input assembly.

All array-backed types copy their input into a read-only float64 (or uint8)
numpy array at construction time, so instances are immutable and safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

from .errors import (
    NormalizationViolationError,
    ShapeMismatchError,
    UnknownLabelValueError,
    InvalidConfigError,
)

# Channel layout of the stacked network input.  Each of the three frames
# (current, recent background, empty background) contributes R, G, B and its
# foreground-probability map, in that order.
CURRENT_RGB = (0, 1, 2)
CURRENT_FPM = 3
RECENT_RGB = (4, 5, 6)
RECENT_FPM = 7
EMPTY_RGB = (8, 9, 10)
EMPTY_FPM = 11

RECENT_CHANNELS = (4, 5, 6, 7)
EMPTY_CHANNELS = (8, 9, 10, 11)
FPM_CHANNELS = (CURRENT_FPM, RECENT_FPM, EMPTY_FPM)
INPUT_CHANNELS = 12


class Label(IntEnum):
    """Per-pixel reference labels, valued as the bytes used on disk."""

    BACKGROUND = 0
    HARD_SHADOW = 50
    OUTSIDE_ROI = 85
    UNKNOWN_MOTION = 170
    FOREGROUND = 255


_LABEL_VALUES = frozenset(int(v) for v in Label)


def _frozen_float(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise NormalizationViolationError(
            f"{name} values must lie in [0, 1]; got range "
            f"[{arr.min()}, {arr.max()}]"
        )
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ColorFrame:
    """An H x W x 3 image with unit-interval float64 pixels."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = _frozen_float(self.pixels, "ColorFrame")
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ShapeMismatchError(
                f"ColorFrame needs shape (H, W, 3); got {arr.shape}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatchError("ColorFrame needs H >= 1 and W >= 1")
        object.__setattr__(self, "pixels", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]


@dataclass(frozen=True)
class ProbabilityMap:
    """An H x W map of unit-interval float64 values."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_float(self.values, "ProbabilityMap")
        if arr.ndim != 2:
            raise ShapeMismatchError(
                f"ProbabilityMap needs shape (H, W); got {arr.shape}"
            )
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class LabelMap:
    """An H x W map of :class:`Label` values stored as uint8."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.labels, dtype=np.uint8, copy=True)
        if arr.ndim != 2:
            raise ShapeMismatchError(
                f"LabelMap needs shape (H, W); got {arr.shape}"
            )
        bad = ~np.isin(arr, list(_LABEL_VALUES))
        if bad.any():
            value = int(arr[bad][0])
            raise UnknownLabelValueError(
                f"label value {value} is not one of {sorted(_LABEL_VALUES)}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "labels", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class BinaryMask:
    """An H x W map of {0, 1} values stored as uint8."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.uint8, copy=True)
        if arr.ndim != 2:
            raise ShapeMismatchError(
                f"BinaryMask needs shape (H, W); got {arr.shape}"
            )
        if arr.size and arr.max() > 1:
            raise UnknownLabelValueError(
                f"BinaryMask values must be 0 or 1; got {int(arr.max())}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


# --- empty-background selection policies ------------------------------------

@dataclass(frozen=True)
class AutoFirst100:
    """Build the empty background from stationary frames among the first 100.

    The set of stationary frame indices is supplied externally (it requires a
    judgment call per video).  ``foreground_free`` holds 1-based indices; when
    None, the background builder reports that the choice is still pending.
    """

    foreground_free: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.foreground_free is not None:
            idx = tuple(int(i) for i in self.foreground_free)
            if any(i < 1 or i > 100 for i in idx):
                raise InvalidConfigError(
                    "AutoFirst100 indices must lie in 1..100"
                )
            object.__setattr__(self, "foreground_free", idx)


@dataclass(frozen=True)
class ManualFrameList:
    """Build the empty background from an explicit list of frame indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise InvalidConfigError("ManualFrameList needs at least one index")
        object.__setattr__(self, "indices", idx)


@dataclass(frozen=True)
class PTZ:
    """Pan-tilt-zoom videos: replace both references with short recent medians."""


EmptyBackgroundPolicy = AutoFirst100 | ManualFrameList | PTZ


@dataclass(frozen=True)
class VideoDescriptor:
    """Identity and per-video settings of one dataset video."""

    category: str
    video: str
    frame_count: int
    resolution: tuple[int, int]
    temporal_roi: tuple[int, int]
    empty_background_policy: EmptyBackgroundPolicy = field(
        default_factory=AutoFirst100
    )

    def __post_init__(self):
        if self.frame_count < 1:
            raise InvalidConfigError("frame_count must be positive")
        first, last = self.temporal_roi
        if not (1 <= first <= last <= self.frame_count):
            raise InvalidConfigError(
                f"temporal ROI {self.temporal_roi} must satisfy "
                f"1 <= first <= last <= {self.frame_count}"
            )


@dataclass(frozen=True)
class NetworkInput:
    """The H x W x 12 stack fed to the segmentation network."""

    channels: np.ndarray

    def __post_init__(self):
        arr = _frozen_float(self.channels, "NetworkInput")
        if arr.ndim != 3 or arr.shape[2] != INPUT_CHANNELS:
            raise ShapeMismatchError(
                f"NetworkInput needs shape (H, W, {INPUT_CHANNELS}); "
                f"got {arr.shape}"
            )
        object.__setattr__(self, "channels", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.channels.shape[0], self.channels.shape[1]


# --- codecs -----------------------------------------------------------------

def decode_label_map(image: np.ndarray) -> LabelMap:
    """Decode an 8-bit grayscale reference image into a LabelMap."""
    return LabelMap(np.asarray(image, dtype=np.uint8))


def encode_label_map(label_map: LabelMap) -> np.ndarray:
    """Encode a LabelMap back to its 8-bit grayscale representation."""
    return np.array(label_map.labels, dtype=np.uint8, copy=True)


def encode_mask(mask: BinaryMask) -> np.ndarray:
    """Encode a BinaryMask as an 8-bit image with 1 -> 255 and 0 -> 0."""
    return (mask.values * np.uint8(255)).astype(np.uint8)


def decode_mask(image: np.ndarray) -> BinaryMask:
    """Decode an 8-bit 0/255 image into a BinaryMask."""
    arr = np.asarray(image, dtype=np.uint8)
    bad = ~np.isin(arr, (0, 255))
    if bad.any():
        raise UnknownLabelValueError(
            f"mask value {int(arr[bad][0])} is neither 0 nor 255"
        )
    return BinaryMask((arr == 255).astype(np.uint8))


def assemble_input(
    current: ColorFrame,
    current_fpm: ProbabilityMap,
    recent_bg: ColorFrame,
    recent_fpm: ProbabilityMap,
    empty_bg: ColorFrame,
    empty_fpm: ProbabilityMap,
) -> NetworkInput:
    """Stack the three frames and their probability maps into 12 channels."""
    parts: Sequence[np.ndarray] = (
        current.pixels,
        current_fpm.values[:, :, None],
        recent_bg.pixels,
        recent_fpm.values[:, :, None],
        empty_bg.pixels,
        empty_fpm.values[:, :, None],
    )
    shape = current.shape
    for part in parts:
        if part.shape[:2] != shape:
            raise ShapeMismatchError(
                f"all inputs must share H, W {shape}; got {part.shape[:2]}"
            )
    return NetworkInput(np.concatenate(parts, axis=2))
