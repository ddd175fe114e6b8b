"""Foreground probability maps from per-pixel semantic class distributions.

A semantic segmenter assigns each pixel a probability distribution over K
classes.  The foreground probability map (FPM) is the per-pixel sum of the
probabilities of the classes that count as foreground for surveillance
purposes (people, vehicles, portable objects).
"""

from __future__ import annotations

import importlib
import threading
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import (
    IndexOutOfRangeError,
    InvalidConfigError,
    NormalizationViolationError,
    SegmenterUnavailableError,
    ShapeMismatchError,
)
from .frames import BinaryMask, ColorFrame, ProbabilityMap

DEFAULT_CLASS_COUNT = 150

# ADE20K indices of the twelve classes treated as foreground: person, car,
# cushion, box, book, boat, bus, truck, bottle, van, bag, bicycle.
DEFAULT_FOREGROUND_CLASSES = (12, 20, 39, 41, 67, 76, 80, 83, 98, 102, 115, 127)

PERSON_CLASS = 12

FPM_CACHE_SCALE = 65535
NORMALIZATION_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ClassProbabilityField:
    """An H x W x K stack of per-pixel class probability distributions."""

    probs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.probs, dtype=np.float64, copy=True)
        if arr.ndim != 3 or arr.shape[2] < 2:
            raise ShapeMismatchError(
                f"ClassProbabilityField needs shape (H, W, K >= 2); "
                f"got {arr.shape}"
            )
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise NormalizationViolationError(
                "class probabilities must lie in [0, 1]"
            )
        total = arr.sum(axis=2)
        worst = float(np.abs(total - 1.0).max())
        if worst > NORMALIZATION_TOLERANCE:
            raise NormalizationViolationError(
                f"per-pixel probabilities must sum to 1 within "
                f"{NORMALIZATION_TOLERANCE}; worst deviation {worst}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)

    @property
    def class_count(self) -> int:
        return self.probs.shape[2]


@dataclass(frozen=True)
class ForegroundClassSet:
    """The class indices whose probability mass counts as foreground."""

    indices: tuple[int, ...] = DEFAULT_FOREGROUND_CLASSES

    def __post_init__(self):
        idx = tuple(sorted({int(i) for i in self.indices}))
        if not idx:
            raise InvalidConfigError("foreground class set must be non-empty")
        if idx[0] < 0:
            raise IndexOutOfRangeError(f"negative class index {idx[0]}")
        object.__setattr__(self, "indices", idx)

    def complement(self, class_count: int) -> "ForegroundClassSet":
        if self.indices[-1] >= class_count:
            raise IndexOutOfRangeError(
                f"class index {self.indices[-1]} >= K = {class_count}"
            )
        rest = tuple(i for i in range(class_count) if i not in self.indices)
        return ForegroundClassSet(rest)


def compute_fpm(
    field: ClassProbabilityField, fg: ForegroundClassSet
) -> ProbabilityMap:
    """Sum the foreground classes' probabilities at every pixel."""
    k = field.class_count
    if fg.indices[-1] >= k:
        raise IndexOutOfRangeError(
            f"class index {fg.indices[-1]} >= K = {k}"
        )
    if len(fg.indices) >= k:
        raise InvalidConfigError(
            "foreground set must be a proper subset of the classes"
        )
    total = field.probs[:, :, list(fg.indices)].sum(axis=2)
    # Normalization slack of up to 1e-6 can push a subset sum past 1.
    return ProbabilityMap(np.clip(total, 0.0, 1.0))


def fpm_threshold_bgs(fpm: ProbabilityMap, theta: float = 0.5) -> BinaryMask:
    """Baseline subtractor: foreground wherever the FPM strictly exceeds theta."""
    if not 0.0 < theta < 1.0:
        raise InvalidConfigError(f"theta must lie in (0, 1); got {theta}")
    return BinaryMask((fpm.values > theta).astype(np.uint8))


class Segmenter(Protocol):
    """Anything that maps a frame to a per-pixel class distribution."""

    def predict(self, frame: ColorFrame) -> ClassProbabilityField: ...


class StubSegmenter:
    """Deterministic stand-in for a pretrained semantic segmenter.

    Pixel luminance (mean of R, G, B) becomes the probability of a designated
    person class; the remainder spreads uniformly over the other classes.
    Bright pixels therefore read as likely foreground, which is enough to
    exercise every FPM code path without any external model.
    """

    def __init__(
        self,
        class_count: int = DEFAULT_CLASS_COUNT,
        person_class: int = PERSON_CLASS,
    ):
        if class_count < 2:
            raise InvalidConfigError("need at least two classes")
        if not 0 <= person_class < class_count:
            raise IndexOutOfRangeError(
                f"person class {person_class} outside 0..{class_count - 1}"
            )
        self.class_count = class_count
        self.person_class = person_class

    def predict(self, frame: ColorFrame) -> ClassProbabilityField:
        lum = frame.pixels.mean(axis=2)
        h, w = lum.shape
        k = self.class_count
        probs = np.empty((h, w, k), dtype=np.float64)
        probs[:] = ((1.0 - lum) / (k - 1))[:, :, None]
        probs[:, :, self.person_class] = lum
        return ClassProbabilityField(probs)


class ExternalSegmenterAdapter:
    """Bridge to a user-supplied segmenter, addressed as "module:attribute".

    The attribute must be a callable taking an (H, W, 3) float array in
    [0, 1] and returning an (H, W, K) probability array.  Calls are
    serialized with a lock because external models are rarely reentrant.
    """

    def __init__(self, entry_point: str):
        if ":" not in entry_point:
            raise InvalidConfigError(
                f"entry point {entry_point!r} must look like module:attribute"
            )
        self.entry_point = entry_point
        self._lock = threading.Lock()
        self._fn: Callable[[np.ndarray], np.ndarray] | None = None

    def _resolve(self) -> Callable[[np.ndarray], np.ndarray]:
        if self._fn is None:
            module_name, attr = self.entry_point.split(":", 1)
            try:
                module = importlib.import_module(module_name)
                fn = getattr(module, attr)
            except (ImportError, AttributeError) as exc:
                raise SegmenterUnavailableError(
                    f"cannot load segmenter {self.entry_point!r}: {exc}"
                ) from exc
            if not callable(fn):
                raise SegmenterUnavailableError(
                    f"{self.entry_point!r} is not callable"
                )
            self._fn = fn
        return self._fn

    def predict(self, frame: ColorFrame) -> ClassProbabilityField:
        fn = self._resolve()
        with self._lock:
            raw = fn(frame.pixels)
        return ClassProbabilityField(np.asarray(raw, dtype=np.float64))


def encode_fpm(fpm: ProbabilityMap) -> np.ndarray:
    """Quantize an FPM to the 16-bit representation used by the cache."""
    return np.rint(fpm.values * FPM_CACHE_SCALE).astype(np.uint16)


def decode_fpm(image: np.ndarray) -> ProbabilityMap:
    """Reverse of :func:`encode_fpm`."""
    arr = np.asarray(image)
    return ProbabilityMap(arr.astype(np.float64) / FPM_CACHE_SCALE)
