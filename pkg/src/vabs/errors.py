"""Exception hierarchy for the vabs package.

Every error raised by this package derives from :class:`VabsError`.  The four
intermediate classes group errors by how the command line interface reports
them: configuration problems exit with status 2, data problems with 3,
numerical failures with 4, and split-manifest validation failures with 5.
"""

from __future__ import annotations


class VabsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VabsError):
    """A configuration value is missing, malformed, or out of range."""


class DataError(VabsError):
    """An input file or in-memory data object is missing or malformed."""


class NumericalError(VabsError):
    """A computation produced a non-finite or otherwise unusable value."""


class ValidationError(VabsError):
    """A split manifest violates the evaluation protocol."""


# --- configuration ---------------------------------------------------------

class InvalidConfigError(ConfigError):
    """A config file or flag value cannot be interpreted."""


class ShapeNotPoolableError(ConfigError):
    """Network input height or width is not divisible by the pooling factor."""


class FrameTooSmallError(ConfigError):
    """A frame is smaller than the requested crop size."""


# --- data ------------------------------------------------------------------

class MissingFrameError(DataError):
    """An expected frame file does not exist."""


class CorruptImageError(DataError):
    """An image file exists but cannot be decoded."""


class UnknownLabelValueError(DataError):
    """A reference-label image contains a byte outside the label alphabet."""


class ShapeMismatchError(DataError):
    """Two arrays that must share a shape do not."""


class EmptySequenceError(DataError):
    """An operation that needs at least one frame received none."""


class NoEligibleFramesError(DataError):
    """No frames satisfy the stationary-background selection policy."""


class IndexOutOfRangeError(DataError):
    """A frame index lies outside the video's valid range."""


class SegmenterUnavailableError(DataError):
    """No semantic segmenter implementation was supplied."""


class NormalizationViolationError(DataError):
    """A probability map contains values outside [0, 1]."""


class NotEnoughLabeledFramesError(DataError):
    """A video's labeled span is shorter than the requested sample count."""


class MissingBackgroundError(DataError):
    """A cached background image required for input assembly is absent."""


class MissingGroundTruthError(DataError):
    """A reference-label image required for scoring is absent."""


class MissingMaskError(DataError):
    """A predicted mask required for scoring is absent."""


class NoEvaluatedPixelsError(DataError):
    """Every pixel of a frame pair is excluded from scoring."""


class EmptyCategoryError(DataError):
    """A category contributes no scored videos to an aggregate."""


class InconsistentTableError(DataError):
    """A results table is ragged or mixes incompatible row sets."""


class CheckpointError(DataError):
    """A checkpoint file is unreadable or incompatible with the model."""


# --- split-manifest validation ---------------------------------------------

class DuplicateTestAssignmentError(ValidationError):
    """A video appears in the test role of more than one split."""


class UncoveredVideoError(ValidationError):
    """A video never appears in the test role of any split."""


class TrainTestOverlapError(ValidationError):
    """A video is assigned both train and test roles within one split."""
