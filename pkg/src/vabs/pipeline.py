"""Cache-building and per-frame input assembly for training and inference.

The stages write their products under the cache root so repeated runs and
later stages reuse them: `backgrounds` stores the median reference frames,
`fpm` stores quantized probability maps for the current frames and for every
cached reference.  Assembly reads those files back and stacks the 12
channels; inference adds padding, the forward pass, thresholding, and mask
output.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .background import (
    PTZ_EMPTY_WINDOW,
    PTZ_RECENT_WINDOW,
    StreamingMedian,
    empty_background,
)
from .dataset import (
    CacheLayout,
    load_descriptor,
    load_frame,
    mask_path,
    read_color_png,
    read_image,
    write_color_png,
    write_image,
)
from .errors import (
    MissingBackgroundError,
    NoEligibleFramesError,
)
from .frames import (
    AutoFirst100,
    ColorFrame,
    EMPTY_CHANNELS,
    EmptyBackgroundPolicy,
    FPM_CHANNELS,
    ManualFrameList,
    NetworkInput,
    PTZ,
    ProbabilityMap,
    RECENT_CHANNELS,
    VideoDescriptor,
    assemble_input,
)
from .network import (
    SegmentationNetwork,
    binarize,
    forward_map,
    pad_for_network,
)
from .semantics import (
    ForegroundClassSet,
    Segmenter,
    compute_fpm,
    decode_fpm,
    encode_fpm,
)
from .frames import encode_mask

RECENT_WINDOW = 100


@dataclass(frozen=True)
class AblationFlags:
    """Input-channel and augmentation toggles for component studies."""

    use_empty_bg: bool = True
    use_recent_bg: bool = True
    use_fpm: bool = True
    use_illumination_aug: bool = True


def apply_ablation(channels: np.ndarray, flags: AblationFlags) -> np.ndarray:
    """Zero the channel groups a disabled component would have filled."""
    if flags.use_empty_bg and flags.use_recent_bg and flags.use_fpm:
        return channels
    out = np.array(channels, copy=True)
    if not flags.use_recent_bg:
        out[:, :, list(RECENT_CHANNELS)] = 0.0
    if not flags.use_empty_bg:
        out[:, :, list(EMPTY_CHANNELS)] = 0.0
    if not flags.use_fpm:
        out[:, :, list(FPM_CHANNELS)] = 0.0
    return out


def evaluated_frames(descriptor: VideoDescriptor) -> range:
    """Frame numbers that carry labels; reference windows need t >= 2."""
    first, last = descriptor.temporal_roi
    return range(max(first, 2), last + 1)


def segmenter_fpm(
    segmenter: Segmenter, frame: ColorFrame, fg: ForegroundClassSet
) -> ProbabilityMap:
    return compute_fpm(segmenter.predict(frame), fg)


def foreground_free_indices(
    dataset_root: str | Path,
    descriptor: VideoDescriptor,
    segmenter: Segmenter,
    fg: ForegroundClassSet,
    threshold: float = 0.5,
    max_fraction: float = 0.0,
) -> tuple[int, ...]:
    """Frames among the first 100 whose FPM flags (almost) no foreground.

    A frame qualifies when the fraction of pixels with probability above the
    threshold does not exceed max_fraction.
    """
    eligible = []
    for i in range(1, min(100, descriptor.frame_count) + 1):
        frame = load_frame(dataset_root, descriptor.category, descriptor.video, i)
        fpm = segmenter_fpm(segmenter, frame, fg)
        fraction = float(np.mean(fpm.values > threshold))
        if fraction <= max_fraction:
            eligible.append(i)
    return tuple(eligible)


def build_backgrounds_for_video(
    dataset_root: str | Path,
    cache: CacheLayout,
    descriptor: VideoDescriptor,
    policy: EmptyBackgroundPolicy,
    needed: Iterable[int] | None = None,
) -> int:
    """Write the reference frames this video is missing; returns file count.

    Existing files are left untouched so reruns are cheap and idempotent.
    """
    cat, vid = descriptor.category, descriptor.video
    frames = list(needed) if needed is not None else list(
        evaluated_frames(descriptor)
    )
    written = 0

    if isinstance(policy, PTZ):
        missing = [
            t for t in frames
            if not cache.recent100_bg(cat, vid, t).exists()
            or not cache.recent30_bg(cat, vid, t).exists()
        ]
        if missing:
            written += _stream_recent(
                dataset_root, descriptor, missing,
                [
                    (PTZ_EMPTY_WINDOW, lambda t: cache.recent100_bg(cat, vid, t)),
                    (PTZ_RECENT_WINDOW, lambda t: cache.recent30_bg(cat, vid, t)),
                ],
            )
        return written

    empty_path = cache.empty_bg(cat, vid)
    if not empty_path.exists():
        if isinstance(policy, AutoFirst100):
            source_count = min(100, descriptor.frame_count)
        else:
            source_count = max(policy.indices)
        source = [
            load_frame(dataset_root, cat, vid, i)
            for i in range(1, source_count + 1)
        ]
        try:
            write_color_png(empty_path, empty_background(source, policy))
        except NoEligibleFramesError as exc:
            raise NoEligibleFramesError(f"{cat}/{vid}: {exc}") from exc
        written += 1

    missing = [t for t in frames if not cache.recent_bg(cat, vid, t).exists()]
    if missing:
        written += _stream_recent(
            dataset_root, descriptor, missing,
            [(RECENT_WINDOW, lambda t: cache.recent_bg(cat, vid, t))],
        )
    return written


def _stream_recent(
    dataset_root: str | Path,
    descriptor: VideoDescriptor,
    needed: Sequence[int],
    windows: Sequence[tuple[int, object]],
) -> int:
    """One pass over the video feeding sliding medians; emit at needed frames."""
    cat, vid = descriptor.category, descriptor.video
    targets = sorted(set(needed))
    medians = [StreamingMedian(window) for window, _ in windows]
    written = 0
    last = targets[-1]
    pending = set(targets)
    for t in range(2, last + 1):
        previous = load_frame(dataset_root, cat, vid, t - 1)
        for median in medians:
            median.push(previous.pixels)
        if t in pending:
            for median, (_, path_for) in zip(medians, windows):
                write_color_png(path_for(t), ColorFrame(median.median()))
                written += 1
    return written


def _cached_fpm(
    path: Path, source: Path, segmenter: Segmenter, fg: ForegroundClassSet
) -> int:
    if path.exists():
        return 0
    frame = read_color_png(source)
    write_image(path, encode_fpm(segmenter_fpm(segmenter, frame, fg)))
    return 1


def build_fpms_for_video(
    dataset_root: str | Path,
    cache: CacheLayout,
    descriptor: VideoDescriptor,
    segmenter: Segmenter,
    fg: ForegroundClassSet,
    needed: Iterable[int] | None = None,
) -> int:
    """Probability maps for the current frames and every cached reference."""
    cat, vid = descriptor.category, descriptor.video
    frames = list(needed) if needed is not None else list(
        evaluated_frames(descriptor)
    )
    is_ptz = isinstance(descriptor.empty_background_policy, PTZ)
    written = 0

    for t in frames:
        target = cache.fpm_current(cat, vid, t)
        if not target.exists():
            frame = load_frame(dataset_root, cat, vid, t)
            write_image(target, encode_fpm(segmenter_fpm(segmenter, frame, fg)))
            written += 1
        if is_ptz:
            written += _cached_fpm(
                cache.fpm_recent100(cat, vid, t),
                _require(cache.recent100_bg(cat, vid, t), cat, vid, t),
                segmenter, fg,
            )
            written += _cached_fpm(
                cache.fpm_recent30(cat, vid, t),
                _require(cache.recent30_bg(cat, vid, t), cat, vid, t),
                segmenter, fg,
            )
        else:
            written += _cached_fpm(
                cache.fpm_recent(cat, vid, t),
                _require(cache.recent_bg(cat, vid, t), cat, vid, t),
                segmenter, fg,
            )
    if not is_ptz:
        written += _cached_fpm(
            cache.fpm_empty(cat, vid),
            _require(cache.empty_bg(cat, vid), cat, vid, None),
            segmenter, fg,
        )
    return written


def _require(path: Path, cat: str, vid: str, t: int | None) -> Path:
    if not path.exists():
        where = f"frame {t}" if t is not None else "the empty reference"
        raise MissingBackgroundError(
            f"{cat}/{vid}: no cached background for {where} at {path}; "
            f"run the backgrounds stage first"
        )
    return path


def _read_fpm(path: Path, cat: str, vid: str) -> ProbabilityMap:
    if not path.exists():
        raise MissingBackgroundError(
            f"{cat}/{vid}: no cached probability map at {path}; "
            f"run the fpm stage first"
        )
    return decode_fpm(read_image(path))


def assemble_stack(
    dataset_root: str | Path,
    cache: CacheLayout,
    descriptor: VideoDescriptor,
    t: int,
) -> NetworkInput:
    """The 12-channel input for frame t, read from the dataset and caches."""
    cat, vid = descriptor.category, descriptor.video
    current = load_frame(dataset_root, cat, vid, t)
    current_fpm = _read_fpm(cache.fpm_current(cat, vid, t), cat, vid)
    if isinstance(descriptor.empty_background_policy, PTZ):
        empty_bg = read_color_png(_require(cache.recent100_bg(cat, vid, t), cat, vid, t))
        empty_fpm = _read_fpm(cache.fpm_recent100(cat, vid, t), cat, vid)
        recent_bg = read_color_png(_require(cache.recent30_bg(cat, vid, t), cat, vid, t))
        recent_fpm = _read_fpm(cache.fpm_recent30(cat, vid, t), cat, vid)
    else:
        empty_bg = read_color_png(_require(cache.empty_bg(cat, vid), cat, vid, None))
        empty_fpm = _read_fpm(cache.fpm_empty(cat, vid), cat, vid)
        recent_bg = read_color_png(_require(cache.recent_bg(cat, vid, t), cat, vid, t))
        recent_fpm = _read_fpm(cache.fpm_recent(cat, vid, t), cat, vid)
    return assemble_input(
        current, current_fpm, recent_bg, recent_fpm, empty_bg, empty_fpm
    )


def resolve_empty_policy(
    dataset_root: str | Path,
    descriptor: VideoDescriptor,
    empty_frames: Mapping[str, Sequence[int]] | None = None,
    heuristic: Mapping | None = None,
    segmenter: Segmenter | None = None,
    fg: ForegroundClassSet | None = None,
) -> EmptyBackgroundPolicy:
    """Pick the empty-background policy for one video.

    Precedence: the PTZ category, then an explicit per-video frame list,
    then the FPM-threshold heuristic when enabled, then the descriptor's
    default (which fails loudly at build time if it carries no frame set).
    """
    if isinstance(descriptor.empty_background_policy, PTZ):
        return PTZ()
    key = f"{descriptor.category}/{descriptor.video}"
    if empty_frames and key in empty_frames:
        return ManualFrameList(tuple(int(i) for i in empty_frames[key]))
    if heuristic and heuristic.get("enabled"):
        if segmenter is None or fg is None:
            raise MissingBackgroundError(
                "the foreground-free heuristic needs a segmenter"
            )
        indices = foreground_free_indices(
            dataset_root, descriptor, segmenter, fg,
            threshold=float(heuristic.get("threshold", 0.5)),
            max_fraction=float(heuristic.get("max_fraction", 0.0)),
        )
        return AutoFirst100(indices)
    return descriptor.empty_background_policy


def infer_video(
    model: SegmentationNetwork,
    dataset_root: str | Path,
    cache: CacheLayout,
    descriptor: VideoDescriptor,
    masks_root: str | Path,
    theta: float = 0.5,
    flags: AblationFlags = AblationFlags(),
) -> int:
    """Write one mask per evaluated frame at the video's native resolution."""
    count = 0
    stages = model.config.pool_steps
    for t in evaluated_frames(descriptor):
        stack = assemble_stack(dataset_root, cache, descriptor, t)
        stack = NetworkInput(apply_ablation(stack.channels, flags))
        padded, record = pad_for_network(stack, stages)
        output = forward_map(model, padded, training=False)
        cropped = ProbabilityMap(record.crop(output.values))
        mask = binarize(cropped, theta)
        write_image(
            mask_path(masks_root, descriptor.category, descriptor.video, t),
            encode_mask(mask),
        )
        count += 1
    return count
