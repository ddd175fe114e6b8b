"""Dataset-directory ingestion and the background/FPM cache layout.

Videos live at `<root>/<category>/<video>/` with numbered frames under
`input/` (in000001.jpg, with .png accepted as a fallback), reference labels
under `groundtruth/` (gt000001.png), an optional spatial region-of-interest
image `ROI.bmp` (non-zero pixels are scored), and `temporalROI.txt` holding
the first and last labeled frame numbers.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptImageError,
    DataError,
    MissingFrameError,
    MissingGroundTruthError,
)
from .frames import (
    AutoFirst100,
    ColorFrame,
    Label,
    LabelMap,
    PTZ,
    VideoDescriptor,
    decode_label_map,
)

PTZ_CATEGORY = "PTZ"

_FRAME_RE = re.compile(r"in(\d{6})\.(jpg|png)$")


def read_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingFrameError(f"no such image: {path}")
    try:
        with Image.open(path) as img:
            return np.asarray(img)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptImageError(f"cannot decode {path}: {exc}") from exc


def read_rgb(path: str | Path) -> np.ndarray:
    """8-bit H x W x 3 pixels; grayscale sources are replicated to 3 channels."""
    path = Path(path)
    if not path.exists():
        raise MissingFrameError(f"no such image: {path}")
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptImageError(f"cannot decode {path}: {exc}") from exc


def write_image(path: str | Path, array: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)


def video_dir(dataset_root: str | Path, category: str, video: str) -> Path:
    return Path(dataset_root) / category / video


def frame_path(
    dataset_root: str | Path, category: str, video: str, index: int
) -> Path:
    base = video_dir(dataset_root, category, video) / "input"
    jpg = base / f"in{index:06d}.jpg"
    if jpg.exists():
        return jpg
    png = base / f"in{index:06d}.png"
    if png.exists():
        return png
    raise MissingFrameError(
        f"{category}/{video}: frame {index} not found under {base}"
    )


def gt_path(
    dataset_root: str | Path, category: str, video: str, index: int
) -> Path:
    return (
        video_dir(dataset_root, category, video)
        / "groundtruth"
        / f"gt{index:06d}.png"
    )


def load_frame(
    dataset_root: str | Path, category: str, video: str, index: int
) -> ColorFrame:
    raw = read_rgb(frame_path(dataset_root, category, video, index))
    return ColorFrame(raw.astype(np.float64) / 255.0)


def load_roi(
    dataset_root: str | Path, category: str, video: str
) -> np.ndarray | None:
    """Boolean scored-region mask from ROI.bmp, or None when absent."""
    path = video_dir(dataset_root, category, video) / "ROI.bmp"
    if not path.exists():
        return None
    return read_image(path) != 0


def load_label_map(
    dataset_root: str | Path,
    category: str,
    video: str,
    index: int,
    roi: np.ndarray | None = None,
) -> LabelMap:
    """Reference labels for one frame, with out-of-ROI pixels folded in."""
    path = gt_path(dataset_root, category, video, index)
    if not path.exists():
        raise MissingGroundTruthError(
            f"{category}/{video}: no reference labels for frame {index}"
        )
    labels = np.asarray(read_image(path), dtype=np.uint8)
    if labels.ndim == 3:
        labels = labels[:, :, 0]
    if roi is not None:
        if roi.shape != labels.shape:
            raise DataError(
                f"{category}/{video}: ROI shape {roi.shape} differs from "
                f"label shape {labels.shape}"
            )
        labels = np.where(roi, labels, np.uint8(Label.OUTSIDE_ROI))
    return decode_label_map(labels)


def read_temporal_roi(
    dataset_root: str | Path, category: str, video: str
) -> tuple[int, int] | None:
    path = video_dir(dataset_root, category, video) / "temporalROI.txt"
    if not path.exists():
        return None
    parts = path.read_text().split()
    if len(parts) < 2:
        raise DataError(f"{path} must hold two integers")
    return int(parts[0]), int(parts[1])


def count_frames(dataset_root: str | Path, category: str, video: str) -> int:
    base = video_dir(dataset_root, category, video) / "input"
    if not base.is_dir():
        raise MissingFrameError(f"{category}/{video} has no input directory")
    count = 0
    for name in os.listdir(base):
        if _FRAME_RE.match(name):
            count += 1
    if count == 0:
        raise MissingFrameError(f"{category}/{video} has no frames")
    return count


def load_descriptor(
    dataset_root: str | Path, category: str, video: str
) -> VideoDescriptor:
    frame_count = count_frames(dataset_root, category, video)
    first = load_frame(dataset_root, category, video, 1)
    roi = read_temporal_roi(dataset_root, category, video)
    if roi is None:
        roi = (1, frame_count)
    policy = PTZ() if category == PTZ_CATEGORY else AutoFirst100()
    return VideoDescriptor(
        category=category,
        video=video,
        frame_count=frame_count,
        resolution=first.shape,
        temporal_roi=roi,
        empty_background_policy=policy,
    )


def discover_videos(dataset_root: str | Path) -> list[VideoDescriptor]:
    """All videos under the root, ordered by category then video name."""
    root = Path(dataset_root)
    if not root.is_dir():
        raise MissingFrameError(f"dataset root {root} does not exist")
    found = []
    for category in sorted(p.name for p in root.iterdir() if p.is_dir()):
        for video in sorted(
            p.name for p in (root / category).iterdir() if p.is_dir()
        ):
            if (root / category / video / "input").is_dir():
                found.append(load_descriptor(root, category, video))
    return found


def load_video(
    dataset_root: str | Path, descriptor: VideoDescriptor
) -> list[ColorFrame]:
    """Every frame of the video in temporal order, scaled to [0, 1]."""
    return [
        load_frame(dataset_root, descriptor.category, descriptor.video, i)
        for i in range(1, descriptor.frame_count + 1)
    ]


# --- cache layout -------------------------------------------------------------

CACHE_ROOT_ENV = "VABS_CACHE_ROOT"


@dataclass(frozen=True)
class CacheLayout:
    """File placement for computed backgrounds and probability maps."""

    cache_root: Path

    def _dir(self, category: str, video: str) -> Path:
        return Path(self.cache_root) / category / video

    def empty_bg(self, category: str, video: str) -> Path:
        return self._dir(category, video) / "empty.png"

    def recent_bg(self, category: str, video: str, t: int) -> Path:
        return self._dir(category, video) / f"recent_{t:06d}.png"

    def recent100_bg(self, category: str, video: str, t: int) -> Path:
        return self._dir(category, video) / f"recent100_{t:06d}.png"

    def recent30_bg(self, category: str, video: str, t: int) -> Path:
        return self._dir(category, video) / f"recent30_{t:06d}.png"

    def fpm_current(self, category: str, video: str, t: int) -> Path:
        return self._dir(category, video) / "fpm" / f"in{t:06d}.png"

    def fpm_empty(self, category: str, video: str) -> Path:
        return self._dir(category, video) / "fpm" / "empty.png"

    def fpm_recent(self, category: str, video: str, t: int) -> Path:
        return self._dir(category, video) / "fpm" / f"recent_{t:06d}.png"

    def fpm_recent100(self, category: str, video: str, t: int) -> Path:
        return self._dir(category, video) / "fpm" / f"recent100_{t:06d}.png"

    def fpm_recent30(self, category: str, video: str, t: int) -> Path:
        return self._dir(category, video) / "fpm" / f"recent30_{t:06d}.png"


def write_color_png(path: str | Path, frame: ColorFrame) -> None:
    write_image(path, np.rint(frame.pixels * 255.0).astype(np.uint8))


def read_color_png(path: str | Path) -> ColorFrame:
    return ColorFrame(
        np.asarray(read_rgb(path), dtype=np.float64) / 255.0
    )


def mask_path(
    masks_root: str | Path, category: str, video: str, index: int
) -> Path:
    return Path(masks_root) / category / video / f"bin{index:06d}.png"
