"""Train/test split manifests for video-agnostic evaluation.

A manifest is a line-oriented CSV of `split_id, category, video, role`
records with role one of train, test, or unused.  The protocol demands that
no video is both trained on and tested within one split, and that across the
whole table every video is tested exactly once.  The bundled manifest covers
the 53-video corpus with 18 splits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import (
    DuplicateTestAssignmentError,
    InvalidConfigError,
    TrainTestOverlapError,
    UncoveredVideoError,
)

VideoKey = tuple[str, str]

ROLES = ("train", "test", "unused")


@dataclass(frozen=True)
class SplitSpec:
    """One train/test combination; videos are (category, video) pairs."""

    id: int
    train_videos: frozenset[VideoKey]
    test_videos: frozenset[VideoKey]

    def __post_init__(self):
        overlap = self.train_videos & self.test_videos
        if overlap:
            cat, vid = sorted(overlap)[0]
            raise TrainTestOverlapError(
                f"split {self.id}: {cat}/{vid} assigned to both train and test"
            )


@dataclass(frozen=True)
class SplitTable:
    """All splits of one experiment plus the video universe they cover."""

    splits: tuple[SplitSpec, ...]
    universe: frozenset[VideoKey]

    def __post_init__(self):
        seen_test: dict[VideoKey, int] = {}
        for split in self.splits:
            for key in split.test_videos:
                if key in seen_test:
                    raise DuplicateTestAssignmentError(
                        f"{key[0]}/{key[1]} is a test video of both split "
                        f"{seen_test[key]} and split {split.id}"
                    )
                seen_test[key] = split.id
        uncovered = self.universe - set(seen_test)
        if uncovered:
            cat, vid = sorted(uncovered)[0]
            raise UncoveredVideoError(
                f"{cat}/{vid} never appears in any test set"
            )

    def split(self, split_id: int) -> SplitSpec:
        for s in self.splits:
            if s.id == split_id:
                return s
        raise InvalidConfigError(
            f"no split {split_id}; have {[s.id for s in self.splits]}"
        )


def load_splits(manifest: str | Path) -> SplitTable:
    """Parse and validate a manifest file."""
    rows: list[tuple[int, str, str, str]] = []
    with open(manifest, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or (lineno == 1 and record[0] == "split_id"):
                continue
            if len(record) != 4:
                raise InvalidConfigError(
                    f"{manifest}:{lineno}: expected 4 fields, got {len(record)}"
                )
            sid_text, category, video, role = (f.strip() for f in record)
            try:
                sid = int(sid_text)
            except ValueError:
                raise InvalidConfigError(
                    f"{manifest}:{lineno}: split id {sid_text!r} is not an integer"
                ) from None
            if role not in ROLES:
                raise InvalidConfigError(
                    f"{manifest}:{lineno}: role {role!r} not in {ROLES}"
                )
            rows.append((sid, category, video, role))

    if not rows:
        raise InvalidConfigError(f"{manifest}: no split records")

    universe = frozenset((cat, vid) for _, cat, vid, _ in rows)
    by_split: dict[int, dict[str, set[VideoKey]]] = {}
    for sid, cat, vid, role in rows:
        buckets = by_split.setdefault(sid, {"train": set(), "test": set()})
        if role != "unused":
            buckets[role].add((cat, vid))
    splits = tuple(
        SplitSpec(
            id=sid,
            train_videos=frozenset(by_split[sid]["train"]),
            test_videos=frozenset(by_split[sid]["test"]),
        )
        for sid in sorted(by_split)
    )
    return SplitTable(splits=splits, universe=universe)


def bundled_manifest_path() -> Path:
    """Location of the manifest shipped inside the package."""
    return Path(resources.files("vabs").joinpath("data/splits.csv"))


def category_coverage_report(table: SplitTable) -> dict[int, tuple[str, ...]]:
    """Flag tested categories with no same-category training videos.

    Returns a mapping of split id to the offending category names; splits
    with full coverage are omitted, so a well-formed table yields {}.
    """
    report: dict[int, tuple[str, ...]] = {}
    for split in table.splits:
        train_cats = {cat for cat, _ in split.train_videos}
        missing = sorted(
            {cat for cat, _ in split.test_videos} - train_cats
        )
        if missing:
            report[split.id] = tuple(missing)
    return report
