"""Scoring runs against the dataset and writing delimited reports.

A report directory holds `per_video.csv`, `per_category.csv`, and
`overall.csv` (shared header: method, category, video, then the seven
metrics), plus a per-category F-measure bar chart.  Ranking reports compare
several report directories and add `ranking.csv`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import load_descriptor, load_label_map, load_roi, mask_path, read_image
from .errors import InconsistentTableError, MissingMaskError
from .evaluation import (
    ConfusionCounts,
    METRIC_FIELDS,
    MetricVector,
    RankingScores,
    aggregate,
    confusion,
    rankings,
    video_metrics,
)
from .frames import decode_mask
from .pipeline import evaluated_frames
from .plots import f1_bar_chart
from .splits import SplitSpec

REPORT_HEADER = ("method", "category", "video") + METRIC_FIELDS


@dataclass(frozen=True)
class EvaluationReport:
    method: str
    per_video: dict[str, MetricVector]
    per_category: dict[str, MetricVector]
    overall: MetricVector
    video_to_category: dict[str, str]


def _format(value) -> str:
    return "" if value is None else repr(float(value))


def _write_rows(path: Path, rows: list[tuple]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        writer.writerows(rows)


def score_video(
    masks_root: str | Path,
    dataset_root: str | Path,
    category: str,
    video: str,
) -> ConfusionCounts:
    """Accumulated confusion counts over every evaluated frame of a video."""
    descriptor = load_descriptor(dataset_root, category, video)
    roi = load_roi(dataset_root, category, video)
    total = ConfusionCounts()
    for t in evaluated_frames(descriptor):
        gt = load_label_map(dataset_root, category, video, t, roi)
        path = mask_path(masks_root, category, video, t)
        if not path.exists():
            raise MissingMaskError(
                f"{category}/{video}: no mask for frame {t} at {path}"
            )
        pred = decode_mask(np.asarray(read_image(path)))
        total = total + confusion(pred, gt)
    return total


def evaluate_run(
    masks_root: str | Path,
    dataset_root: str | Path,
    split: SplitSpec,
    out_dir: str | Path,
    method: str = "vabs",
) -> EvaluationReport:
    """Score a run's masks on the split's test videos and write the report."""
    out_dir = Path(out_dir)
    per_video: dict[str, MetricVector] = {}
    video_to_category: dict[str, str] = {}
    for category, video in sorted(split.test_videos):
        key = f"{category}/{video}"
        counts = score_video(masks_root, dataset_root, category, video)
        per_video[key] = video_metrics(counts)
        video_to_category[key] = category
    per_category, overall = aggregate(per_video, video_to_category)

    _write_rows(
        out_dir / "per_video.csv",
        [
            (method, video_to_category[key], key.split("/", 1)[1])
            + tuple(_format(v) for v in per_video[key].as_dict().values())
            for key in sorted(per_video)
        ],
    )
    _write_rows(
        out_dir / "per_category.csv",
        [
            (method, category, "")
            + tuple(_format(v) for v in vec.as_dict().values())
            for category, vec in per_category.items()
        ],
    )
    _write_rows(
        out_dir / "overall.csv",
        [
            (method, "", "")
            + tuple(_format(v) for v in overall.as_dict().values())
        ],
    )
    f1_bar_chart(
        per_category,
        out_dir / "f1_by_category.png",
        title=f"F-measure by category ({method})",
    )
    return EvaluationReport(
        method=method,
        per_video=per_video,
        per_category=per_category,
        overall=overall,
        video_to_category=video_to_category,
    )


def read_per_category(path: str | Path) -> tuple[str, dict[str, MetricVector]]:
    """Load one report's per-category table; returns (method, table)."""
    rows: dict[str, MetricVector] = {}
    method = None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for record in reader:
            method = record["method"]
            values = {
                name: (float(record[name]) if record[name] != "" else None)
                for name in METRIC_FIELDS
            }
            rows[record["category"]] = MetricVector(**values)
    if method is None or not rows:
        raise InconsistentTableError(f"{path} holds no category rows")
    return method, rows


def rank_reports(
    report_dirs: list[str | Path], out_dir: str | Path
) -> dict[str, RankingScores]:
    """Compare several report directories and write `ranking.csv`.

    Ranks follow the local average-ranking convention; they are comparisons
    among the supplied runs only, not benchmark-server scores.
    """
    table: dict[str, dict[str, MetricVector]] = {}
    for report_dir in report_dirs:
        method, rows = read_per_category(Path(report_dir) / "per_category.csv")
        if method in table:
            raise InconsistentTableError(
                f"duplicate method name {method!r} among reports"
            )
        table[method] = rows
    scores = rankings(table)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "ranking.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("method", "R", "R_cat"))
        for method in sorted(scores):
            writer.writerow(
                (
                    method,
                    repr(float(scores[method].R)),
                    repr(float(scores[method].R_cat)),
                )
            )
    return scores
