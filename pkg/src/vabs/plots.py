"""Report figures, rendered headlessly to image files."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import MetricVector


def f1_bar_chart(
    per_category: Mapping[str, MetricVector],
    path: str | Path,
    title: str = "F-measure by category",
) -> Path:
    """Bar chart of per-category F-measure; categories without a defined
    value are drawn at zero and marked."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(per_category)
    values = [
        float(per_category[n].F1) if per_category[n].F1 is not None else 0.0
        for n in names
    ]
    undefined = [n for n in names if per_category[n].F1 is None]

    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(names) + 1.5), 3.5))
    bars = ax.bar(range(len(names)), values, color="#4878cf")
    for i, name in enumerate(names):
        if name in undefined:
            bars[i].set_hatch("//")
            bars[i].set_color("#cccccc")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("F1")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def comparison_bar_chart(
    per_method_f1: Mapping[str, float],
    path: str | Path,
    title: str = "Overall F-measure by run",
) -> Path:
    """One bar per method/run, for ablation summaries."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(per_method_f1)
    values = [float(per_method_f1[n]) for n in names]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(names) + 1.5), 3.5))
    ax.bar(range(len(names)), values, color="#6aa84f")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("F1")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
