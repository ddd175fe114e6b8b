"""Confusion accounting, the seven change-detection metrics, two-level
aggregation, and average-rank comparison scores.

Counts are plain integers and every division happens in exact rational
arithmetic, so identities like recall + false-negative rate = 1 hold
bit-for-bit and only the final report formatting rounds anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from .errors import (
    EmptyCategoryError,
    InconsistentTableError,
    NoEvaluatedPixelsError,
    ShapeMismatchError,
)
from .frames import BinaryMask, Label, LabelMap

METRIC_FIELDS = ("Re", "Sp", "FPR", "FNR", "PWC", "Pr", "F1")

# Orientation per metric: True when larger values are better.
HIGHER_BETTER = {
    "Re": True, "Sp": True, "FPR": False, "FNR": False,
    "PWC": False, "Pr": True, "F1": True,
}

Value = Fraction | float | None


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ShapeMismatchError(f"{name} must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp,
            self.tn + other.tn, self.fn + other.fn,
        )

    @property
    def evaluated(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def positives(self) -> int:
        """Ground-truth foreground pixels that entered the accounting."""
        return self.tp + self.fn


@dataclass(frozen=True)
class MetricVector:
    """The seven scores; None marks a value excluded from aggregation."""

    Re: Value
    Sp: Value
    FPR: Value
    FNR: Value
    PWC: Value
    Pr: Value
    F1: Value

    def __post_init__(self):
        for name in METRIC_FIELDS:
            v = getattr(self, name)
            if v is None:
                continue
            limit = 100 if name == "PWC" else 1
            if not 0 <= v <= limit:
                raise InconsistentTableError(
                    f"{name} = {v} outside [0, {limit}]"
                )

    def as_dict(self) -> dict[str, Value]:
        return {name: getattr(self, name) for name in METRIC_FIELDS}


def confusion(pred: BinaryMask, gt: LabelMap) -> ConfusionCounts:
    """Count agreement between a predicted mask and a reference label map.

    Unknown-motion and outside-of-interest pixels never enter the counts;
    hard shadow counts as reference background; foreground is the positive
    class.
    """
    if pred.shape != gt.shape:
        raise ShapeMismatchError(
            f"prediction {pred.shape} vs reference {gt.shape}"
        )
    labels = gt.labels
    p = pred.values.astype(bool)
    positive = labels == Label.FOREGROUND
    negative = (labels == Label.BACKGROUND) | (labels == Label.HARD_SHADOW)
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & positive)),
        fp=int(np.count_nonzero(p & negative)),
        tn=int(np.count_nonzero(~p & negative)),
        fn=int(np.count_nonzero(~p & positive)),
    )


def _ratio(num: int, den: int) -> Fraction:
    # Zero denominator resolves to 0 for every metric.
    return Fraction(num, den) if den else Fraction(0)


def metrics(c: ConfusionCounts) -> MetricVector:
    """The seven scores from one set of counts, in exact rationals."""
    if c.evaluated == 0:
        raise NoEvaluatedPixelsError("no pixels were evaluated")
    re = _ratio(c.tp, c.tp + c.fn)
    sp = _ratio(c.tn, c.tn + c.fp)
    fpr = _ratio(c.fp, c.fp + c.tn)
    fnr = _ratio(c.fn, c.tp + c.fn)
    pwc = 100 * _ratio(c.fn + c.fp, c.evaluated)
    pr = _ratio(c.tp, c.tp + c.fp)
    f1 = 2 * pr * re / (pr + re) if pr + re else Fraction(0)
    return MetricVector(Re=re, Sp=sp, FPR=fpr, FNR=fnr, PWC=pwc, Pr=pr, F1=f1)


def video_metrics(c: ConfusionCounts) -> MetricVector:
    """Like :func:`metrics`, but a video without any reference-foreground
    pixels reports None for the positive-dependent scores so aggregation
    skips them instead of averaging in a meaningless 0."""
    vec = metrics(c)
    if c.positives == 0:
        vec = MetricVector(
            Re=None, Sp=vec.Sp, FPR=vec.FPR, FNR=None,
            PWC=vec.PWC, Pr=None, F1=None,
        )
    return vec


def _mean(values: list[Fraction | float]) -> Fraction | float:
    total = values[0]
    for v in values[1:]:
        total = total + v
    return total / len(values)


def _mean_vectors(vectors: list[MetricVector]) -> MetricVector:
    fields: dict[str, Value] = {}
    for name in METRIC_FIELDS:
        present = [
            getattr(v, name) for v in vectors if getattr(v, name) is not None
        ]
        fields[name] = _mean(present) if present else None
    return MetricVector(**fields)


def aggregate(
    per_video: Mapping[str, MetricVector],
    video_to_category: Mapping[str, str],
) -> tuple[dict[str, MetricVector], MetricVector]:
    """Mean within each category, then mean of the category means.

    Videos weigh equally inside their category and categories weigh equally
    overall.  None entries are skipped at both levels.
    """
    if not per_video:
        raise EmptyCategoryError("no videos to aggregate")
    groups: dict[str, list[MetricVector]] = {}
    for video, vector in per_video.items():
        try:
            category = video_to_category[video]
        except KeyError:
            raise EmptyCategoryError(
                f"video {video!r} has no category assignment"
            ) from None
        groups.setdefault(category, []).append(vector)
    per_category = {
        category: _mean_vectors(vectors)
        for category, vectors in sorted(groups.items())
    }
    overall = _mean_vectors(list(per_category.values()))
    return per_category, overall


# --- rankings ----------------------------------------------------------------

RankingInput = Mapping[str, Mapping[str, MetricVector]]


@dataclass(frozen=True)
class RankingScores:
    R: Fraction
    R_cat: Fraction


def _average_ranks(values: list, higher_better: bool) -> list[Fraction]:
    """Rank 1 is best; equal values share the mean of their positions."""
    n = len(values)
    order = sorted(range(n), key=lambda i: values[i], reverse=higher_better)
    ranks: list[Fraction] = [Fraction(0)] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = Fraction(i + j, 2) + 1
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def rankings(table: RankingInput) -> dict[str, RankingScores]:
    """Average-rank scores across metrics (R) and across categories (R_cat).

    For every (category, metric) cell the methods are ranked with 1 best
    under the metric's orientation; R_cat averages those ranks over metrics
    and then categories.  R ranks the methods on their per-metric overall
    values (category means) and averages over metrics.
    """
    methods = sorted(table)
    if len(methods) < 2:
        raise InconsistentTableError("ranking needs at least two methods")
    categories = sorted(table[methods[0]])
    if not categories:
        raise InconsistentTableError("ranking needs at least one category")
    for m in methods:
        if sorted(table[m]) != categories:
            raise InconsistentTableError(
                f"method {m!r} covers categories {sorted(table[m])}, "
                f"expected {categories}"
            )
        for cat in categories:
            for name in METRIC_FIELDS:
                if getattr(table[m][cat], name) is None:
                    raise InconsistentTableError(
                        f"method {m!r} has no {name} value in {cat!r}"
                    )

    rank_sums = {m: Fraction(0) for m in methods}
    for cat in categories:
        for name in METRIC_FIELDS:
            column = [getattr(table[m][cat], name) for m in methods]
            for m, rank in zip(
                methods, _average_ranks(column, HIGHER_BETTER[name])
            ):
                rank_sums[m] += rank
    cells = len(categories) * len(METRIC_FIELDS)

    overall_rank_sums = {m: Fraction(0) for m in methods}
    for name in METRIC_FIELDS:
        column = [
            _mean([getattr(table[m][cat], name) for cat in categories])
            for m in methods
        ]
        for m, rank in zip(
            methods, _average_ranks(column, HIGHER_BETTER[name])
        ):
            overall_rank_sums[m] += rank

    return {
        m: RankingScores(
            R=overall_rank_sums[m] / len(METRIC_FIELDS),
            R_cat=rank_sums[m] / cells,
        )
        for m in methods
    }
