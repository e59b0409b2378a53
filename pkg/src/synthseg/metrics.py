"""Confusion matrices, per-class IoU (Jaccard index) and mIoU.

Ground-truth unlabelled points (id 0) are never counted. A class whose
TP + FP + FN is zero has undefined IoU and is left out of the mIoU average.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from synthseg.taxonomy import UNLABELLED, Taxonomy


class MetricsError(ValueError):
    pass


@dataclass(eq=False)
class ConfusionMatrix:
    """counts[g, p] = number of points with ground truth g predicted as p."""

    taxonomy: Taxonomy
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.taxonomy)
        if self.counts is None:
            self.counts = np.zeros((n, n), dtype=np.int64)
        else:
            c = np.asarray(self.counts, dtype=np.int64)
            if c.shape != (n, n):
                raise MetricsError(f"confusion matrix must be {n}x{n}")
            if np.any(c < 0):
                raise MetricsError("confusion counts must be non-negative")
            self.counts = c.copy()

    @property
    def n_classes(self) -> int:
        return len(self.taxonomy)

    def copy(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.taxonomy, self.counts)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.taxonomy != self.taxonomy:
            raise MetricsError("cannot merge matrices over different taxonomies")
        return ConfusionMatrix(self.taxonomy, self.counts + other.counts)

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix) and self.taxonomy == other.taxonomy
                and np.array_equal(self.counts, other.counts))

    __hash__ = None


def accumulate(cm: ConfusionMatrix, predicted, ground_truth) -> ConfusionMatrix:
    """Return a new matrix with the (gt, pred) pairs added; gt == 0 is skipped."""
    pred = np.asarray(predicted).reshape(-1)
    gt = np.asarray(ground_truth).reshape(-1)
    if pred.shape != gt.shape:
        raise MetricsError(f"length mismatch: {pred.size} predictions vs {gt.size} labels")
    n = cm.n_classes
    if pred.size:
        if min(pred.min(), gt.min()) < 0 or max(pred.max(), gt.max()) >= n:
            raise MetricsError(f"label ids must lie in [0, {n})")
    keep = gt != UNLABELLED
    flat = gt[keep].astype(np.int64) * n + pred[keep].astype(np.int64)
    add = np.bincount(flat, minlength=n * n).reshape(n, n)
    return ConfusionMatrix(cm.taxonomy, cm.counts + add)


def _check_class(cm: ConfusionMatrix, c: int) -> int:
    c = int(c)
    if c == UNLABELLED:
        raise MetricsError("unlabelled (0) is never scored")
    if not 0 < c < cm.n_classes:
        raise MetricsError(f"class id {c} outside taxonomy {cm.taxonomy.name}")
    return c


def iou_counts(cm: ConfusionMatrix, c: int) -> tuple[int, int, int]:
    """(TP, FP, FN) for class ``c``."""
    c = _check_class(cm, c)
    tp = int(cm.counts[c, c])
    fp = int(cm.counts[:, c].sum()) - tp
    fn = int(cm.counts[c, :].sum()) - tp
    return tp, fp, fn


def iou_exact(cm: ConfusionMatrix, c: int) -> Optional[Fraction]:
    tp, fp, fn = iou_counts(cm, c)
    denom = tp + fp + fn
    return None if denom == 0 else Fraction(tp, denom)


def iou(cm: ConfusionMatrix, c: int) -> Optional[float]:
    """TP / (TP + FP + FN), or None when the class never occurs."""
    q = iou_exact(cm, c)
    return None if q is None else q.numerator / q.denominator


@dataclass(frozen=True)
class IoUReport:
    taxonomy: Taxonomy
    per_class: dict
    miou: float
    scored_classes: tuple[int, ...]
    averaged_classes: tuple[int, ...]
    miou_exact: Fraction = Fraction(0)

    def format_table(self) -> str:
        names = self.taxonomy.names
        width = max(len(names[c]) for c in self.scored_classes)
        lines = [f"{'class':<{width}}  {'IoU':>7}"]
        for c in self.scored_classes:
            v = self.per_class[c]
            shown = "    n/a" if v is None else f"{v:7.4f}"
            lines.append(f"{names[c]:<{width}}  {shown}")
        lines.append(f"{'mIoU':<{width}}  {self.miou:7.4f}")
        skipped = [names[c] for c in self.scored_classes if c not in self.averaged_classes]
        if skipped:
            lines.append(f"(undefined, excluded from mIoU: {', '.join(skipped)})")
        return "\n".join(lines)

    def to_csv(self) -> str:
        names = self.taxonomy.names
        rows = ["class,iou"]
        for c in self.scored_classes:
            v = self.per_class[c]
            rows.append(f"{names[c]},{'' if v is None else repr(v)}")
        rows.append(f"miou,{self.miou!r}")
        return "\n".join(rows) + "\n"


def miou(cm: ConfusionMatrix, scored_classes: Optional[Iterable[int]] = None) -> IoUReport:
    """Mean IoU over ``scored_classes`` (default: every non-zero class)."""
    if scored_classes is None:
        scored = tuple(range(1, cm.n_classes))
    else:
        scored = tuple(dict.fromkeys(int(c) for c in scored_classes))
    if not scored:
        raise MetricsError("scored_classes must be non-empty")
    exact = {c: iou_exact(cm, c) for c in scored}
    defined = tuple(c for c in scored if exact[c] is not None)
    if not defined:
        raise MetricsError("every scored class has undefined IoU")
    mean = sum((exact[c] for c in defined), Fraction(0)) / len(defined)
    per_class = {c: (None if q is None else q.numerator / q.denominator) for c, q in exact.items()}
    return IoUReport(cm.taxonomy, per_class, mean.numerator / mean.denominator, scored, defined, mean)


def mean_of(values: Sequence[float]) -> float:
    """Arithmetic mean of defined IoU values (the mIoU formula on its own)."""
    vals = [v for v in values if v is not None]
    if not vals:
        raise MetricsError("no defined IoU values")
    return float(sum(Fraction(v) for v in vals) / len(vals))


def classes_by_name(taxonomy: Taxonomy, names: Iterable[str]) -> tuple[int, ...]:
    return tuple(taxonomy.id_of(n) for n in names)


DOMINANT_CLASSES = ("Building", "Road", "Sidewalk", "Vegetation", "Car")
