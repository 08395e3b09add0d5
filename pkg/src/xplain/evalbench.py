"""Confusion-matrix metrics and model evaluation.

Averaging is macro (unweighted class mean) and every report says so. A
class with a zero denominator contributes 0 to precision/recall/F1 and is
listed in ``degenerate_classes`` instead of propagating NaN into reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMatrix
from .gateway import ModelHandle, predict_batch


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) int64, rows = true class, cols = predicted

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(self.counts < 0):
            raise ValueError("confusion counts must be non-negative")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_from_predictions(y_true, y_pred, num_classes: int) -> ConfusionMatrix:
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return ConfusionMatrix(counts)


@dataclass
class MetricsReport:
    precision: np.ndarray  # per class
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    degenerate_classes: list = field(default_factory=list)
    averaging: str = "macro"

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": {
                "precision": self.precision.tolist(),
                "recall": self.recall.tolist(),
                "f1": self.f1.tolist(),
                "support": self.support.tolist(),
            },
            "degenerate_classes": list(self.degenerate_classes),
            "averaging": self.averaging,
        }


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise EmptyMatrix("no evaluated samples")
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)
    degenerate = []
    precision = np.zeros(cm.num_classes)
    recall = np.zeros(cm.num_classes)
    f1 = np.zeros(cm.num_classes)
    for c in range(cm.num_classes):
        if predicted[c] > 0:
            precision[c] = tp[c] / predicted[c]
        if actual[c] > 0:
            recall[c] = tp[c] / actual[c]
        if precision[c] + recall[c] > 0:
            f1[c] = 2 * precision[c] * recall[c] / (precision[c] + recall[c])
        if predicted[c] == 0 or actual[c] == 0:
            degenerate.append(c)
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        support=actual.astype(np.int64),
        accuracy=float(tp.sum() / cm.total),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        degenerate_classes=degenerate,
    )


def evaluate(handle: ModelHandle, batches):
    """Accumulate top-class predictions over (images, labels) batches.

    ``batches`` yields normalized image batches with either integer labels
    or one-hot rows. Returns (ConfusionMatrix, MetricsReport).
    """
    c = handle.num_classes
    counts = np.zeros((c, c), dtype=np.int64)
    for x, y in batches:
        y = np.asarray(y)
        y_true = y.argmax(axis=1) if y.ndim == 2 else y.astype(np.int64)
        probs = predict_batch(handle, x)
        y_pred = probs.argmax(axis=1)
        np.add.at(counts, (y_true, y_pred), 1)
    cm = ConfusionMatrix(counts)
    return cm, compute_metrics(cm)
