"""Pixel-wise evaluation: confusion matrices and the false-positive test."""

from __future__ import annotations

import numpy as np

from .errors import DataError, ShapeError
from .labels import BRIDGES, IGNORE, NON_BRIDGE, SCENE_CLASSES

FP_SCENE_CLASSES = tuple(c for i, c in enumerate(SCENE_CLASSES) if i != BRIDGES)
FP_SCENE_INDICES = tuple(i for i in range(len(SCENE_CLASSES)) if i != BRIDGES)


class ConfusionMatrix:
    """K x K pixel counts, counts[truth][pred]; IGNORE pixels excluded."""

    def __init__(self, n_classes: int):
        self.n_classes = n_classes
        self.counts = np.zeros((n_classes, n_classes), dtype=np.int64)

    def accumulate(self, truth: np.ndarray, pred: np.ndarray) -> "ConfusionMatrix":
        if truth.shape != pred.shape:
            raise ShapeError(f"truth {truth.shape} vs pred {pred.shape}")
        valid = truth != IGNORE
        t = truth[valid].astype(np.int64)
        p = pred[valid].astype(np.int64)
        if t.size and (t.max() >= self.n_classes or p.max() >= self.n_classes):
            raise DataError("label values exceed the class count")
        self.counts += np.bincount(
            t * self.n_classes + p,
            minlength=self.n_classes ** 2).reshape(self.n_classes, self.n_classes)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        self.counts += other.counts
        return self

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        """trace/total; NaN when nothing was evaluated."""
        return float(np.trace(self.counts)) / self.total if self.total else float("nan")

    def recalls(self) -> np.ndarray:
        """Per-class recall; NaN for classes with no truth pixels."""
        row = self.counts.sum(axis=1).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(row > 0, np.diag(self.counts) / row, np.nan)

    def row_normalized(self) -> np.ndarray:
        row = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(row > 0, self.counts / row, np.nan)


def summarize(cm: ConfusionMatrix):
    """(total accuracy, row-normalized matrix)."""
    return cm.accuracy, cm.row_normalized()


def false_positive_report(component_preds, scene_truths):
    """Per-scene-class false-positive rates on bridge-free imagery.

    For each of the 9 non-bridge scene classes: the fraction of its truth
    pixels whose component prediction is anything but Non-bridge,
    pixel-weighted across images. Returns (rates, truth_pixel_counts),
    arrays of length 9 ordered like FP_SCENE_CLASSES; rates are NaN for
    classes with no truth pixels.
    """
    if len(component_preds) != len(scene_truths):
        raise ShapeError("prediction/truth list length mismatch")
    hits = np.zeros(len(FP_SCENE_INDICES), dtype=np.int64)
    totals = np.zeros(len(FP_SCENE_INDICES), dtype=np.int64)
    for pred, truth in zip(component_preds, scene_truths):
        if pred.shape != truth.shape:
            raise ShapeError(f"pred {pred.shape} vs scene truth {truth.shape}")
        if (truth == BRIDGES).any():
            raise DataError("false-positive test requires bridge-free truth maps")
        positive = pred != NON_BRIDGE
        for j, c in enumerate(FP_SCENE_INDICES):
            m = truth == c
            totals[j] += int(m.sum())
            hits[j] += int((m & positive).sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        rates = np.where(totals > 0, hits / totals, np.nan)
    return rates, totals
