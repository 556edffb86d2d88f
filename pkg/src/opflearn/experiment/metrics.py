"""Regression and classification metrics, micro-aggregated over (sample, constraint) pairs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.functional import BCE_EPS


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def recall(self) -> float | None:
        """None when there are no positive labels."""
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def precision(self) -> float | None:
        """None when nothing was predicted positive."""
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None


def confusion(scores, labels, threshold: float = 0.5) -> Confusion:
    s = np.ravel(scores)
    y = np.ravel(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in size")
    pred = s >= threshold
    return Confusion(tp=int(np.sum(pred & y)), fp=int(np.sum(pred & ~y)),
                     tn=int(np.sum(~pred & ~y)), fn=int(np.sum(~pred & y)))


def roc_curve(scores, labels, extra_thresholds=(0.5,)) -> np.ndarray | None:
    """Rows (threshold, fpr, tpr), thresholds descending from +inf; fpr non-decreasing.

    Every distinct score is a threshold (predict positive when score ≥ t) plus
    ``extra_thresholds``. None when the labels are all one class.
    """
    s = np.ravel(np.asarray(scores, dtype=float))
    y = np.ravel(labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    thr = np.unique(np.concatenate([s, np.asarray(extra_thresholds, dtype=float)]))[::-1]
    pos = np.sort(s[y])
    neg = np.sort(s[~y])
    tp = len(pos) - np.searchsorted(pos, thr, side="left")
    fp = len(neg) - np.searchsorted(neg, thr, side="left")
    rows = np.column_stack([thr, fp / n_neg, tp / n_pos])
    return np.vstack([[np.inf, 0.0, 0.0], rows])


def auc(roc: np.ndarray | None) -> float | None:
    if roc is None:
        return None
    return float(np.trapezoid(roc[:, 2], roc[:, 1]) if hasattr(np, "trapezoid") else np.trapz(roc[:, 2], roc[:, 1]))


def bce(scores, labels) -> float:
    p = np.clip(np.ravel(scores), BCE_EPS, 1 - BCE_EPS)
    y = np.ravel(labels).astype(float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def mse(pred, target) -> float:
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shapes {pred.shape} and {target.shape} differ")
    return float(np.mean((pred - target) ** 2))


@dataclass
class ClassificationMetrics:
    bce: float
    recall: float | None
    precision: float | None
    auc: float | None
    roc: np.ndarray | None
    confusion: Confusion

    @property
    def undefined(self) -> list[str]:
        return [k for k in ("recall", "precision", "auc") if getattr(self, k) is None]

    def as_record(self) -> dict:
        return {"bce": self.bce, "recall": self.recall, "precision": self.precision, "auc": self.auc,
                "undefined": self.undefined, "tp": self.confusion.tp, "fp": self.confusion.fp,
                "tn": self.confusion.tn, "fn": self.confusion.fn}


def classification_metrics(scores, labels, threshold: float = 0.5) -> ClassificationMetrics:
    c = confusion(scores, labels, threshold)
    roc = roc_curve(scores, labels, (threshold,))
    return ClassificationMetrics(bce=bce(scores, labels), recall=c.recall, precision=c.precision,
                                 auc=auc(roc), roc=roc, confusion=c)
