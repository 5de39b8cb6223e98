"""Empirical ROC curves, AUC and confusion counts for angle scores.

A pixel is called a target when its angle is at most the threshold, so the
curve runs from the strictest threshold (nothing detected) to the loosest.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedRocError, ValidationError

__all__ = [
    "GroundTruthMask",
    "RocCurve",
    "auc_pairs",
    "confusion_at",
    "convexity_deficit",
    "roc",
]


@dataclass
class GroundTruthMask:
    """Boolean target labels on the ``(width, height)`` grid.

    Pixels in ``ignore`` belong to neither class.
    """

    labels: np.ndarray
    ignore: np.ndarray | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=bool)
        if self.labels.ndim != 2:
            raise ValidationError("ground-truth mask must be 2-D (width, height)")
        if self.ignore is None:
            self.ignore = np.zeros(self.labels.shape, dtype=bool)
        self.ignore = np.asarray(self.ignore, dtype=bool)
        if self.ignore.shape != self.labels.shape:
            raise ValidationError("ignore set must match the mask grid")

    @property
    def width(self) -> int:
        return self.labels.shape[0]

    @property
    def height(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple:
        return self.labels.shape

    @property
    def n_target(self) -> int:
        return int((self.labels & ~self.ignore).sum())

    @property
    def n_background(self) -> int:
        return int((~self.labels & ~self.ignore).sum())


@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    n_target: int
    n_background: int

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist()))

    @property
    def convexity_deficit(self) -> float:
        return convexity_deficit(self.fpr, self.tpr)

    def summary(self) -> dict:
        return {
            "auc": self.auc,
            "n_target": self.n_target,
            "n_background": self.n_background,
            "convexity_deficit": self.convexity_deficit,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "fpr", "tpr"])
            for row in zip(self.thresholds, self.fpr, self.tpr):
                writer.writerow([repr(float(v)) for v in row])

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def _split(scores, truth):
    angles = getattr(scores, "angles", scores)
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape != truth.shape:
        raise ValidationError(f"score grid {angles.shape} does not match mask grid {truth.shape}")
    valid = ~truth.ignore
    a = angles[valid]
    y = truth.labels[valid]
    if not y.any() or y.all():
        raise UndefinedRocError(
            f"ROC undefined with {int(y.sum())} target and {int((~y).sum())} background pixels"
        )
    return a, y


def roc(scores, truth: GroundTruthMask) -> RocCurve:
    """Exact empirical ROC: one point per distinct angle, AUC by trapezoids."""
    a, y = _split(scores, truth)
    order = np.argsort(a, kind="stable")
    a, y = a[order], y[order]
    # last occurrence of each distinct angle closes its tie group
    ends = np.flatnonzero(np.r_[a[1:] != a[:-1], True])
    tp = np.cumsum(y)[ends]
    fp = np.cumsum(~y)[ends]
    n_t, n_b = int(y.sum()), int((~y).sum())
    tpr = np.r_[0.0, tp / n_t]
    fpr = np.r_[0.0, fp / n_b]
    thresholds = np.r_[-math.inf, a[ends]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, fpr, tpr, auc, n_t, n_b)


def auc_pairs(scores, truth: GroundTruthMask) -> float:
    """AUC as the fraction of (target, background) pairs where the target has
    the smaller angle, ties counted one half."""
    a, y = _split(scores, truth)
    bg = np.sort(a[~y])
    tg = a[y]
    below = np.searchsorted(bg, tg, side="left")
    upto = np.searchsorted(bg, tg, side="right")
    wins = (len(bg) - upto).sum() + 0.5 * (upto - below).sum()
    return float(wins / (len(tg) * len(bg)))


def convexity_deficit(fpr, tpr) -> float:
    """Area between the ROC's upper convex hull and the curve itself."""
    pts = sorted(set(zip(np.asarray(fpr, float).tolist(), np.asarray(tpr, float).tolist())))
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    hx, hy = np.array(hull).T
    area_hull = float(np.sum(np.diff(hx) * (hy[1:] + hy[:-1]) / 2.0))
    fpr, tpr = np.asarray(fpr, float), np.asarray(tpr, float)
    area = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return max(0.0, area_hull - area)


def confusion_at(scores, truth: GroundTruthMask, tau: float) -> dict:
    angles = np.asarray(getattr(scores, "angles", scores), dtype=np.float64)
    if angles.shape != truth.shape:
        raise ValidationError(f"score grid {angles.shape} does not match mask grid {truth.shape}")
    valid = ~truth.ignore
    hit = (angles <= tau)[valid]
    y = truth.labels[valid]
    tp = int((hit & y).sum())
    fp = int((hit & ~y).sum())
    tn = int((~hit & ~y).sum())
    fn = int((~hit & y).sum())

    def rate(num, den):
        return num / den if den else 0.0

    return {
        "TP": tp,
        "FP": fp,
        "TN": tn,
        "FN": fn,
        "TPR": rate(tp, tp + fn),
        "FPR": rate(fp, fp + tn),
        "precision": rate(tp, tp + fp),
    }
