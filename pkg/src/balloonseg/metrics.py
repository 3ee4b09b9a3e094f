"""Validation metrics: BCE, binarized Dice coefficient, precision/recall/F1.

Counts are pooled over every pixel of every sample (micro-averaging), so
the result is independent of sample order. Empty-denominator conventions:
precision with no predicted positives is 1 when there are also no actual
positives, else 0; recall mirrored; F1 of two zeros is 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import BCE_EPS


@dataclass
class MetricsReport:
    bce: float
    dice_coeff: float
    precision: float
    recall: float
    f1: float
    epoch: int = 0


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 1.0 if tp + fn == 0 else 0.0
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 1.0 if tp + fp == 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


class PixelAccumulator:
    """Pools pixel counts and the BCE sum across an evaluation set."""

    def __init__(self, threshold: float = 0.5):
        if not 0.0 < threshold < 1.0:
            raise ValueError(f"threshold must be in (0,1), got {threshold}")
        self.threshold = threshold
        self.tp = self.fp = self.fn = 0
        self.bce_sum = 0.0
        self.n_pixels = 0

    def add(self, target: np.ndarray, prob: np.ndarray) -> None:
        t = np.asarray(target) >= 0.5
        pred = np.asarray(prob) >= self.threshold
        self.tp += int((pred & t).sum())
        self.fp += int((pred & ~t).sum())
        self.fn += int((~pred & t).sum())
        pc = np.clip(prob, BCE_EPS, 1.0 - BCE_EPS)
        tf = t.astype(np.float64)
        self.bce_sum += float(-(tf * np.log(pc) + (1.0 - tf) * np.log1p(-pc)).sum())
        self.n_pixels += t.size

    def report(self, epoch: int = 0) -> MetricsReport:
        precision, recall, f1 = precision_recall_f1(self.tp, self.fp, self.fn)
        denom = 2 * self.tp + self.fp + self.fn
        dice = 2 * self.tp / denom if denom > 0 else 1.0
        bce = self.bce_sum / self.n_pixels if self.n_pixels else 0.0
        return MetricsReport(bce, dice, precision, recall, f1, epoch)


def evaluate(net, batches, threshold: float = 0.5, epoch: int = 0) -> MetricsReport:
    """Run eval-mode prediction over (image, mask) pairs and pool the pixels."""
    acc = PixelAccumulator(threshold)
    for x, y in batches:
        acc.add(y, net.forward(x, train=False))
    return acc.report(epoch)


def median_summary(reports: list[MetricsReport], last: int = 5) -> dict[str, float]:
    """Per-metric median over the final ``last`` epoch reports."""
    tail = reports[-last:]
    if not tail:
        raise ValueError("no epoch reports to summarize")
    fields = ("bce", "dice_coeff", "precision", "recall", "f1")
    return {f: float(np.median([getattr(r, f) for r in tail])) for f in fields}
