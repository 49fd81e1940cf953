"""Incremental feature selection over a pruned information-gain ranking."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureTable, LabelVector, split_indices
from .errors import StageError

log = logging.getLogger(__name__)

PEAK = "peak"
DMA = "dma"
DMA_THRESHOLD = 0.005


def stop_rule_peak(accuracies) -> int:
    """Smallest k (1-based) reaching the maximum accuracy."""
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.size == 0:
        raise ValueError("empty curve")
    return int(np.argmax(acc)) + 1


def window_means(accuracies):
    """MA(k) = mean(acc[k-1], acc[k], acc[k+1]) for k = 2..K-1 (1-based)."""
    acc = np.asarray(accuracies, dtype=np.float64)
    return (acc[:-2] + acc[1:-1] + acc[2:]) / 3.0


def dma_values(accuracies):
    """DMA(k) = MA(k) - MA(k-1) for k = 3..K-1, in that order."""
    return np.diff(window_means(accuracies))


def stop_rule_dma(accuracies, threshold=DMA_THRESHOLD) -> int:
    """Keep features 1..K where K counts the leading DMA values above ``threshold``.

    The first evaluable DMA compares the windows centred on features 2 and 3,
    so at least four curve points are needed; shorter curves use the peak rule.
    A curve whose first DMA already fails keeps a single feature.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.size < 4:
        log.warning("DMA rule needs four points, got %d; using peak accuracy", acc.size)
        return stop_rule_peak(acc)
    passed = 0
    for v in dma_values(acc):
        if v > threshold:
            passed += 1
        else:
            break
    return max(1, passed)


@dataclass
class IfsCurve:
    points: list
    chosen_k: int
    chosen_features: tuple
    feature_order: tuple = ()
    train_indices: np.ndarray | None = None
    validation_indices: np.ndarray | None = None
    n_abnormal: int = 0

    @property
    def accuracies(self):
        return [a for _, a in self.points]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "accuracy", "chosen"])
            for k, acc in self.points:
                w.writerow([k, repr(float(acc)), "yes" if k == self.chosen_k else "no"])


def choose_k(accuracies, stop_rule=PEAK, dma_threshold=DMA_THRESHOLD):
    if stop_rule == PEAK:
        return stop_rule_peak(accuracies)
    if stop_rule == DMA:
        return stop_rule_dma(accuracies, dma_threshold)
    raise ValueError(f"unknown stop rule {stop_rule!r}")


def run_ifs(table: FeatureTable, labels: LabelVector, survivors, abnormal_x=None, abnormal_y=None,
            classifier_factory=None, stop_rule=PEAK, seed=0, ratio=0.7,
            dma_threshold=DMA_THRESHOLD, max_k=None) -> IfsCurve:
    """Forward inclusion in ranking order with abnormal rows injected into the training part.

    ``classifier_factory(k)`` returns a fresh estimator with ``fit``/``predict``.
    """
    survivors = [int(j) for j in survivors]
    if not survivors:
        raise ValueError("no surviving features to select from")
    X, y = table.data, labels.labels
    tr, va = split_indices(table.n_rows, ratio, seed)
    X_tr, y_tr = X[tr], y[tr]
    n_ab = 0
    if abnormal_x is not None and len(abnormal_x):
        abnormal_x = np.asarray(abnormal_x, dtype=np.float64)
        if abnormal_x.shape[1] != X.shape[1]:
            raise ValueError("abnormal rows do not share the table schema")
        X_tr = np.vstack([X_tr, abnormal_x])
        y_tr = np.concatenate([y_tr, np.asarray(abnormal_y, dtype=np.int64)])
        n_ab = abnormal_x.shape[0]
    X_va, y_va = X[va], y[va]

    limit = len(survivors) if max_k is None else min(max_k, len(survivors))
    points = []
    for k in range(1, limit + 1):
        cols = survivors[:k]
        try:
            clf = classifier_factory(k)
            clf.fit(X_tr[:, cols], y_tr)
            acc = float(np.mean(clf.predict(X_va[:, cols]) == y_va))
        except Exception as exc:
            raise StageError("ifs", f"classifier failed at k={k}: {exc}") from exc
        log.info("IFS k=%d accuracy=%.5f", k, acc)
        points.append((k, acc))
    chosen = choose_k([a for _, a in points], stop_rule, dma_threshold)
    names = tuple(table.feature_names[j] for j in survivors[:chosen])
    return IfsCurve(points, chosen, names, tuple(survivors), tr, va, n_ab)
