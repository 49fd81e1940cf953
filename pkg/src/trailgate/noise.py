"""Confident learning: per-class thresholds, confident joint, abnormal samples.

The confident class of a sample is its global argmax class, accepted only
when that probability reaches the class threshold. Samples failing the test
are "unconfident" and are not counted.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.model_selection import StratifiedKFold

from .dataset import FeatureTable, LabelVector

UNCONFIDENT = -1


def _xy(table, labels):
    X = table.data if isinstance(table, FeatureTable) else np.asarray(table, dtype=np.float64)
    y = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels, dtype=np.int64)
    return X, y


@dataclass(frozen=True, eq=False)
class ProbMatrix:
    probs: np.ndarray
    fold_id: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("probabilities must be an n x m matrix")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("probabilities outside [0, 1]")
        if not np.allclose(p.sum(axis=1), 1.0, atol=1e-9, rtol=0):
            raise ValueError("probability rows must sum to 1")


def _aligned_proba(model, X, m):
    p = np.asarray(model.predict_proba(X), dtype=np.float64)
    classes = getattr(model, "classes_", np.arange(p.shape[1]))
    out = np.zeros((X.shape[0], m))
    out[:, np.asarray(classes, dtype=np.int64)] = p
    return out


def oof_probabilities(table, labels, k, model_factory, seed=0) -> ProbMatrix:
    """Out-of-fold class probabilities from stratified k-fold.

    ``model_factory(fold_seed)`` must return an object with ``fit(X, y)`` and
    ``predict_proba(X)`` (and ``classes_`` if it can drop absent classes).
    """
    X, y = _xy(table, labels)
    m = labels.n_classes if isinstance(labels, LabelVector) else int(y.max()) + 1
    if k < 2:
        raise ValueError("need at least two folds")
    present, counts = np.unique(y, return_counts=True)
    if present.size < 2:
        raise ValueError("confident learning needs at least two classes")
    if counts.min() < k:
        warnings.warn(f"a class has fewer than {k} samples; folds are stratified best-effort",
                      stacklevel=2)
    probs = np.zeros((X.shape[0], m))
    fold_id = np.full(X.shape[0], -1, dtype=np.int64)
    skf = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        splits = list(skf.split(X, y))
    for f, (tr, te) in enumerate(splits):
        model = model_factory(seed * 1000 + f)
        model.fit(X[tr], y[tr])
        probs[te] = _aligned_proba(model, X[te], m)
        fold_id[te] = f
    return ProbMatrix(probs, fold_id)


def class_thresholds(probs, labels, n_classes=None) -> np.ndarray:
    P = probs.probs if isinstance(probs, ProbMatrix) else np.asarray(probs, dtype=np.float64)
    y = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels, dtype=np.int64)
    m = n_classes or P.shape[1]
    out = np.empty(m)
    for j in range(m):
        mask = y == j
        if not mask.any():
            name = labels.class_names[j] if isinstance(labels, LabelVector) else j
            raise ValueError(f"class {name} has no samples")
        out[j] = P[mask, j].mean()
    return out


def confident_joint(probs, labels, thresholds):
    """Return ``(C, assignments)``; ``assignments[i]`` is the confident class or -1."""
    P = probs.probs if isinstance(probs, ProbMatrix) else np.asarray(probs, dtype=np.float64)
    y = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels, dtype=np.int64)
    m = P.shape[1]
    best = np.argmax(P, axis=1)  # first max wins ties
    confident = P[np.arange(P.shape[0]), best] >= np.asarray(thresholds)[best]
    assignments = np.where(confident, best, UNCONFIDENT)
    C = np.zeros((m, m), dtype=np.int64)
    np.add.at(C, (y[confident], best[confident]), 1)
    return C, assignments


def joint_distribution(C, labels, n_classes=None) -> np.ndarray:
    """Row-calibrate ``C`` to the given class sizes, then normalize to sum 1."""
    C = np.asarray(C, dtype=np.float64)
    y = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels, dtype=np.int64)
    m = C.shape[0]
    sizes = np.bincount(y, minlength=m).astype(np.float64)
    row = C.sum(axis=1)
    calibrated = np.zeros_like(C)
    nz = row > 0
    if not nz.any():
        raise ValueError("no confident samples; joint distribution undefined")
    calibrated[nz] = C[nz] * (sizes[nz] / row[nz])[:, None]
    return calibrated / calibrated.sum()


def extract_abnormal(assignments, labels) -> np.ndarray:
    y = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels, dtype=np.int64)
    a = np.asarray(assignments)
    return np.unique(np.flatnonzero((a != UNCONFIDENT) & (a != y)))


@dataclass(frozen=True, eq=False)
class NoiseReport:
    thresholds: np.ndarray
    counting: np.ndarray
    joint: np.ndarray
    abnormal_indices: np.ndarray
    unconfident_indices: np.ndarray
    class_names: tuple = ()

    def abnormal_cells(self):
        """Abnormal sample count per (given, predicted) cell: the off-diagonal of C."""
        cells = self.counting.copy()
        np.fill_diagonal(cells, 0)
        return cells

    def to_json(self):
        cells = self.abnormal_cells()
        names = self.class_names or tuple(str(i) for i in range(len(self.thresholds)))
        return {
            "class_names": list(names),
            "thresholds": [float(v) for v in self.thresholds],
            "C": self.counting.astype(int).tolist(),
            "D": [[float(v) for v in row] for row in self.joint],
            "abnormal_count": int(self.abnormal_indices.size),
            "unconfident_count": int(self.unconfident_indices.size),
            "abnormal_by_cell": [
                {"given": names[i], "predicted": names[j], "count": int(cells[i, j])}
                for i in range(cells.shape[0]) for j in range(cells.shape[1]) if i != j
            ],
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def noise_report(probs, labels) -> tuple:
    """Run thresholds, joint and extraction; returns ``(report, assignments)``."""
    thr = class_thresholds(probs, labels)
    C, assign = confident_joint(probs, labels, thr)
    D = joint_distribution(C, labels, n_classes=C.shape[0])
    abnormal = extract_abnormal(assign, labels)
    unconfident = np.flatnonzero(assign == UNCONFIDENT)
    names = labels.class_names if isinstance(labels, LabelVector) else ()
    return NoiseReport(thr, C, D, abnormal, unconfident, names), assign


def dedupe_rows(X, y):
    """First occurrence of each distinct (row, label) pair, in original order."""
    key = np.hstack([np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)[:, None]])
    _, first = np.unique(key, axis=0, return_index=True)
    first.sort()
    return first
