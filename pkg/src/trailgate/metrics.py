"""Confusion matrices and the detection metric suite.

Undefined ratios (zero denominator) are ``None`` rather than 0; the macro
averages count a missing F1 or FAR as 0.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

METRIC_KEYS = ("accuracy", "recall", "specificity", "far", "precision", "f1")


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # [true][pred]
    class_names: tuple

    @property
    def total(self):
        return int(self.counts.sum())

    def accuracy(self):
        t = self.total
        return float(np.trace(self.counts) / t) if t else None

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\pred", *self.class_names])
            for name, row in zip(self.class_names, self.counts):
                w.writerow([name, *(int(v) for v in row)])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        names = tuple(rows[0][1:])
        counts = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
        return cls(counts, names)


@dataclass(frozen=True)
class MetricSet:
    accuracy: float | None
    recall: float | None
    specificity: float | None
    far: float | None
    precision: float | None
    f1: float | None

    def to_dict(self):
        return asdict(self)


def confusion(y_true, y_pred, m, class_names=None) -> ConfusionMatrix:
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError("label arrays differ in length")
    if t.size and (max(t.max(), p.max()) >= m or min(t.min(), p.min()) < 0):
        raise ValueError(f"label index outside 0..{m - 1}")
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    names = tuple(class_names) if class_names is not None else tuple(str(i) for i in range(m))
    return ConfusionMatrix(counts, names)


def _ratio(num, den):
    return float(num / den) if den else None


def metrics_from_counts(tp, tn, fp, fn) -> MetricSet:
    recall = _ratio(tp, tp + fn)
    precision = _ratio(tp, tp + fp)
    if recall is None or precision is None:
        f1 = None
    elif precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricSet(
        accuracy=_ratio(tp + tn, tp + tn + fp + fn),
        recall=recall,
        specificity=_ratio(tn, fp + tn),
        far=_ratio(fp, fp + tn),
        precision=precision,
        f1=f1,
    )


def binary_metrics(cm) -> MetricSet:
    """Class 1 ("attack") is the positive class."""
    c = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    if c.shape != (2, 2):
        raise ValueError("binary metrics need a 2x2 matrix")
    return metrics_from_counts(tp=int(c[1, 1]), tn=int(c[0, 0]), fp=int(c[0, 1]), fn=int(c[1, 0]))


def one_vs_rest_counts(cm, c):
    m = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    tp = int(m[c, c])
    fp = int(m[:, c].sum() - tp)
    fn = int(m[c, :].sum() - tp)
    tn = int(m.sum() - tp - fp - fn)
    return tp, tn, fp, fn


def per_class_metrics(cm: ConfusionMatrix) -> dict:
    if cm.counts.shape[0] < 2:
        raise ValueError("need at least two classes")
    return {name: metrics_from_counts(*one_vs_rest_counts(cm, c))
            for c, name in enumerate(cm.class_names)}


def macro(per_class: dict):
    if not per_class:
        raise ValueError("empty metric map")
    sets = list(per_class.values())
    f1 = sum(s.f1 or 0.0 for s in sets) / len(sets)
    far = sum(s.far or 0.0 for s in sets) / len(sets)
    return f1, far


def metrics_report(cm: ConfusionMatrix) -> dict:
    """JSON-ready metric bundle with fixed key names."""
    out = {"accuracy": cm.accuracy(), "n_samples": cm.total, "class_names": list(cm.class_names)}
    per = per_class_metrics(cm)
    out["per_class"] = {k: v.to_dict() for k, v in per.items()}
    out["macro_f1"], out["macro_far"] = macro(per)
    if cm.counts.shape == (2, 2):
        out.update(binary_metrics(cm).to_dict())
    return out
