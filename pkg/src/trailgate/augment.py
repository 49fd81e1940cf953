"""ADASYN oversampling of every class except the majority one."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from sklearn.neighbors import NearestNeighbors

from .dataset import FeatureTable, LabelVector


@dataclass(frozen=True)
class AugmentConfig:
    target_ratio: float = 1.0
    k_neighbors: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.target_ratio <= 1:
            raise ValueError("target_ratio must lie in (0, 1]")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


@dataclass
class AugmentReport:
    class_names: tuple
    original: dict
    synthetic: dict
    final: dict
    generation_counts: dict = field(default_factory=dict)  # class -> g_i per member, row order
    notes: list = field(default_factory=list)

    def rows(self):
        for c in sorted(self.original):
            yield (self.class_names[c], self.original[c], self.synthetic[c], self.final[c])

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["class", "before", "synthetic", "after"])
            w.writerows(self.rows())


def class_counts(labels) -> dict:
    """Exact per-class counts; accepts a LabelVector or any integer sequence."""
    arr = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels)
    return dict(sorted(Counter(arr.tolist()).items()))


def apportion(total, weights):
    """Largest-remainder split of ``total`` integers proportional to ``weights``."""
    weights = np.asarray(weights, dtype=np.float64)
    if total <= 0 or weights.size == 0:
        return np.zeros(weights.size, dtype=np.int64)
    s = weights.sum()
    if s <= 0:
        weights = np.ones_like(weights)
        s = weights.size
    quota = total * weights / s
    base = np.floor(quota).astype(np.int64)
    short = int(total - base.sum())
    if short > 0:
        # stable sort keeps row order among equal remainders
        order = np.argsort(-(quota - base), kind="stable")
        base[order[:short]] += 1
    return base


def adasyn(table: FeatureTable, labels: LabelVector, config: AugmentConfig = AugmentConfig()):
    """Return ``(augmented table, augmented labels, report)``.

    Original rows come first and are untouched; synthetic rows are appended
    class by class in ascending class order.
    """
    X = table.data
    y = labels.labels
    if X.shape[0] == 0:
        raise ValueError("cannot augment an empty table")
    if X.shape[0] != y.shape[0]:
        raise ValueError("table and labels differ in length")
    counts = class_counts(y)
    if len(counts) < 2:
        raise ValueError("ADASYN needs at least two classes")

    majority = max(counts, key=lambda c: (counts[c], -c))
    target = math.floor(config.target_ratio * counts[majority])
    k = config.k_neighbors

    minority_rows = np.flatnonzero(y != majority)
    n_query = min(k + 1, X.shape[0])
    nn = NearestNeighbors(n_neighbors=n_query).fit(X)
    _, neigh = nn.kneighbors(X[minority_rows])
    neighbors = {}
    for row, cand in zip(minority_rows, neigh):
        cand = cand[cand != row][:k]
        neighbors[int(row)] = cand

    new_rows, new_labels = [], []
    synthetic, gen_counts, notes = {}, {}, []
    for c in sorted(counts):
        synthetic[c] = 0
        if c == majority:
            continue
        G = max(0, target - counts[c])
        members = np.flatnonzero(y == c)
        if G == 0:
            gen_counts[c] = np.zeros(members.size, dtype=np.int64)
            continue
        rng = np.random.default_rng([config.seed, c])
        if members.size == 1:
            notes.append(f"class {labels.class_names[c]} has one sample; replicated")
            g = np.array([G], dtype=np.int64)
            pts = np.repeat(X[members], G, axis=0)
        else:
            ratio = np.array([np.count_nonzero(y[neighbors[int(i)]] != c) / k for i in members])
            g = apportion(G, ratio)
            parents = np.repeat(members, g)
            partners = np.empty_like(parents)
            pos = 0
            for i, gi in zip(members, g):
                if gi == 0:
                    continue
                same = neighbors[int(i)][y[neighbors[int(i)]] == c]
                if same.size == 0:
                    same = members[members != i]
                partners[pos:pos + gi] = rng.choice(same, size=gi)
                pos += gi
            lam = rng.random((parents.size, 1))
            a, b = X[parents], X[partners]
            pts = np.clip(a + lam * (b - a), np.minimum(a, b), np.maximum(a, b))
        gen_counts[c] = g
        synthetic[c] = int(G)
        new_rows.append(pts)
        new_labels.append(np.full(G, c, dtype=np.int64))

    if new_rows:
        out_table = table.append_rows(np.vstack(new_rows))
        out_labels = labels.append(np.concatenate(new_labels))
    else:
        out_table, out_labels = table, labels
    final = {c: counts[c] + synthetic[c] for c in counts}
    report = AugmentReport(labels.class_names, dict(counts), synthetic, final, gen_counts, notes)
    return out_table, out_labels, report
