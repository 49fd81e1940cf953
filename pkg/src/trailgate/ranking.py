"""Information-gain feature scoring and correlation-based redundancy pruning."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .dataset import FeatureTable, LabelVector

NO_THRESHOLD = float("nan")


def _labels(labels):
    return labels.labels if isinstance(labels, LabelVector) else np.asarray(labels)


def entropy_from_counts(counts):
    """Shannon entropy in bits along the last axis of a count array."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, counts / total, 0.0)
        terms = np.where(p > 0, p * np.log2(p), 0.0)
    return -terms.sum(axis=-1)


def entropy(labels) -> float:
    y = _labels(labels)
    if y.size == 0:
        raise ValueError("entropy of an empty label set")
    _, counts = np.unique(y, return_counts=True)
    return float(entropy_from_counts(counts))


def info_gain_discrete(column, labels) -> float:
    x = np.asarray(column)
    y = _labels(labels)
    if x.shape[0] != y.shape[0]:
        raise ValueError("column and labels differ in length")
    if y.size == 0:
        return 0.0
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    table = np.zeros((xi.max() + 1, yi.max() + 1))
    np.add.at(table, (xi, yi), 1)
    n = y.size
    h_y = float(entropy_from_counts(table.sum(axis=0)))
    cond = float(np.sum(table.sum(axis=1) / n * entropy_from_counts(table)))
    return max(0.0, h_y - cond)


def candidate_thresholds(column):
    """Midpoints of adjacent distinct sorted values, minus the column extremes."""
    u = np.unique(np.asarray(column, dtype=np.float64))
    if u.size < 2:
        return np.empty(0)
    mids = np.unique((u[:-1] + u[1:]) / 2.0)
    return mids[(mids != u[0]) & (mids != u[-1])]


def info_gain_continuous(column, labels):
    """Best single binary split; lower side is ``x < t``, higher is ``x >= t``.

    Returns ``(gain, threshold)``; a column with no candidate threshold yields
    ``(0.0, nan)``.
    """
    x = np.asarray(column, dtype=np.float64)
    y = _labels(labels)
    if x.shape[0] != y.shape[0]:
        raise ValueError("column and labels differ in length")
    cands = candidate_thresholds(x)
    if cands.size == 0:
        return 0.0, NO_THRESHOLD
    n = y.size
    _, yi = np.unique(y, return_inverse=True)
    m = yi.max() + 1
    order = np.argsort(x, kind="stable")
    xs = x[order]
    onehot = np.zeros((n, m))
    onehot[np.arange(n), yi[order]] = 1.0
    cum = np.vstack([np.zeros((1, m)), np.cumsum(onehot, axis=0)])
    total = cum[-1]
    n_low = np.searchsorted(xs, cands, side="left")
    low = cum[n_low]
    high = total - low
    h_y = float(entropy_from_counts(total))
    cond = (n_low / n) * entropy_from_counts(low) + ((n - n_low) / n) * entropy_from_counts(high)
    gains = h_y - cond
    best = int(np.argmax(gains))
    # running maximum starts at zero
    if gains[best] <= 0.0:
        return 0.0, float(cands[best])
    return float(gains[best]), float(cands[best])


def pcc(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("columns differ in length")
    if a.size < 2:
        raise ValueError("need at least two values")
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(da @ da), np.sqrt(db @ db)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def pcc_matrix(data) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    with np.errstate(divide="ignore", invalid="ignore"):
        R = (Xc.T @ Xc) / np.outer(norms, norms)
    R[~np.isfinite(R)] = 0.0
    R = np.clip((R + R.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    return R


@dataclass(frozen=True, eq=False)
class FeatureRanking:
    names: tuple
    kinds: tuple
    gains: np.ndarray
    thresholds: np.ndarray
    order: tuple
    pcc_matrix: np.ndarray | None = None
    survivors: tuple | None = None

    @property
    def survivor_names(self):
        return tuple(self.names[j] for j in (self.survivors or ()))

    def write_csv(self, path):
        rank = {j: r + 1 for r, j in enumerate(self.order)}
        kept = set(self.survivors or ())
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "kind", "gain", "threshold", "rank", "survived"])
            for j in self.order:
                thr = self.thresholds[j]
                w.writerow([
                    self.names[j], self.kinds[j], repr(float(self.gains[j])),
                    "" if np.isnan(thr) else repr(float(thr)), rank[j],
                    "yes" if j in kept else "no",
                ])


def rank_features(table: FeatureTable, labels) -> FeatureRanking:
    if table.n_rows == 0:
        raise ValueError("cannot rank features of an empty table")
    y = _labels(labels)
    d = table.schema.n_features
    gains = np.zeros(d)
    thresholds = np.full(d, NO_THRESHOLD)
    for j in range(d):
        col = table.data[:, j]
        if table.schema.is_discrete(j):
            gains[j] = info_gain_discrete(col, y)
        else:
            gains[j], thresholds[j] = info_gain_continuous(col, y)
    order = tuple(int(j) for j in np.lexsort((np.arange(d), -gains)))
    return FeatureRanking(table.schema.names, table.schema.kinds, gains, thresholds, order)


def prune_redundant(ranking: FeatureRanking, table: FeatureTable, threshold: float,
                    matrix=None) -> tuple:
    """Greedy pass in gain order: drop the lower-gain member of any pair with |pcc| > threshold.

    Exact copies (|pcc| = 1) are dropped even at threshold 1.0.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    R = pcc_matrix(table.data) if matrix is None else matrix
    dropped = set()
    order = list(ranking.order)
    for a_pos, a in enumerate(order):
        if a in dropped:
            continue
        for b in order[a_pos + 1:]:
            if b not in dropped and (abs(R[a, b]) > threshold or abs(R[a, b]) >= 1.0):
                dropped.add(b)
    return tuple(j for j in order if j not in dropped)


def select_features(table: FeatureTable, labels, pcc_threshold: float) -> FeatureRanking:
    """Rank, compute the correlation matrix, prune; the full ranking record."""
    ranking = rank_features(table, labels)
    R = pcc_matrix(table.data)
    survivors = prune_redundant(ranking, table, pcc_threshold, matrix=R)
    return replace(ranking, pcc_matrix=R, survivors=survivors)
