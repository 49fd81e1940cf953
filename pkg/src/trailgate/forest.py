"""Bagged CART forest: the first-stage gate and the default probe model.

Per-tree split search is delegated to scikit-learn's CART builder (Gini,
midpoint thresholds, random feature subset per split). Bootstrap drawing,
the flattened tree format, voting, probabilities and serialization live here.
Splits send ``x <= threshold`` left, comparing 32-bit feature values the same
way the builder does.
"""
from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.tree import DecisionTreeClassifier

from .dataset import FeatureTable, LabelVector

LEAF = -1


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini of an empty node")
    p = counts / total
    return float(1.0 - np.sum(p * p))


@dataclass
class TreeNode:
    feature: int = LEAF
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    counts: np.ndarray | None = None

    @property
    def is_leaf(self):
        return self.feature == LEAF


@dataclass(eq=False)
class Tree:
    """A tree as flat preorder node arrays with explicit child offsets."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) training class counts

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    def apply(self, X32):
        node = np.zeros(X32.shape[0], dtype=np.int64)
        rows = np.arange(X32.shape[0])
        active = self.feature[node] != LEAF
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X32[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active[r] = self.feature[node[r]] != LEAF
        return node

    def root(self) -> TreeNode:
        def build(i):
            if self.feature[i] == LEAF:
                return TreeNode(counts=self.counts[i].copy())
            return TreeNode(int(self.feature[i]), float(self.threshold[i]),
                            build(self.left[i]), build(self.right[i]))
        return build(0)


def _flatten_sklearn(est, n_classes) -> Tree:
    t = est.tree_
    cols = est.classes_.astype(np.int64)
    raw = t.value[:, 0, :] * t.weighted_n_node_samples[:, None]
    full = np.zeros((t.node_count, n_classes))
    full[:, cols] = np.rint(raw)
    # renumber in preorder, left child first
    order, stack = [], [0]
    while stack:
        i = stack.pop()
        order.append(i)
        if t.children_left[i] != -1:
            stack.append(t.children_right[i])
            stack.append(t.children_left[i])
    new_id = np.empty(t.node_count, dtype=np.int64)
    new_id[order] = np.arange(len(order))
    order = np.asarray(order)
    leaf = t.children_left[order] == -1
    feature = np.where(leaf, LEAF, t.feature[order]).astype(np.int32)
    left = np.where(leaf, LEAF, new_id[np.maximum(t.children_left[order], 0)]).astype(np.int32)
    right = np.where(leaf, LEAF, new_id[np.maximum(t.children_right[order], 0)]).astype(np.int32)
    threshold = np.where(leaf, 0.0, t.threshold[order]).astype(np.float64)
    return Tree(feature, threshold, left, right, full[order])


@dataclass(eq=False)
class Forest:
    trees: list
    n_classes: int
    n_features: int
    feature_names: tuple = ()
    seed: int = 0
    params: dict = field(default_factory=dict)

    @property
    def n_estimators(self):
        return len(self.trees)

    def _check(self, X):
        X = X.data if isinstance(X, FeatureTable) else np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected rows of width {self.n_features}, got shape {X.shape}")
        return X.astype(np.float32)

    def votes(self, X) -> np.ndarray:
        X32 = self._check(X)
        votes = np.zeros((X32.shape[0], self.n_classes), dtype=np.int64)
        rows = np.arange(X32.shape[0])
        for tree in self.trees:
            leaf_counts = tree.counts[tree.apply(X32)]
            votes[rows, np.argmax(leaf_counts, axis=1)] += 1
        return votes

    def predict(self, X) -> np.ndarray:
        """Majority vote; ties go to the lower class index."""
        return np.argmax(self.votes(X), axis=1)

    def predict_proba(self, X) -> np.ndarray:
        X32 = self._check(X)
        proba = np.zeros((X32.shape[0], self.n_classes))
        for tree in self.trees:
            c = tree.counts[tree.apply(X32)]
            proba += c / c.sum(axis=1, keepdims=True)
        return proba / len(self.trees)


def bootstrap_indices(n, seed, tree_index):
    return np.random.default_rng([seed, tree_index]).integers(0, n, size=n)


def train_forest(table, labels, n_estimators=300, max_depth=None, min_leaf=1,
                 features_per_split=None, seed=0, n_classes=None) -> Forest:
    X = table.data if isinstance(table, FeatureTable) else np.asarray(table, dtype=np.float64)
    y = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = labels.n_classes if isinstance(labels, LabelVector) else int(y.max()) + 1
    n, d = X.shape
    if n < 2 or d < 1:
        raise ValueError("need at least two samples and one feature")
    if np.unique(y).size < 2:
        warnings.warn("single-class training set; every tree is a single leaf", stacklevel=2)
    fps = features_per_split or math.ceil(math.sqrt(d))
    trees = []
    for t in range(n_estimators):
        idx = bootstrap_indices(n, seed, t)
        est = DecisionTreeClassifier(
            criterion="gini", max_depth=max_depth, min_samples_leaf=min_leaf,
            max_features=min(fps, d), random_state=int(np.random.default_rng([seed, t, 1]).integers(2**31 - 1)),
        )
        est.fit(X[idx], y[idx])
        trees.append(_flatten_sklearn(est, n_classes))
    names = table.feature_names if isinstance(table, FeatureTable) else ()
    params = {"n_estimators": n_estimators, "max_depth": max_depth, "min_leaf": min_leaf,
              "features_per_split": fps}
    return Forest(trees, n_classes, d, tuple(names), seed, params)


class ForestClassifier:
    """Estimator-style wrapper so the forest plugs into fold loops and IFS."""

    def __init__(self, n_estimators=300, max_depth=None, min_leaf=1, features_per_split=None,
                 seed=0, n_classes=None):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.features_per_split = features_per_split
        self.seed = seed
        self.n_classes = n_classes

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.int64)
        m = self.n_classes or int(y.max()) + 1
        self.forest_ = train_forest(X, y, self.n_estimators, self.max_depth, self.min_leaf,
                                    self.features_per_split, self.seed, n_classes=m)
        self.classes_ = np.arange(m)
        return self

    def predict(self, X):
        return self.forest_.predict(X)

    def predict_proba(self, X):
        return self.forest_.predict_proba(X)


FOREST_MAGIC = b"TGRF"
FOREST_VERSION = 1


def _node_dtype(m):
    return np.dtype([("feature", "<i4"), ("threshold", "<f8"), ("left", "<i4"),
                     ("right", "<i4"), ("counts", "<f8", (m,))])


def dumps_forest(forest: Forest) -> bytes:
    header = json.dumps({
        "n_classes": forest.n_classes, "n_features": forest.n_features,
        "feature_names": list(forest.feature_names), "seed": forest.seed,
        "params": forest.params, "n_estimators": forest.n_estimators,
    }, sort_keys=True).encode("utf-8")
    dt = _node_dtype(forest.n_classes)
    chunks = [FOREST_MAGIC, struct.pack("<IQ", FOREST_VERSION, len(header)), header]
    for tree in forest.trees:
        rec = np.zeros(tree.n_nodes, dtype=dt)
        rec["feature"], rec["threshold"] = tree.feature, tree.threshold
        rec["left"], rec["right"], rec["counts"] = tree.left, tree.right, tree.counts
        chunks.append(struct.pack("<I", tree.n_nodes))
        chunks.append(rec.tobytes())
    return b"".join(chunks)


def loads_forest(raw: bytes) -> Forest:
    if raw[:4] != FOREST_MAGIC:
        raise ValueError("not a serialized forest")
    version, hlen = struct.unpack_from("<IQ", raw, 4)
    if version != FOREST_VERSION:
        raise ValueError(f"unsupported forest version {version}")
    off = 16
    head = json.loads(raw[off:off + hlen].decode("utf-8"))
    off += hlen
    m = head["n_classes"]
    dt = _node_dtype(m)
    trees = []
    for _ in range(head["n_estimators"]):
        (count,) = struct.unpack_from("<I", raw, off)
        off += 4
        rec = np.frombuffer(raw, dtype=dt, count=count, offset=off)
        off += count * dt.itemsize
        trees.append(Tree(rec["feature"].astype(np.int32), rec["threshold"].astype(np.float64),
                          rec["left"].astype(np.int32), rec["right"].astype(np.int32),
                          rec["counts"].astype(np.float64).reshape(count, m)))
    return Forest(trees, m, head["n_features"], tuple(head["feature_names"]), head["seed"],
                  head["params"])


def save_forest(path, forest):
    Path(path).write_bytes(dumps_forest(forest))


def load_forest(path):
    return loads_forest(Path(path).read_bytes())
