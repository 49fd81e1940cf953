"""Minibatch training with k-fold validation and best-snapshot selection."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.model_selection import StratifiedKFold

from ..errors import DivergenceError
from .network import NetConfig, NetParams, Network, cross_entropy, cross_entropy_grad
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)  # (fold, epoch, train_loss, val_acc)
    best_fold: int = -1
    best_epoch: int = -1
    best_val_acc: float = -math.inf
    aborted_folds: dict = field(default_factory=dict)

    @property
    def best_snapshot(self):
        return f"fold{self.best_fold}-epoch{self.best_epoch}"

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fold", "epoch", "loss", "val_acc"])
            for fold, epoch, loss, acc in self.records:
                w.writerow([fold, epoch, repr(float(loss)), repr(float(acc))])


def fold_splits(y, k_folds, seed, val_fraction=0.1):
    """Stratified k-fold index pairs; ``k_folds == 1`` gives one shuffled holdout."""
    n = y.shape[0]
    if k_folds >= 2:
        skf = StratifiedKFold(n_splits=k_folds, shuffle=True, random_state=seed)
        return list(skf.split(np.zeros(n), y))
    perm = np.random.default_rng([seed, 7]).permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    return [(np.sort(perm[n_val:]), np.sort(perm[:n_val]))]


def train_epoch(net: Network, opt: Adam, X, y, batch_size, rng):
    order = rng.permutation(X.shape[0])
    total, count = 0.0, 0
    for start in range(0, order.size, batch_size):
        idx = order[start:start + batch_size]
        logits = net.forward(X[idx], train=True)
        loss = cross_entropy(logits, y[idx])
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at batch starting {start}")
        net.backward(cross_entropy_grad(logits, y[idx]))
        opt.step(net.params(), net.grads())
        total += loss * idx.size
        count += idx.size
    return total / max(count, 1)


def train(X, y, config: NetConfig, k_folds=None, progress=None):
    """Train fresh networks per fold and keep the single best validation snapshot.

    Returns ``(NetParams, TrainLog)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[1] != config.seq_len:
        raise ValueError(f"expected {config.seq_len} features, got {X.shape[1]}")
    k = config.k_folds if k_folds is None else k_folds
    logbook = TrainLog()
    best = None
    for fold, (tr, va) in enumerate(fold_splits(y, k, config.seed, config.val_fraction)):
        rng = np.random.default_rng([config.seed, fold])
        net = Network(config, rng)
        opt = Adam(lr=config.lr)
        try:
            for epoch in range(1, config.epochs + 1):
                loss = train_epoch(net, opt, X[tr], y[tr], config.batch_size, rng)
                acc = float(np.mean(net.predict(X[va]) == y[va]))
                logbook.records.append((fold, epoch, loss, acc))
                log.info("fold %d epoch %d loss %.5f val_acc %.5f", fold, epoch, loss, acc)
                if progress:
                    progress(fold, epoch, loss, acc)
                if acc > logbook.best_val_acc:
                    logbook.best_fold, logbook.best_epoch, logbook.best_val_acc = fold, epoch, acc
                    best = NetParams.from_network(net)
        except DivergenceError as exc:
            msg = f"fold {fold} epoch {epoch}: {exc}"
            log.warning("aborting %s", msg)
            logbook.aborted_folds[fold] = msg
    if best is None:
        raise DivergenceError("every fold diverged: " + "; ".join(logbook.aborted_folds.values()))
    return best, logbook


class NetClassifier:
    """Estimator wrapper used by feature selection and ablation arms."""

    def __init__(self, config: NetConfig | None = None, **overrides):
        self.base_config = config
        self.overrides = overrides

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        base = self.base_config or NetConfig(seq_len=X.shape[1], num_classes=int(y.max()) + 1)
        cfg = base.replace(seq_len=X.shape[1], **self.overrides)
        self.params_, self.log_ = train(X, y, cfg)
        self.net_ = self.params_.build()
        self.classes_ = np.arange(cfg.num_classes)
        return self

    def predict_proba(self, X):
        return self.net_.predict_proba(X)

    def predict(self, X):
        return self.net_.predict(X)
