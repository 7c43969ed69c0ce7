"""Gradient boosting on class-weighted binary log-loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .forest import class_weights
from .tree import SparseData, Tree, TrainingError, grow_tree

MAX_LOGIT = 30.0


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -MAX_LOGIT, MAX_LOGIT)))


def weighted_log_loss(y, raw, w) -> float:
    p = sigmoid(raw)
    eps = 1e-15
    p = np.clip(p, eps, 1 - eps)
    return float(-(w * (y * np.log(p) + (1 - y) * np.log(1 - p))).sum() / w.sum())


@dataclass
class BoostedModel:
    init: float
    stages: list[Tree]
    learning_rates: list[float]
    max_depth: int
    n_features: int
    class_weight: tuple[float, float]
    seed: int
    min_samples_leaf: int = 5
    train_loss: list[float] | None = None

    @property
    def n_estimators(self) -> int:
        return len(self.stages)


def _leaf_loss(y, raw, w):
    p = np.clip(sigmoid(raw), 1e-15, 1 - 1e-15)
    return -(w * (y * np.log(p) + (1 - y) * np.log(1 - p))).sum()


def train_gradient_boosting(
    X,
    y,
    n_estimators: int = 100,
    learning_rate: float = 0.1,
    max_depth: int = 3,
    seed: int = 0,
    *,
    class_weight: str | None = "balanced",
    min_samples_leaf: int = 5,
    backend: str | None = None,
) -> BoostedModel:
    """Stagewise depth-limited regression trees on log-loss gradients.

    Each tree is fit by weighted least squares to the residuals ``y - p``;
    leaf values take one Newton step, halved while the step would raise
    that leaf's loss, so the training loss never increases.
    """
    data = X if isinstance(X, SparseData) else SparseData(X)
    y = np.asarray(y).astype(bool)
    if data.n_rows == 0:
        raise TrainingError("empty training matrix")
    if len(y) != data.n_rows:
        raise TrainingError(f"{data.n_rows} rows but {len(y)} labels")
    kern = _backend.get(backend)
    cw = class_weights(y, class_weight)
    w = np.where(y, cw[1], cw[0]).astype(np.float64)
    yf = y.astype(np.float64)

    pos, neg = float((w * yf).sum()), float((w * (1 - yf)).sum())
    if pos == 0.0:
        init = -MAX_LOGIT
    elif neg == 0.0:
        init = MAX_LOGIT
    else:
        init = float(np.log(pos / neg))

    raw = np.full(data.n_rows, init)
    rows = np.arange(data.n_rows, dtype=np.int64)
    stages: list[Tree] = []
    losses = [weighted_log_loss(yf, raw, w)]
    for _ in range(n_estimators):
        p = sigmoid(raw)
        resid = yf - p
        hess = p * (1.0 - p)

        def leaf_value(r):
            num = float((w[r] * resid[r]).sum())
            den = float((w[r] * hess[r]).sum())
            if den <= 1e-12:
                return 0.0
            step = num / den
            before = _leaf_loss(yf[r], raw[r], w[r])
            for _ in range(60):
                if _leaf_loss(yf[r], raw[r] + learning_rate * step, w[r]) <= before:
                    break
                step *= 0.5
            else:
                step = 0.0
            return step

        tree = grow_tree(
            data, rows, w, w * resid, leaf_value,
            max_features=data.n_cols, min_leaf=min_samples_leaf, max_depth=max_depth,
            rng=None, stop_when_pure=False, backend=kern,
        )
        stages.append(tree)
        raw = raw + learning_rate * tree.predict(data, kern)
        losses.append(weighted_log_loss(yf, raw, w))

    return BoostedModel(
        init=init,
        stages=stages,
        learning_rates=[learning_rate] * len(stages),
        max_depth=max_depth,
        n_features=data.n_cols,
        class_weight=cw,
        seed=seed,
        min_samples_leaf=min_samples_leaf,
        train_loss=losses,
    )


def boosting_raw(model: BoostedModel, X: SparseData, backend: str | None = None) -> np.ndarray:
    kern = _backend.get(backend)
    raw = np.full(X.n_rows, model.init)
    for tree, lr in zip(model.stages, model.learning_rates):
        raw += lr * tree.predict(X, kern)
    return raw


def boosting_predict(model: BoostedModel, X: SparseData, backend: str | None = None) -> np.ndarray:
    return sigmoid(boosting_raw(model, X, backend))
