"""Random forest with balanced class weights."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .tree import SparseData, Tree, TrainingError, grow_tree


def class_weights(y: np.ndarray, mode: str | None = "balanced") -> tuple[float, float]:
    """Per-class weights (negative, positive); ``balanced`` gives N / (2 n_c)."""
    y = np.asarray(y, dtype=bool)
    if mode is None:
        return (1.0, 1.0)
    if mode != "balanced":
        raise ValueError(f"unknown class_weight {mode!r}")
    n = len(y)
    n_pos = int(y.sum())
    n_neg = n - n_pos
    w_neg = n / (2.0 * n_neg) if n_neg else 1.0
    w_pos = n / (2.0 * n_pos) if n_pos else 1.0
    return (w_neg, w_pos)


def resolve_max_features(spec, d: int) -> int:
    if spec is None:
        return d
    if spec == "sqrt":
        return max(1, int(math.sqrt(d)))
    if isinstance(spec, float):
        return max(1, int(spec * d))
    return max(1, min(int(spec), d))


@dataclass
class ForestModel:
    trees: list[Tree]
    n_features: int
    class_weight: tuple[float, float]
    max_features: int
    seed: int
    min_samples_leaf: int = 1
    max_depth: int | None = None
    bootstrap: bool = True
    params: dict = field(default_factory=dict)

    @property
    def n_estimators(self) -> int:
        return len(self.trees)


def _check_xy(X, y) -> tuple[SparseData, np.ndarray]:
    data = X if isinstance(X, SparseData) else SparseData(X)
    y = np.asarray(y).astype(bool)
    if data.n_rows == 0:
        raise TrainingError("empty training matrix")
    if len(y) != data.n_rows:
        raise TrainingError(f"{data.n_rows} rows but {len(y)} labels")
    return data, y


def train_random_forest(
    X,
    y,
    n_estimators: int = 1000,
    class_weight: str | None = "balanced",
    seed: int = 0,
    *,
    max_features="sqrt",
    min_samples_leaf: int = 1,
    max_depth: int | None = None,
    bootstrap: bool = True,
    n_jobs: int = 1,
    backend: str | None = None,
) -> ForestModel:
    data, y = _check_xy(X, y)
    if y.all() or not y.any():
        raise TrainingError("training labels contain a single class")
    if n_estimators < 1:
        raise TrainingError("n_estimators must be >= 1")
    kern = _backend.get(backend)
    cw = class_weights(y, class_weight)
    row_w = np.where(y, cw[1], cw[0])
    yf = y.astype(np.float64)
    mtry = resolve_max_features(max_features, data.n_cols)
    seeds = np.random.SeedSequence(seed).spawn(n_estimators)
    n = data.n_rows

    def fit_one(i: int) -> Tree:
        rng = np.random.default_rng(seeds[i])
        if bootstrap:
            counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        else:
            counts = np.ones(n)
        w = counts * row_w
        stats = np.column_stack([w * yf, w * (1.0 - yf)])
        rows = np.nonzero(counts)[0].astype(np.int64)

        def leaf_value(r):
            s = stats[r]
            pos, neg = s[:, 0].sum(), s[:, 1].sum()
            return float(pos / (pos + neg)) if pos + neg > 0 else 0.0

        return grow_tree(
            data, rows, w, stats, leaf_value,
            max_features=mtry, min_leaf=min_samples_leaf, max_depth=max_depth,
            rng=rng, backend=kern,
        )

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(fit_one, range(n_estimators)))
    else:
        trees = [fit_one(i) for i in range(n_estimators)]

    return ForestModel(
        trees=trees,
        n_features=data.n_cols,
        class_weight=cw,
        max_features=mtry,
        seed=seed,
        min_samples_leaf=min_samples_leaf,
        max_depth=max_depth,
        bootstrap=bootstrap,
    )


def forest_predict(model: ForestModel, X: SparseData, backend: str | None = None) -> np.ndarray:
    if not model.trees:
        raise ValueError("forest has no trees")
    kern = _backend.get(backend)
    total = np.zeros(X.n_rows)
    for tree in model.trees:
        total += tree.predict(X, kern)
    return total / len(model.trees)


def feature_importance(model: ForestModel) -> list[tuple[int, float]]:
    """Mean impurity decrease per feature, normalized to sum to 1.

    Sorted by decreasing importance, ties by column index.
    """
    acc = np.zeros(model.n_features)
    for tree in model.trees:
        per = np.zeros(model.n_features)
        internal = tree.left >= 0
        np.add.at(per, tree.feature[internal], tree.gain[internal])
        total = per.sum()
        if total > 0:
            acc += per / total
    if acc.sum() > 0:
        acc /= acc.sum()
    order = sorted(range(model.n_features), key=lambda c: (-acc[c], c))
    return [(c, float(acc[c])) for c in order]
