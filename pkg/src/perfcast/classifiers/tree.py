"""Binary decision trees over sparse matrices (shared by forest and boosting)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import _backend


class TrainingError(ValueError):
    pass


@dataclass
class Tree:
    """Array-encoded tree; ``left[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Tree":
        return cls(
            feature=np.asarray(obj["feature"], dtype=np.int64),
            threshold=np.asarray(obj["threshold"], dtype=np.float64),
            left=np.asarray(obj["left"], dtype=np.int64),
            right=np.asarray(obj["right"], dtype=np.int64),
            value=np.asarray(obj["value"], dtype=np.float64),
            gain=np.asarray(obj["gain"], dtype=np.float64),
        )

    def apply(self, X: "SparseData", backend=None) -> np.ndarray:
        kern = backend or _backend.get()
        return kern.apply_tree(
            self.feature, self.threshold, self.left, self.right,
            X.csr_data, X.csr_indices, X.csr_indptr,
        )

    def predict(self, X: "SparseData", backend=None) -> np.ndarray:
        return self.value[self.apply(X, backend)]

    def splits(self) -> list[tuple[int, float]]:
        """(feature, threshold) of internal nodes in depth-first order."""
        out = []
        stack = [0]
        while stack:
            node = stack.pop()
            if self.left[node] < 0:
                continue
            out.append((int(self.feature[node]), float(self.threshold[node])))
            stack.append(int(self.right[node]))
            stack.append(int(self.left[node]))
        return out


class SparseData:
    """A matrix held in both CSC (split search) and CSR (row lookup) layouts."""

    def __init__(self, X):
        if sp.issparse(X):
            csr = sp.csr_matrix(X, dtype=np.float64)
        else:
            csr = sp.csr_matrix(np.asarray(X, dtype=np.float64))
        csr.sum_duplicates()
        csr.sort_indices()
        csc = csr.tocsc()
        csc.sort_indices()
        if csr.data.size and not np.all(np.isfinite(csr.data)):
            raise ValueError("feature matrix contains non-finite values")
        self.shape = csr.shape
        self.csr_data = np.ascontiguousarray(csr.data, dtype=np.float64)
        self.csr_indices = np.ascontiguousarray(csr.indices, dtype=np.int64)
        self.csr_indptr = np.ascontiguousarray(csr.indptr, dtype=np.int64)
        self.csc_data = np.ascontiguousarray(csc.data, dtype=np.float64)
        self.csc_indices = np.ascontiguousarray(csc.indices, dtype=np.int64)
        self.csc_indptr = np.ascontiguousarray(csc.indptr, dtype=np.int64)

    @property
    def n_rows(self) -> int:
        return self.shape[0]

    @property
    def n_cols(self) -> int:
        return self.shape[1]


def grow_tree(
    X: SparseData,
    rows: np.ndarray,
    weight: np.ndarray,
    stats: np.ndarray,
    leaf_value: Callable[[np.ndarray], float],
    *,
    max_features: int,
    min_leaf: int = 1,
    max_depth: int | None = None,
    rng: np.random.Generator | None = None,
    stop_when_pure: bool = True,
    backend=None,
) -> Tree:
    """Greedy depth-first growth.

    ``stats`` holds per-row sufficient statistics already multiplied by
    ``weight``; the split criterion maximizes sum_j S_j^2 / W over the two
    children (Gini for class-indicator stats, squared error for residuals).
    ``rng`` shuffles candidate features per node; without it columns are
    visited in index order.
    """
    kern = backend or _backend.get()
    stats = np.ascontiguousarray(stats, dtype=np.float64)
    if stats.ndim == 1:
        stats = stats[:, None]
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    mark = np.zeros(X.n_rows, dtype=np.uint8)
    d = X.n_cols
    ordered = np.arange(d, dtype=np.int64)

    feature, threshold, left, right, value, gain = [], [], [], [], [], []

    def new_node(node_rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(leaf_value(node_rows))
        gain.append(0.0)
        return len(feature) - 1

    root = new_node(rows)
    stack = [(root, np.ascontiguousarray(rows, dtype=np.int64), 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        if len(node_rows) < 2 * min_leaf or len(node_rows) < 2:
            continue
        if stop_when_pure and _is_pure(stats, node_rows):
            continue
        feats = rng.permutation(d).astype(np.int64) if rng is not None else ordered
        f, thr, children, parent, _ = kern.best_split(
            X.csc_data, X.csc_indices, X.csc_indptr,
            X.csr_data, X.csr_indices, X.csr_indptr,
            node_rows, weight, stats, feats, max_features, min_leaf, mark,
        )
        if f < 0:
            continue
        lrows, rrows = kern.partition(
            X.csc_data, X.csc_indices, X.csc_indptr, node_rows, f, thr, mark
        )
        feature[node] = int(f)
        threshold[node] = float(thr)
        gain[node] = max(float(children - parent), 0.0)
        li = new_node(lrows)
        ri = new_node(rrows)
        left[node], right[node] = li, ri
        stack.append((ri, rrows, depth + 1))
        stack.append((li, lrows, depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        gain=np.asarray(gain, dtype=np.float64),
    )


def _is_pure(stats: np.ndarray, rows: np.ndarray) -> bool:
    if stats.shape[1] < 2:
        return False
    s = stats[rows]
    nonzero = (s != 0.0).any(axis=0)
    return int(nonzero.sum()) <= 1
