"""Tree-ensemble classifiers, model persistence and the scorer seam."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Protocol, Union

import numpy as np
import scipy.sparse as sp

from . import _backend
from .boosting import BoostedModel, boosting_predict, train_gradient_boosting
from .forest import ForestModel, class_weights, feature_importance, forest_predict, train_random_forest
from .tree import SparseData, Tree, TrainingError

Model = Union[ForestModel, BoostedModel]

MODEL_FORMAT = "perfcast-model"
MODEL_VERSION = 1

__all__ = [
    "BoostedModel",
    "ForestModel",
    "Model",
    "ModelScorer",
    "Scorer",
    "SparseData",
    "TrainingError",
    "Tree",
    "class_weights",
    "feature_importance",
    "load_model",
    "predict_proba",
    "save_model",
    "train_gradient_boosting",
    "train_random_forest",
]


def _as_data(X) -> SparseData:
    return X if isinstance(X, SparseData) else SparseData(X)


def predict_proba(model: Model, X, backend: str | None = None) -> np.ndarray:
    """Positive-class probability for every row of ``X``."""
    data = _as_data(X)
    if data.n_cols != model.n_features:
        raise ValueError(f"model expects {model.n_features} columns, got {data.n_cols}")
    if isinstance(model, ForestModel):
        return forest_predict(model, data, backend)
    if isinstance(model, BoostedModel):
        return boosting_predict(model, data, backend)
    raise TypeError(f"not a model: {type(model).__name__}")


class Scorer(Protocol):
    def score(self, x) -> float: ...


class ModelScorer:
    """Scores one sparse vector (``columns``/``weights`` pair) with a trained model."""

    def __init__(self, model: Model):
        self.model = model

    def score(self, x) -> float:
        if sp.issparse(x):
            row = x
        else:
            cols = np.asarray(x.columns, dtype=np.int64)
            vals = np.asarray(x.weights, dtype=np.float64)
            row = sp.csr_matrix(
                (vals, cols, np.array([0, len(cols)])), shape=(1, self.model.n_features)
            )
        return float(predict_proba(self.model, row)[0])

    def score_many(self, X) -> np.ndarray:
        return predict_proba(self.model, X)


# ----------------------------------------------------------------- persistence


def model_to_json(model: Model) -> dict:
    if isinstance(model, ForestModel):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "random_forest",
            "n_features": model.n_features,
            "class_weight": list(model.class_weight),
            "max_features": model.max_features,
            "min_samples_leaf": model.min_samples_leaf,
            "max_depth": model.max_depth,
            "bootstrap": model.bootstrap,
            "seed": model.seed,
            "trees": [t.to_json() for t in model.trees],
        }
    if isinstance(model, BoostedModel):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "gradient_boosting",
            "n_features": model.n_features,
            "class_weight": list(model.class_weight),
            "init": model.init,
            "max_depth": model.max_depth,
            "min_samples_leaf": model.min_samples_leaf,
            "seed": model.seed,
            "learning_rates": model.learning_rates,
            "stages": [t.to_json() for t in model.stages],
            "train_loss": model.train_loss,
        }
    raise TypeError(f"not a model: {type(model).__name__}")


def model_from_json(obj: dict) -> Model:
    if obj.get("format") != MODEL_FORMAT:
        raise ValueError("not a serialized perfcast model")
    if obj.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {obj.get('version')}")
    if obj["kind"] == "random_forest":
        return ForestModel(
            trees=[Tree.from_json(t) for t in obj["trees"]],
            n_features=obj["n_features"],
            class_weight=tuple(obj["class_weight"]),
            max_features=obj["max_features"],
            seed=obj["seed"],
            min_samples_leaf=obj["min_samples_leaf"],
            max_depth=obj["max_depth"],
            bootstrap=obj["bootstrap"],
        )
    if obj["kind"] == "gradient_boosting":
        return BoostedModel(
            init=obj["init"],
            stages=[Tree.from_json(t) for t in obj["stages"]],
            learning_rates=list(obj["learning_rates"]),
            max_depth=obj["max_depth"],
            n_features=obj["n_features"],
            class_weight=tuple(obj["class_weight"]),
            seed=obj["seed"],
            min_samples_leaf=obj["min_samples_leaf"],
            train_loss=obj.get("train_loss"),
        )
    raise ValueError(f"unknown model kind {obj['kind']!r}")


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model), separators=(",", ":")) + "\n")


def load_model(path: str | Path) -> Model:
    return model_from_json(json.loads(Path(path).read_text()))


def backend_name() -> str:
    return _backend.default_name()
