"""Ranking metrics, threshold policies and the filtering-mode report.

Thresholding convention everywhere: a score strictly greater than the
threshold is a positive prediction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class MetricError(ValueError):
    pass


class ThresholdError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels).astype(bool)
        if scores.shape != labels.shape or scores.ndim != 1:
            raise ValueError("scores and labels must be 1-D and equally long")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)
        if self.timestamps is not None:
            object.__setattr__(self, "timestamps", np.asarray(self.timestamps))

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return len(self) - self.n_pos

    @property
    def prior(self) -> float:
        return self.n_pos / len(self) if len(self) else 0.0


def _need_both(s: ScoredSet) -> None:
    if len(s) == 0:
        raise MetricError("empty scored set")
    if s.n_pos == 0 or s.n_neg == 0:
        raise MetricError("metric needs both classes present")


def roc_auc(s: ScoredSet) -> float:
    """P(random positive outscores random negative), ties counted one half."""
    _need_both(s)
    order = np.argsort(s.scores, kind="mergesort")
    sorted_scores = s.scores[order]
    ranks = np.empty(len(s))
    # average ranks over tie groups
    _, start, counts = np.unique(sorted_scores, return_index=True, return_counts=True)
    avg = start + (counts + 1) / 2.0
    ranks[order] = np.repeat(avg, counts)
    rank_sum = ranks[s.labels].sum()
    n_pos, n_neg = s.n_pos, s.n_neg
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    precision: float
    recall: float
    fpr: float
    tpr: float


def _cumulative(s: ScoredSet):
    order = np.argsort(-s.scores, kind="mergesort")
    sc = s.scores[order]
    lab = s.labels[order]
    tp = np.cumsum(lab)
    fp = np.cumsum(~lab)
    # last index of each tie group (descending scores)
    last = np.r_[np.nonzero(sc[1:] != sc[:-1])[0], len(sc) - 1]
    return sc[last], tp[last], fp[last]


def curve(s: ScoredSet) -> list[CurvePoint]:
    """One point per distinct score ``v``: predictions are ``score >= v``.

    Equivalently the operating point of any threshold in [next lower score, v).
    """
    _need_both(s)
    thr, tp, fp = _cumulative(s)
    P, N = s.n_pos, s.n_neg
    out = []
    for t, a, b in zip(thr, tp, fp):
        out.append(
            CurvePoint(
                threshold=float(t),
                precision=float(a / (a + b)),
                recall=float(a / P),
                fpr=float(b / N),
                tpr=float(a / P),
            )
        )
    return out


def pr_curve(s: ScoredSet) -> list[tuple[float, float]]:
    return [(p.recall, p.precision) for p in curve(s)]


def average_precision(s: ScoredSet) -> float:
    """Step-wise AP: sum over thresholds of (R_i - R_{i-1}) * P_i."""
    pts = curve(s)
    ap = 0.0
    prev_r = 0.0
    for p in pts:
        ap += (p.recall - prev_r) * p.precision
        prev_r = p.recall
    return float(ap)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @staticmethod
    def _ratio(a: int, b: int) -> float:
        return a / b if b else 0.0

    @staticmethod
    def _f1(p: float, r: float) -> float:
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def per_class(self) -> dict[str, dict[str, float]]:
        """Precision/recall/f1/support for the negative and positive class."""
        pos_p = self._ratio(self.tp, self.tp + self.fp)
        pos_r = self._ratio(self.tp, self.tp + self.fn)
        neg_p = self._ratio(self.tn, self.tn + self.fn)
        neg_r = self._ratio(self.tn, self.tn + self.fp)
        return {
            "False": {"precision": neg_p, "recall": neg_r, "f1": self._f1(neg_p, neg_r),
                      "support": self.tn + self.fp},
            "True": {"precision": pos_p, "recall": pos_r, "f1": self._f1(pos_p, pos_r),
                     "support": self.tp + self.fn},
        }

    @property
    def precision(self) -> float:
        return self._ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return self._ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        return self._f1(self.precision, self.recall)

    def table(self) -> str:
        rows = ["       precision  recall  f1-score  support"]
        for name, m in self.per_class().items():
            rows.append(
                f"{name:>5}  {m['precision']:9.2f}  {m['recall']:6.2f}  {m['f1']:8.2f}  {m['support']:7d}"
            )
        return "\n".join(rows)


def confusion_at(s: ScoredSet, threshold: float) -> ConfusionMatrix:
    pred = s.scores > threshold
    tp = int(np.sum(pred & s.labels))
    fp = int(np.sum(pred & ~s.labels))
    fn = int(np.sum(~pred & s.labels))
    tn = len(s) - tp - fp - fn
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


@dataclass(frozen=True)
class ThresholdPolicy:
    mode: str  # target_recall | target_precision | fixed
    target: float | None
    threshold: float

    def to_json(self) -> dict:
        return asdict(self)


def tune_threshold(s: ScoredSet, mode: str = "target_recall", target: float | None = None) -> ThresholdPolicy:
    """Choose a threshold on a tuning set.

    ``target_recall``: the largest threshold whose recall reaches the target.
    ``target_precision``: the smallest threshold whose precision reaches it.
    ``fixed``: ``target`` is used as the threshold itself.
    """
    if mode == "fixed":
        if target is None:
            raise ThresholdError("fixed policy needs a threshold")
        return ThresholdPolicy(mode, target, float(target))
    if s.n_pos == 0:
        raise ThresholdError("tuning set has no positives")
    if target is None:
        raise ThresholdError(f"{mode} needs a target value")
    if mode == "target_recall":
        if not 0.0 <= target <= 1.0:
            raise ThresholdError(f"unattainable recall {target}; max attainable is 1.0")
        pos = np.sort(s.scores[s.labels])[::-1]
        need = max(1, math.ceil(target * s.n_pos - 1e-12))
        pivot = pos[need - 1]
        # largest float that still ranks ``pivot`` strictly above it
        thr = float(np.nextafter(pivot, -np.inf))
        return ThresholdPolicy(mode, target, thr)
    if mode == "target_precision":
        pts = curve(s)
        ok = [p for p in pts if p.precision >= target]
        if not ok:
            best = max(p.precision for p in pts)
            raise ThresholdError(f"unattainable precision {target}; max attainable is {best:.6g}")
        # lowest admissible score level gives the most recall
        chosen = min(ok, key=lambda p: p.threshold)
        thr = float(np.nextafter(chosen.threshold, -np.inf))
        return ThresholdPolicy(mode, target, thr)
    raise ThresholdError(f"unknown threshold mode {mode!r}")


# The random baseline flags diffs at the prior rate, so its precision is the
# prior; lift = precision / prior.
EXTERNAL_BENCHMARKS = {
    "filtered_fraction_backend": 0.43,
    "filtered_fraction_frontend": 0.27,
    "lift_vs_random": 45.0,
    "note": "published production figures for reference only; not reproduced here",
}


def filtering_report(s: ScoredSet, threshold: float) -> dict:
    cm = confusion_at(s, threshold)
    n = len(s)
    prior = s.prior
    precision = cm.precision if (cm.tp + cm.fp) else 0.0
    return {
        "threshold": threshold,
        "n": n,
        "n_regressions": s.n_pos,
        "filtered_out": cm.tn + cm.fn,
        "filtered_fraction": (cm.tn + cm.fn) / n if n else 0.0,
        "regressions_missed": cm.fn,
        "recall": cm.recall if s.n_pos else None,
        "precision": precision,
        "prior": prior,
        "lift": precision / prior if prior > 0 else None,
        "lift_definition": "precision of flagged diffs / prior regression rate",
        "external_benchmarks": EXTERNAL_BENCHMARKS,
    }


def write_curve_csv(path: str | Path, s: ScoredSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall", "fpr", "tpr"])
        for p in curve(s):
            w.writerow([repr(p.threshold), repr(p.precision), repr(p.recall), repr(p.fpr), repr(p.tpr)])


def write_gnuplot(path: str | Path, s: ScoredSet) -> None:
    """Whitespace-separated columns: fpr tpr recall precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# fpr tpr recall precision\n")
        for p in curve(s):
            fh.write(f"{p.fpr!r} {p.tpr!r} {p.recall!r} {p.precision!r}\n")


def minority_f1(s: ScoredSet, threshold: float = 0.5) -> float:
    return confusion_at(s, threshold).f1
