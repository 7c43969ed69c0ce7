import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perfcast.evaluation import (
    EXTERNAL_BENCHMARKS,
    MetricError,
    ScoredSet,
    ThresholdError,
    average_precision,
    confusion_at,
    curve,
    filtering_report,
    minority_f1,
    pr_curve,
    roc_auc,
    tune_threshold,
    write_curve_csv,
    write_gnuplot,
)


def pairwise_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def random_set(rng, n=None):
    n = n or int(rng.integers(2, 60))
    scores = rng.integers(0, 8, n) / 7.0  # coarse grid forces ties
    labels = rng.random(n) < 0.3
    labels[0], labels[1] = True, False
    return ScoredSet(scores, labels)


def test_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        s = random_set(rng)
        assert abs(roc_auc(s) - pairwise_auc(s.scores, s.labels)) <= 1e-12


def test_confusion_matches_recount():
    rng = np.random.default_rng(1)
    for _ in range(200):
        s = random_set(rng)
        thr = float(rng.choice(s.scores))
        cm = confusion_at(s, thr)
        tp = fp = tn = fn = 0
        for sc, lab in zip(s.scores.tolist(), s.labels.tolist()):
            if sc > thr:
                tp, fp = (tp + 1, fp) if lab else (tp, fp + 1)
            else:
                fn, tn = (fn + 1, tn) if lab else (fn, tn + 1)
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == (tp, fp, tn, fn)


def test_auc_edges():
    assert roc_auc(ScoredSet([0.1, 0.2, 0.9], [False, False, True])) == 1.0
    assert roc_auc(ScoredSet([0.5] * 4, [True, False, True, False])) == 0.5
    with pytest.raises(MetricError):
        roc_auc(ScoredSet([0.1, 0.2], [True, True]))
    with pytest.raises(MetricError):
        roc_auc(ScoredSet([], []))


def test_ap_perfect_and_constant():
    assert average_precision(ScoredSet([0.9, 0.8, 0.1, 0.0], [True, True, False, False])) == 1.0
    s = ScoredSet([0.3] * 10, [True] * 3 + [False] * 7)
    assert average_precision(s) == pytest.approx(s.prior)


def test_ap_random_scores_near_prior():
    rng = np.random.default_rng(2)
    p, n, reps = 0.2, 400, 200
    aps = []
    for _ in range(reps):
        labels = rng.random(n) < p
        labels[0], labels[1] = True, False
        aps.append(average_precision(ScoredSet(rng.random(n), labels)))
    aps = np.array(aps)
    se = aps.std(ddof=1) / np.sqrt(reps)
    # step-wise AP of a random ranker has a small positive bias of order 1/n_pos
    assert abs(aps.mean() - p) <= 3 * se + 0.02


def test_threshold_one_predicts_nothing():
    s = ScoredSet([0.2, 0.9, 1.0], [True, False, True])
    cm = confusion_at(s, 1.0)
    assert cm.tp == cm.fp == 0


def test_high_precision_corner_exists():
    rng = np.random.default_rng(3)
    labels = rng.random(2000) < 0.02
    scores = rng.random(2000) * 0.5
    top = np.nonzero(labels)[0][:3]
    scores[top] = 0.99  # a few confident hits
    pts = pr_curve(ScoredSet(scores, labels))
    assert any(prec >= 0.75 and rec <= 0.1 for rec, prec in pts)


def test_recall_one_threshold_below_min_positive():
    s = ScoredSet([0.1, 0.4, 0.35, 0.8], [False, True, True, False])
    pol = tune_threshold(s, "target_recall", 1.0)
    assert pol.threshold < 0.35
    assert confusion_at(s, pol.threshold).fn == 0


def test_target_recall_three_quarters():
    rng = np.random.default_rng(4)
    s = ScoredSet(rng.random(300), rng.random(300) < 0.1)
    pol = tune_threshold(s, "target_recall", 0.75)
    assert confusion_at(s, pol.threshold).recall >= 0.75


def test_recall_targets_monotone():
    rng = np.random.default_rng(5)
    s = ScoredSet(rng.random(200), rng.random(200) < 0.2)
    thr = [tune_threshold(s, "target_recall", t).threshold for t in np.linspace(0.05, 1.0, 20)]
    assert all(a >= b for a, b in zip(thr, thr[1:]))


def test_precision_target_and_errors():
    s = ScoredSet([0.9, 0.8, 0.7, 0.2], [True, False, True, False])
    pol = tune_threshold(s, "target_precision", 0.6)
    assert confusion_at(s, pol.threshold).precision >= 0.6
    with pytest.raises(ThresholdError, match="max attainable"):
        tune_threshold(ScoredSet([0.5, 0.5], [True, False]), "target_precision", 0.9)
    with pytest.raises(ThresholdError):
        tune_threshold(ScoredSet([0.5], [False]), "target_recall", 1.0)
    with pytest.raises(ThresholdError):
        tune_threshold(s, "target_recall", 1.5)
    assert tune_threshold(s, "fixed", 0.3).threshold == 0.3


def test_filtering_pass_through():
    s = ScoredSet([0.2, 0.4, 0.6], [True, False, False])
    r = filtering_report(s, -1.0)
    assert r["filtered_fraction"] == 0.0 and r["recall"] == 1.0 and r["lift"] == 1.0
    assert r["external_benchmarks"] == EXTERNAL_BENCHMARKS


def test_curve_files(tmp_path):
    s = ScoredSet([0.1, 0.5, 0.5, 0.9], [False, True, False, True])
    write_curve_csv(tmp_path / "c.csv", s)
    write_gnuplot(tmp_path / "c.dat", s)
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["threshold", "precision", "recall", "fpr", "tpr"]
    assert len(rows) == 1 + len(curve(s)) == 4
    assert minority_f1(s, 0.7) == pytest.approx(2 / 3)
    assert "precision" in confusion_at(s, 0.5).table()


scores_st = st.lists(st.tuples(st.floats(0, 1, allow_nan=False), st.booleans()), min_size=2, max_size=40)


@settings(max_examples=200, deadline=None)
@given(scores_st, st.floats(-1, 2))
def test_properties(pairs, thr):
    scores = np.array([p[0] for p in pairs])
    labels = np.array([p[1] for p in pairs])
    s = ScoredSet(scores, labels)
    cm = confusion_at(s, thr)
    assert cm.tp + cm.fp + cm.tn + cm.fn == len(s)
    if s.n_pos and s.n_neg:
        a = roc_auc(s)
        assert 0.0 <= a <= 1.0
        # strictly monotone transform keeps AUC
        levels, inv = np.unique(scores, return_inverse=True)
        warped = (np.arange(len(levels)) ** 3 - 7.0)[inv]
        assert roc_auc(ScoredSet(warped, labels)) == pytest.approx(a, abs=1e-12)
    if s.n_pos:
        pol = tune_threshold(s, "target_recall", 1.0)
        assert confusion_at(s, pol.threshold).fn == 0
