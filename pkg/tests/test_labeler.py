import warnings
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import change
from perfcast.fleetsim.sampling import GcpuSeries
from perfcast.labeler import (
    FunctionChange,
    FunctionWindow,
    LabeledExample,
    LabelerConfig,
    LabelingError,
    WindowStats,
    binarize,
    build_windows,
    chronological_split,
    coefficient_of_variation,
    label_windows,
    period_split,
    random_split,
    read_examples,
    remove_invalid,
    stability_filter,
    write_examples,
)


@dataclass
class Rel:
    release_id: str
    timestamp: float


RELEASES = [Rel(f"R{i}", 10.0 * i) for i in range(1, 6)]


def fc(rel, diff, name="f"):
    return FunctionChange(rel.release_id, rel.timestamp, diff, change("+x = g()", name=name))


def series(values, start=0.0, name="f"):
    return GcpuSeries(name, start + np.arange(len(values), dtype=float), np.asarray(values, float))


def stats_window(delta, cv=0.1, n=20):
    return FunctionWindow("f", change("+a()"), 0.0, 1.0, WindowStats(0.0, delta, cv, n, n))


def test_windows_between_changes():
    s = series(np.full(60, 0.1))
    ws = build_windows(RELEASES, [fc(RELEASES[0], "D1"), fc(RELEASES[2], "D2")], {"f": s})
    assert [(w.t_start, w.t_end) for w in ws] == [(10.0, 30.0), (30.0, 60.0)]


def test_window_per_release():
    s = series(np.full(60, 0.1))
    ws = build_windows(RELEASES, [fc(r, f"D{i}") for i, r in enumerate(RELEASES)], {"f": s})
    assert len(ws) == 5


def test_window_means_recomputed():
    rng = np.random.default_rng(0)
    vals = rng.random(60) * 0.2
    s = series(vals)
    ws = build_windows(RELEASES, [fc(RELEASES[1], "D1"), fc(RELEASES[3], "D2")], {"f": s})
    first, second = ws
    assert first.gcpu_before == pytest.approx(vals[0:20].mean())
    assert first.gcpu_after == pytest.approx(vals[20:40].mean())
    assert second.gcpu_before == pytest.approx(vals[20:40].mean())
    assert second.gcpu_after == pytest.approx(vals[40:60].mean())
    assert second.cv == pytest.approx(vals[40:60].std() / vals[40:60].mean())


def test_unsorted_releases_rejected():
    with pytest.raises(LabelingError):
        build_windows(list(reversed(RELEASES)), [], {})


def test_cv_cases():
    cfg = LabelerConfig(min_samples=2)
    const = FunctionWindow("f", None, 0, 1, WindowStats(1, 1, coefficient_of_variation([0.2] * 10), 10, 10))
    assert const.cv == 0.0 and stability_filter([const], cfg) == [const]
    a = 0.25
    cv = coefficient_of_variation([a, 3 * a] * 5)
    assert cv == 0.5
    w = FunctionWindow("f", None, 0, 1, WindowStats(1, 1, cv, 10, 10))
    assert stability_filter([w], LabelerConfig(cv_max=0.49)) == []
    assert stability_filter([w], LabelerConfig(cv_max=0.5)) == [w]
    one = FunctionWindow("f", None, 0, 1, WindowStats(1, 1, 0.0, 1, 1))
    assert stability_filter([one], LabelerConfig(min_samples=5)) == []
    assert coefficient_of_variation([0.0, 0.0]) == 0.0
    report = {}
    zero_mean = FunctionWindow("f", None, 0, 1, WindowStats(0, 0, float("inf"), 10, 10))
    assert stability_filter([zero_mean], LabelerConfig(), report) == []
    assert report == {"undefined_cv": 1}


def test_binarize_strict():
    cfg = LabelerConfig(threshold_t=0.004)
    assert binarize(stats_window(0.008), cfg) is True
    assert binarize(stats_window(0.004), cfg) is False
    with pytest.raises(LabelingError):
        binarize(FunctionWindow("f", None, 0, 1, None), cfg)


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.5, 0.5, allow_nan=False), st.floats(1e-4, 0.1))
def test_binarize_pure(delta, t):
    w = stats_window(delta)
    assert binarize(w, LabelerConfig(threshold_t=t)) == (w.stats.delta_gcpu > t)


def _example(i, empty=False, ts=0.0, label=False):
    ch = change(" ctx()", name=f"f{i}") if empty else change("+g()", name=f"f{i}")
    w = FunctionWindow(f"f{i}", ch, ts, ts + 1, WindowStats(0.1, 0.1, 0.1, 20, 20), "R", f"D{i}")
    return LabeledExample(w, label, ts)


def test_remove_invalid_injection():
    rng = np.random.default_rng(1)
    inject = set(rng.choice(400, 20, replace=False).tolist())
    exs = [_example(i, empty=i in inject) for i in range(400)]
    kept = remove_invalid(exs)
    assert {e.window.function_name for e in exs} - {e.window.function_name for e in kept} == {f"f{i}" for i in inject}
    valid = [_example(i) for i in range(10)]
    assert remove_invalid(valid) == valid


def test_label_windows_report():
    ws = [stats_window(0.01), stats_window(0.0), FunctionWindow("g", change("+a()"), 0, 1, None),
          stats_window(0.01, cv=3.0)]
    out, summary = label_windows(ws, LabelerConfig())
    assert [e.label for e in out] == [True, False]
    assert summary["dropped"] == {"absent_stats": 1, "high_cv": 1}
    assert summary["positive_rate"] == 0.5


def test_split_month_boundary():
    rng = np.random.default_rng(2)
    exs = [_example(i, ts=float(t)) for i, t in enumerate(rng.uniform(0, 6, 600))]
    train, test = chronological_split(exs, 5.0)
    assert 3.5 < len(train) / len(test) < 7.0
    with pytest.warns(UserWarning):
        tr, te = chronological_split(exs, -1.0)
    assert tr == []


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=40), st.floats(0, 100))
def test_split_order_statistics(times, cutoff):
    exs = [_example(i, ts=t) for i, t in enumerate(times)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        train, test = chronological_split(exs, cutoff)
    assert len(train) + len(test) == len(exs)
    if train:
        assert max(e.release_timestamp for e in train) < cutoff
    if test:
        assert cutoff <= min(e.release_timestamp for e in test)


def test_period_and_random_split():
    exs = [_example(i, ts=float(i)) for i in range(60)]
    tr, tu, te = period_split(exs, 40, 50)
    assert (len(tr), len(tu), len(te)) == (40, 10, 10)
    a, b = random_split(exs, 0.25, seed=3)
    assert len(b) == 15 and {id(e) for e in a}.isdisjoint({id(e) for e in b})
    with pytest.raises(ValueError):
        period_split(exs, 50, 40)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=5, unique=True))
def test_windows_tile(release_numbers):
    s = series(np.full(70, 0.05))
    rels = sorted(release_numbers)
    ch = [fc(RELEASES[r - 1], f"D{r}") for r in rels]
    ws = build_windows(RELEASES, ch, {"f": s}, end_time=70.0)
    assert ws[0].t_start == RELEASES[rels[0] - 1].timestamp
    assert ws[-1].t_end == 70.0
    assert all(a.t_end == b.t_start for a, b in zip(ws, ws[1:]))


def test_jsonl_round_trip(tmp_path):
    exs = [_example(i, ts=float(i), label=i % 2 == 0) for i in range(5)]
    write_examples(tmp_path / "e.jsonl", exs)
    back = read_examples(tmp_path / "e.jsonl")
    assert [(e.example_id, e.label, e.window.stats) for e in back] == [(e.example_id, e.label, e.window.stats) for e in exs]
