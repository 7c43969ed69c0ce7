"""Turn function changes plus GCPU series into labeled examples."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .diffcore import LinePatch, RenderedChange
from .fleetsim.sampling import GcpuSeries


class LabelingError(ValueError):
    pass


@dataclass(frozen=True)
class LabelerConfig:
    threshold_t: float = 0.004
    cv_max: float = 1.0
    min_samples: int = 10

    def __post_init__(self):
        if self.threshold_t <= 0:
            raise ValueError("threshold_t must be > 0")
        if self.cv_max <= 0:
            raise ValueError("cv_max must be > 0")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")


@dataclass(frozen=True)
class FunctionChange:
    """One rendered function change shipped in a release."""

    release_id: str
    timestamp: float
    diff_id: str
    change: RenderedChange

    @property
    def function_name(self) -> str:
        return self.change.function_name


@dataclass(frozen=True)
class WindowStats:
    gcpu_before: float
    gcpu_after: float
    cv: float
    n_before: int
    n_after: int

    @property
    def delta_gcpu(self) -> float:
        return self.gcpu_after - self.gcpu_before


@dataclass(frozen=True)
class FunctionWindow:
    function_name: str
    change: RenderedChange | None
    t_start: float
    t_end: float
    stats: WindowStats | None
    release_id: str = ""
    diff_id: str = ""

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"empty window [{self.t_start}, {self.t_end}) for {self.function_name}")

    @property
    def gcpu_before(self) -> float | None:
        return None if self.stats is None else self.stats.gcpu_before

    @property
    def gcpu_after(self) -> float | None:
        return None if self.stats is None else self.stats.gcpu_after

    @property
    def delta_gcpu(self) -> float | None:
        return None if self.stats is None else self.stats.delta_gcpu

    @property
    def cv(self) -> float | None:
        return None if self.stats is None else self.stats.cv


@dataclass(frozen=True)
class LabeledExample:
    window: FunctionWindow
    label: bool | None
    release_timestamp: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def example_id(self) -> str:
        return f"{self.window.diff_id}:{self.window.function_name}"


def coefficient_of_variation(x: np.ndarray) -> float:
    """Population sigma / mu; infinite when mu == 0 and sigma > 0."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return float("nan")
    mu = float(x.mean())
    sd = float(x.std())
    if mu == 0.0:
        return 0.0 if sd == 0.0 else float("inf")
    return sd / abs(mu)


def _merge_same_release(changes: Sequence[FunctionChange]) -> list[FunctionChange]:
    out: list[FunctionChange] = []
    for ch in changes:
        if out and out[-1].timestamp == ch.timestamp:
            prev = out[-1]
            merged = RenderedChange(
                prev.change.function_name,
                prev.change.context_width,
                tuple(prev.change.lines) + tuple(ch.change.lines),
                prev.change.file_path,
            )
            out[-1] = replace(prev, change=merged)
        else:
            out.append(ch)
    return out


def build_windows(
    releases: Sequence,
    function_changes: Iterable[FunctionChange],
    series: Mapping[str, GcpuSeries],
    end_time: float | None = None,
    start_time: float | None = None,
) -> list[FunctionWindow]:
    """One window per (function, release that changed it).

    A window runs from its release to the next release changing the same
    function (or ``end_time``). The before-mean covers the preceding window,
    or everything since ``start_time`` for a function's first change.
    """
    times = [r.timestamp for r in releases]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise LabelingError("releases are not in chronological order")
    if end_time is None:
        last = [float(s.timestamps[-1]) for s in series.values() if len(s)]
        step = [float(np.min(np.diff(s.timestamps))) for s in series.values() if len(s) > 1]
        if last:
            end_time = max(last) + (min(step) if step else 1.0)
        else:
            end_time = (times[-1] if times else 0.0) + 1.0
    if start_time is None:
        first = [float(s.timestamps[0]) for s in series.values() if len(s)]
        start_time = min(first) if first else float("-inf")

    by_fn: dict[str, list[FunctionChange]] = {}
    for ch in function_changes:
        by_fn.setdefault(ch.function_name, []).append(ch)

    windows: list[FunctionWindow] = []
    for name, changes in by_fn.items():
        changes = _merge_same_release(sorted(changes, key=lambda c: c.timestamp))
        s = series.get(name)
        for k, ch in enumerate(changes):
            t0 = ch.timestamp
            t1 = changes[k + 1].timestamp if k + 1 < len(changes) else end_time
            if t1 <= t0:
                continue
            prev = changes[k - 1].timestamp if k > 0 else start_time
            stats = None
            if s is not None:
                after = s.between(t0, t1)
                before = s.between(prev, t0)
                if after.size and before.size:
                    stats = WindowStats(
                        gcpu_before=float(before.mean()),
                        gcpu_after=float(after.mean()),
                        cv=coefficient_of_variation(after),
                        n_before=int(before.size),
                        n_after=int(after.size),
                    )
            windows.append(FunctionWindow(name, ch.change, t0, t1, stats, ch.release_id, ch.diff_id))
    windows.sort(key=lambda w: (w.t_start, w.diff_id, w.function_name))
    return windows


def window_verdict(w: FunctionWindow, config: LabelerConfig) -> str | None:
    """Reason a window is unstable, or None when it is kept."""
    if w.stats is None:
        return "absent_stats"
    if w.stats.n_after < config.min_samples or w.stats.n_before < config.min_samples:
        return "too_few_samples"
    if not np.isfinite(w.stats.cv):
        return "undefined_cv"
    if w.stats.cv > config.cv_max:
        return "high_cv"
    return None


def stability_filter(windows: Iterable[FunctionWindow], config: LabelerConfig,
                     report: dict | None = None) -> list[FunctionWindow]:
    kept = []
    for w in windows:
        why = window_verdict(w, config)
        if why is None:
            kept.append(w)
        elif report is not None:
            report[why] = report.get(why, 0) + 1
    return kept


def binarize(window: FunctionWindow, config: LabelerConfig) -> bool:
    if window.stats is None:
        raise LabelingError(f"no gcpu stats for {window.function_name}")
    return window.stats.delta_gcpu > config.threshold_t


def make_example(window: FunctionWindow, config: LabelerConfig, meta: dict | None = None) -> LabeledExample:
    label = binarize(window, config) if window.stats is not None else None
    return LabeledExample(window, label, window.t_start, dict(meta or {}))


def remove_invalid(examples: Iterable[LabeledExample], report: dict | None = None) -> list[LabeledExample]:
    """Drop examples with an empty change or without gcpu stats."""
    kept = []
    for ex in examples:
        w = ex.window
        if w.change is None or w.change.is_empty:
            why = "empty_change"
        elif w.stats is None:
            why = "absent_stats"
        else:
            kept.append(ex)
            continue
        if report is not None:
            report[why] = report.get(why, 0) + 1
    return kept


def label_windows(windows: Sequence[FunctionWindow], config: LabelerConfig,
                  meta: Mapping[str, dict] | None = None) -> tuple[list[LabeledExample], dict]:
    """remove_invalid -> stability_filter -> binarize, with drop bookkeeping."""
    meta = meta or {}
    drops: dict[str, int] = {}
    raw = [LabeledExample(w, None, w.t_start, dict(meta.get(w.diff_id, {}))) for w in windows]
    valid = remove_invalid(raw, drops)
    stable = stability_filter([e.window for e in valid], config, drops)
    keep = {id(w) for w in stable}
    out = [replace(e, label=binarize(e.window, config)) for e in valid if id(e.window) in keep]
    return out, summarize(out, len(windows), drops, config)


def summarize(examples: Sequence[LabeledExample], n_windows: int, drops: Mapping[str, int],
              config: LabelerConfig) -> dict:
    n_pos = sum(1 for e in examples if e.label)
    return {
        "n_windows": n_windows,
        "n_examples": len(examples),
        "n_positive": n_pos,
        "positive_rate": n_pos / len(examples) if examples else 0.0,
        "dropped": dict(sorted(drops.items())),
        "config": {"threshold_t": config.threshold_t, "cv_max": config.cv_max,
                   "min_samples": config.min_samples},
    }


# ----------------------------------------------------------------- splits


def chronological_split(examples: Sequence[LabeledExample], cutoff: float
                        ) -> tuple[list[LabeledExample], list[LabeledExample]]:
    train = [e for e in examples if e.release_timestamp < cutoff]
    test = [e for e in examples if e.release_timestamp >= cutoff]
    if not train or not test:
        warnings.warn(f"chronological split at {cutoff} leaves an empty side", stacklevel=2)
    return train, test


def period_split(examples: Sequence[LabeledExample], tune_cutoff: float, test_cutoff: float
                 ) -> tuple[list[LabeledExample], list[LabeledExample], list[LabeledExample]]:
    """train < tune_cutoff <= tune < test_cutoff <= test."""
    if tune_cutoff > test_cutoff:
        raise ValueError("tune cutoff after test cutoff")
    train, rest = chronological_split(examples, tune_cutoff)
    tune, test = chronological_split(rest, test_cutoff)
    return train, tune, test


def random_split(examples: Sequence[LabeledExample], test_fraction: float, seed: int
                 ) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """Shuffle-and-cut split. For experiments only: it leaks the future into training."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(examples))
    n_test = int(round(test_fraction * len(examples)))
    test_idx = set(order[:n_test].tolist())
    train = [e for i, e in enumerate(examples) if i not in test_idx]
    test = [e for i, e in enumerate(examples) if i in test_idx]
    return train, test


# ----------------------------------------------------------------- JSONL I/O


def example_to_json(ex: LabeledExample) -> dict:
    w = ex.window
    st = w.stats
    return {
        "example_id": ex.example_id,
        "function_name": w.function_name,
        "release_id": w.release_id,
        "diff_id": w.diff_id,
        "release_timestamp": ex.release_timestamp,
        "window": [w.t_start, w.t_end],
        "gcpu_before": None if st is None else st.gcpu_before,
        "gcpu_after": None if st is None else st.gcpu_after,
        "delta_gcpu": None if st is None else st.delta_gcpu,
        "cv": None if st is None else st.cv,
        "n_before": None if st is None else st.n_before,
        "n_after": None if st is None else st.n_after,
        "label": ex.label,
        "change": None if w.change is None else w.change.to_json(),
        "meta": ex.meta,
    }


def example_from_json(obj: dict) -> LabeledExample:
    stats = None
    if obj.get("gcpu_before") is not None:
        stats = WindowStats(obj["gcpu_before"], obj["gcpu_after"], obj["cv"],
                            obj["n_before"], obj["n_after"])
    change = RenderedChange.from_json(obj["change"]) if obj.get("change") else None
    w = FunctionWindow(obj["function_name"], change, obj["window"][0], obj["window"][1], stats,
                       obj["release_id"], obj["diff_id"])
    return LabeledExample(w, obj["label"], obj["release_timestamp"], obj.get("meta", {}))


def write_examples(path: str | Path, examples: Iterable[LabeledExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_json(ex), sort_keys=True, separators=(",", ":")) + "\n")


def read_examples(path: str | Path) -> list[LabeledExample]:
    with open(path, encoding="utf-8") as fh:
        return [example_from_json(json.loads(line)) for line in fh if line.strip()]
