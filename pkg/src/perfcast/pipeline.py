"""End-to-end stages over persisted artifacts, each leaving a run manifest.

Layout under the output directory::

    labels/examples.jsonl, labels/report.json
    split/split.json
    features/<feat>/rows.jsonl (+ bow_model.json, changes.jsonl, proposer.json | encoder.json)
    models/<tag>.json, scores/<tag>.jsonl
    eval/<tag>/report.json, curve.csv, curve.dat, confusion.txt
    tune/<tag>.json, filter/<tag>.json
    explain/<tag>.jsonl, explain/<tag>.txt
    manifests/<command>[-<tag>].json

``<feat>`` is ``bow-c<N>`` or ``opaque``; ``<tag>`` is the model name plus
``-c<N>`` for BoW models.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import shutil
from dataclasses import asdict
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from . import bow, evaluation, explain, labeler, opaque
from .classifiers import (
    ModelScorer,
    load_model,
    predict_proba,
    save_model,
    train_gradient_boosting,
    train_random_forest,
)
from .diffcore import RenderedChange, expand_context, extract_function_changes, parse_unified_diff
from .fleetsim import CorpusConfig, CorpusReader, generate_corpus, write_corpus

log = logging.getLogger("perfcast")

MODELS = ("bow-rf", "bow-gb", "opaque-rf", "opaque-gb")
SPLITS = ("train", "tune", "test")

DEFAULT_CONFIG: dict = {
    "seed": 42,
    "paths": {"corpus": "corpus", "out": "out"},
    "synth": {},
    "label": {"threshold_t": 0.004, "cv_max": 1.0, "min_samples": 10},
    "split": {
        "mode": "chronological",
        "tune_cutoff": None,
        "test_cutoff": None,
        "tune_span_fraction": 4.0 / 6.0,
        "test_span_fraction": 5.0 / 6.0,
    },
    "featurize": {"mode": "bow", "context": 1, "k1": 1.2, "b": 0.75, "min_count": 5},
    "train": {
        "model": "bow-rf",
        "n_estimators": 1000,
        "gb_n_estimators": 100,
        "learning_rate": 0.1,
        "max_depth": 3,
        "n_jobs": 1,
    },
    "tune": {"mode": "target_recall", "target": 1.0},
    "eval": {"threshold": 0.5},
    "explain": {"max_edits": 3, "k_per_site": 5, "limit": 100, "threshold": "tuned", "split": "test"},
    "run": {"models": ["bow-rf", "opaque-gb", "opaque-rf"], "contexts": [1, 7]},
}


class PipelineError(RuntimeError):
    """Bad or missing data; the CLI maps it to exit code 2."""


class UsageError(ValueError):
    """Bad arguments or configuration; the CLI maps it to exit code 1."""


# ------------------------------------------------------------------ config


def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise UsageError(f"config file {p} not found")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {p}: {exc}") from None
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise UsageError(f"unknown config sections: {sorted(unknown)}")
        cfg = deep_merge(cfg, user)
    if overrides:
        cfg = deep_merge(cfg, overrides)
    if cfg.get("seed") is None:
        raise UsageError("a seed is required")
    return cfg


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    # paths do not change results, so they stay out of the hash
    body = {k: v for k, v in cfg.items() if k != "paths"}
    return hashlib.sha256(canonical(body).encode()).hexdigest()


def file_hash(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def tree_hash(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(p.relative_to(root).as_posix().encode() + b"\0" + file_hash(p).encode() + b"\n")
    return h.hexdigest()


class Workspace:
    def __init__(self, cfg: dict, base: str | Path = "."):
        self.cfg = cfg
        self.base = Path(base)
        self.corpus = self.base / cfg["paths"]["corpus"]
        self.out = self.base / cfg["paths"]["out"]

    def rel(self, p: Path) -> str:
        try:
            return p.resolve().relative_to(self.base.resolve()).as_posix()
        except ValueError:
            return p.name

    def need(self, p: Path, producer: str) -> Path:
        if not p.exists():
            raise PipelineError(f"missing {self.rel(p)}; run `perfcast {producer}` first")
        return p

    def write_manifest(self, command: str, tag: str | None, inputs: Iterable[Path],
                       outputs: Iterable[Path], extra: dict | None = None) -> Path:
        def digest(p: Path) -> str:
            return tree_hash(p) if p.is_dir() else file_hash(p)
        man = {
            "command": command,
            "tag": tag,
            "config_hash": config_hash(self.cfg),
            "seed": self.cfg["seed"],
            "inputs": {self.rel(p): digest(p) for p in sorted(set(inputs))},
            "outputs": {self.rel(p): digest(p) for p in sorted(set(outputs))},
        }
        if extra:
            man["details"] = extra
        d = self.out / "manifests"
        d.mkdir(parents=True, exist_ok=True)
        path = d / (f"{command}-{tag}.json" if tag else f"{command}.json")
        path.write_text(json.dumps(man, sort_keys=True, indent=1) + "\n")
        return path


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")
    return path


def read_json(path: Path):
    return json.loads(path.read_text())


def write_jsonl(path: Path, rows: Iterable[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(canonical(r) + "\n")
    return path


def read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ------------------------------------------------------------------ synth


def corpus_config(cfg: dict, n_changes: int | None = None) -> CorpusConfig:
    synth = dict(cfg.get("synth", {}))
    synth.setdefault("seed", cfg["seed"])
    if n_changes is not None:
        synth["n_changes"] = n_changes
    try:
        return CorpusConfig.from_json(synth)
    except TypeError as exc:
        raise UsageError(f"bad synth config: {exc}") from None


def stage_synth(ws: Workspace, force: bool = False, n_changes: int | None = None) -> dict:
    cc = corpus_config(ws.cfg, n_changes)
    try:
        cc.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if ws.corpus.exists() and any(ws.corpus.iterdir()):
        if not force:
            raise UsageError(f"{ws.rel(ws.corpus)} is not empty; pass --force to overwrite")
        shutil.rmtree(ws.corpus)
    corpus = generate_corpus(cc)
    write_corpus(corpus, ws.corpus)
    n_reg = sum(1 for t in corpus.truth if t["regression"])
    summary = {
        "n_releases": len(corpus.releases),
        "n_changes": len(corpus.commits),
        "n_planted_regressions": n_reg,
        "planted_rate": n_reg / len(corpus.commits),
        "n_functions": len(corpus.editable),
    }
    ws.write_manifest("synth", None, [], [ws.corpus], summary)
    return summary


# ------------------------------------------------------------------ label


def _reader(ws: Workspace) -> CorpusReader:
    ws.need(ws.corpus / "corpus.json", "synth")
    return CorpusReader(ws.corpus)


def corpus_function_changes(reader: CorpusReader):
    """Function changes at the stored context width, plus per-diff metadata."""
    releases = reader.releases()
    ts = {r.release_id: r.timestamp for r in releases}
    index = reader.index()
    changes: list[labeler.FunctionChange] = []
    meta: dict[str, dict] = {}
    for c in reader.commits():
        diffs = parse_unified_diff(reader.diff_text(c["diff_id"]))
        revs = {f["path"]: f for f in c["files"]}
        row = opaque.extract_opaque(opaque.DiffMetadata(c["team"], c["tenure"], diffs))
        meta[c["diff_id"]] = {"author": c["author"], "opaque": row.to_json()}
        for d in diffs:
            f = revs[d.file_path]
            before = index.get((f["before"], d.file_path), [])
            after = index.get((f["after"], d.file_path), [])
            for rc in extract_function_changes(d, before, after):
                changes.append(labeler.FunctionChange(c["release_id"], ts[c["release_id"]], c["diff_id"], rc))
    return releases, changes, meta


def stage_label(ws: Workspace) -> dict:
    reader = _reader(ws)
    lc = ws.cfg["label"]
    try:
        config = labeler.LabelerConfig(lc["threshold_t"], lc["cv_max"], lc["min_samples"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    releases, changes, meta = corpus_function_changes(reader)
    series = reader.series()
    windows = labeler.build_windows(releases, changes, series, end_time=reader.meta["end"],
                                    start_time=reader.meta["start"])
    examples, report = labeler.label_windows(windows, config, meta)
    report["span"] = [reader.meta["start"], reader.meta["end"]]
    out = ws.out / "labels"
    out.mkdir(parents=True, exist_ok=True)
    labeler.write_examples(out / "examples.jsonl", examples)
    write_json(out / "report.json", report)
    ws.write_manifest("label", None, [ws.corpus], [out / "examples.jsonl", out / "report.json"])
    return report


def _examples(ws: Workspace) -> list[labeler.LabeledExample]:
    return labeler.read_examples(ws.need(ws.out / "labels" / "examples.jsonl", "label"))


# ------------------------------------------------------------------ split


def stage_split(ws: Workspace, mode: str | None = None) -> dict:
    sc = ws.cfg["split"]
    mode = mode or sc["mode"]
    if mode not in ("chronological", "random"):
        raise UsageError(f"unknown split mode {mode!r}")
    examples = _examples(ws)
    span = read_json(ws.need(ws.out / "labels" / "report.json", "label"))["span"]
    t0, t1 = span
    tune_cut = sc["tune_cutoff"] if sc["tune_cutoff"] is not None else t0 + sc["tune_span_fraction"] * (t1 - t0)
    test_cut = sc["test_cutoff"] if sc["test_cutoff"] is not None else t0 + sc["test_span_fraction"] * (t1 - t0)
    try:
        train, tune, test = labeler.period_split(examples, tune_cut, test_cut)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    parts = {"train": train, "tune": tune, "test": test}
    note = None
    if mode == "random":
        # same part sizes as the chronological split, members drawn at random
        rng = np.random.default_rng(ws.cfg["seed"])
        order = rng.permutation(len(examples))
        shuffled = [examples[i] for i in order]
        a, b = len(train), len(train) + len(tune)
        parts = {"train": shuffled[:a], "tune": shuffled[a:b], "test": shuffled[b:]}
        note = "random split: for experiments only (leaks future changes into training)"
    ids = {k: sorted(e.example_id for e in v) for k, v in parts.items()}
    summary = {
        "mode": mode,
        "note": note,
        "tune_cutoff": tune_cut,
        "test_cutoff": test_cut,
        "sizes": {k: len(v) for k, v in parts.items()},
        "positives": {k: sum(1 for e in v if e.label) for k, v in parts.items()},
    }
    path = write_json(ws.out / "split" / "split.json", {**summary, "ids": ids})
    ws.write_manifest("split", None, [ws.out / "labels" / "examples.jsonl"], [path])
    return summary


def _split_ids(ws: Workspace) -> dict[str, set[str]]:
    obj = read_json(ws.need(ws.out / "split" / "split.json", "split"))
    return {k: set(v) for k, v in obj["ids"].items()}


# ------------------------------------------------------------------ featurize


def feature_name(mode: str, context: int) -> str:
    return f"bow-c{context}" if mode == "bow" else "opaque"


def render_at_width(reader: CorpusReader, wanted: set[tuple[str, str]], width: int
                    ) -> dict[tuple[str, str], RenderedChange]:
    """Re-render the wanted (diff_id, function) changes with ``width`` context lines."""
    index = reader.index()
    out: dict[tuple[str, str], RenderedChange] = {}
    diff_ids = {d for d, _ in wanted}
    for commit, triples in reader.replay():
        did = commit["diff_id"]
        if did not in diff_ids:
            continue
        revs = {f["path"]: f for f in commit["files"]}
        for d, before, after in triples:
            f = revs[d.file_path]
            ib = index.get((f["before"], d.file_path), [])
            ia = index.get((f["after"], d.file_path), [])
            wide = expand_context(d, before, after, width)
            for rc in extract_function_changes(wide, ib, ia, width):
                key = (did, rc.function_name)
                if key in wanted:
                    out[key] = rc
    return out


def stage_featurize(ws: Workspace, mode: str | None = None, context: int | None = None) -> dict:
    fc = ws.cfg["featurize"]
    mode = mode or fc["mode"]
    context = fc["context"] if context is None else context
    if mode not in ("bow", "opaque"):
        raise UsageError(f"unknown feature mode {mode!r}")
    if context < 0:
        raise UsageError("context must be >= 0")
    examples = _examples(ws)
    split = _split_ids(ws)
    train_ids = split["train"]
    out = ws.out / "features" / feature_name(mode, context)
    out.mkdir(parents=True, exist_ok=True)
    inputs = [ws.out / "labels" / "examples.jsonl", ws.out / "split" / "split.json"]
    if mode == "opaque":
        rows = [opaque.OpaqueRow.from_json(e.meta["opaque"]) for e in examples]
        enc = opaque.fit_encoder([r for r, e in zip(rows, examples) if e.example_id in train_ids],
                                 fc.get("min_count", opaque.MIN_COUNT))
        X = opaque.encode(enc, rows)
        opaque.save_encoder(out / "encoder.json", enc)
        outputs = [out / "encoder.json"]
        n_cols = enc.n_columns
    else:
        reader = _reader(ws)
        keys = [(e.window.diff_id, e.window.function_name) for e in examples]
        rendered = render_at_width(reader, set(keys), context)
        missing = [k for k in keys if k not in rendered]
        if missing:
            raise PipelineError(f"{len(missing)} labeled changes not found in the corpus, e.g. {missing[0]}")
        changes = [rendered[k] for k in keys]
        docs = [bow.tokenize_change(c) for c in changes]
        train_docs = [d for d, e in zip(docs, examples) if e.example_id in train_ids]
        vocab = bow.build_vocabulary(train_docs)
        params = bow.fit_bm25(train_docs, vocab, fc["k1"], fc["b"])
        X = bow.to_csr([bow.vectorize(vocab, params, d) for d in docs], len(vocab))
        bow.save_bow_model(out / "bow_model.json", vocab, params)
        write_jsonl(out / "changes.jsonl",
                    ({"example_id": e.example_id, **c.to_json()} for e, c in zip(examples, changes)))
        proposer = explain.FrequencyProposer().fit(
            c for c, e in zip(changes, examples) if e.example_id in train_ids)
        write_json(out / "proposer.json", proposer.to_json())
        outputs = [out / "bow_model.json", out / "changes.jsonl", out / "proposer.json"]
        inputs.append(ws.corpus)
        n_cols = len(vocab)
    X = sp.csr_matrix(X)
    write_jsonl(out / "rows.jsonl", (
        {"example_id": e.example_id,
         "cols": X.indices[X.indptr[i]:X.indptr[i + 1]].tolist(),
         "vals": X.data[X.indptr[i]:X.indptr[i + 1]].tolist()}
        for i, e in enumerate(examples)))
    write_json(out / "meta.json", {"mode": mode, "context": context if mode == "bow" else None,
                                   "n_columns": n_cols, "n_rows": X.shape[0]})
    outputs += [out / "rows.jsonl", out / "meta.json"]
    ws.write_manifest("featurize", feature_name(mode, context), inputs, outputs)
    return {"features": feature_name(mode, context), "n_rows": X.shape[0], "n_columns": n_cols}


def load_features(ws: Workspace, feat: str) -> tuple[list[str], sp.csr_matrix]:
    d = ws.out / "features" / feat
    meta = read_json(ws.need(d / "meta.json", f"featurize ({feat})"))
    rows = read_jsonl(d / "rows.jsonl")
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    for i, r in enumerate(rows):
        indptr[i + 1] = indptr[i] + len(r["cols"])
    indices = np.fromiter((c for r in rows for c in r["cols"]), dtype=np.int64, count=indptr[-1])
    data = np.fromiter((v for r in rows for v in r["vals"]), dtype=np.float64, count=indptr[-1])
    X = sp.csr_matrix((data, indices, indptr), shape=(len(rows), meta["n_columns"]))
    return [r["example_id"] for r in rows], X


# ------------------------------------------------------------------ train / score


def model_tag(model: str, context: int) -> str:
    return f"{model}-c{context}" if model.startswith("bow") else model


def _parse_model(model: str) -> tuple[str, str]:
    if model not in MODELS:
        raise UsageError(f"unknown model {model!r}; choose from {', '.join(MODELS)}")
    feat_mode, algo = model.split("-")
    return feat_mode, algo


def stage_train(ws: Workspace, model: str | None = None, context: int | None = None) -> dict:
    tc = ws.cfg["train"]
    model = model or tc["model"]
    context = ws.cfg["featurize"]["context"] if context is None else context
    feat_mode, algo = _parse_model(model)
    feat = feature_name(feat_mode, context)
    ids, X = load_features(ws, feat)
    examples = {e.example_id: e for e in _examples(ws)}
    split = _split_ids(ws)
    tr = np.array([i in split["train"] for i in ids])
    y = np.array([bool(examples[i].label) for i in ids])
    if not tr.any():
        raise PipelineError("training split is empty")
    seed = int(ws.cfg["seed"])
    try:
        if algo == "rf":
            m = train_random_forest(X[tr], y[tr], n_estimators=tc["n_estimators"], seed=seed,
                                    n_jobs=tc.get("n_jobs", 1))
        else:
            m = train_gradient_boosting(X[tr], y[tr], n_estimators=tc["gb_n_estimators"],
                                        learning_rate=tc["learning_rate"], max_depth=tc["max_depth"],
                                        seed=seed)
    except ValueError as exc:
        raise PipelineError(f"training failed: {exc}") from None
    tag = model_tag(model, context)
    mpath = ws.out / "models" / f"{tag}.json"
    mpath.parent.mkdir(parents=True, exist_ok=True)
    save_model(m, mpath)
    scores = predict_proba(m, X)
    part = {i: k for k, v in split.items() for i in v}
    spath = write_jsonl(ws.out / "scores" / f"{tag}.jsonl", (
        {"example_id": i, "split": part.get(i), "score": float(s), "label": bool(examples[i].label),
         "timestamp": examples[i].release_timestamp}
        for i, s in zip(ids, scores)))
    feat_dir = ws.out / "features" / feat
    ws.write_manifest("train", tag, [feat_dir / "rows.jsonl", ws.out / "split" / "split.json",
                                     ws.out / "labels" / "examples.jsonl"], [mpath, spath])
    return {"model": tag, "n_train": int(tr.sum()), "n_train_positive": int((y & tr).sum())}


def load_scores(ws: Workspace, tag: str, part: str) -> evaluation.ScoredSet:
    rows = read_jsonl(ws.need(ws.out / "scores" / f"{tag}.jsonl", f"train ({tag})"))
    rows = [r for r in rows if r["split"] == part]
    if not rows:
        raise PipelineError(f"no {part} examples scored for {tag}")
    return evaluation.ScoredSet(
        np.array([r["score"] for r in rows]),
        np.array([r["label"] for r in rows]),
        np.array([r["timestamp"] for r in rows]),
    )


def _resolve_threshold(ws: Workspace, tag: str, value) -> float:
    if value == "tuned":
        return float(read_json(ws.need(ws.out / "tune" / f"{tag}.json", f"tune ({tag})"))["threshold"])
    try:
        return float(value)
    except (TypeError, ValueError):
        raise UsageError(f"bad threshold {value!r}") from None


def stage_eval(ws: Workspace, model: str | None = None, context: int | None = None,
               threshold=None, part: str = "test") -> dict:
    model = model or ws.cfg["train"]["model"]
    context = ws.cfg["featurize"]["context"] if context is None else context
    _parse_model(model)
    tag = model_tag(model, context)
    s = load_scores(ws, tag, part)
    thr = _resolve_threshold(ws, tag, ws.cfg["eval"]["threshold"] if threshold is None else threshold)
    out = ws.out / "eval" / tag
    out.mkdir(parents=True, exist_ok=True)
    cm = evaluation.confusion_at(s, thr)
    try:
        auc = evaluation.roc_auc(s)
        ap = evaluation.average_precision(s)
    except evaluation.MetricError as exc:
        raise PipelineError(f"{part} split: {exc}") from None
    report = {
        "model": tag,
        "split": part,
        "n": len(s),
        "n_positive": s.n_pos,
        "prior": s.prior,
        "roc_auc": auc,
        "average_precision": ap,
        "threshold": thr,
        "confusion": asdict(cm),
        "per_class": cm.per_class(),
    }
    write_json(out / "report.json", report)
    evaluation.write_curve_csv(out / "curve.csv", s)
    evaluation.write_gnuplot(out / "curve.dat", s)
    (out / "confusion.txt").write_text(cm.table() + "\n")
    ws.write_manifest("eval", tag, [ws.out / "scores" / f"{tag}.jsonl"],
                      [out / "report.json", out / "curve.csv", out / "curve.dat", out / "confusion.txt"])
    return report


def stage_tune(ws: Workspace, model: str | None = None, context: int | None = None,
               mode: str | None = None, target: float | None = None) -> dict:
    model = model or ws.cfg["train"]["model"]
    context = ws.cfg["featurize"]["context"] if context is None else context
    _parse_model(model)
    tag = model_tag(model, context)
    tc = ws.cfg["tune"]
    s = load_scores(ws, tag, "tune")
    try:
        policy = evaluation.tune_threshold(s, mode or tc["mode"], tc["target"] if target is None else target)
    except evaluation.ThresholdError as exc:
        raise PipelineError(str(exc)) from None
    cm = evaluation.confusion_at(s, policy.threshold)
    out = write_json(ws.out / "tune" / f"{tag}.json", {
        **policy.to_json(), "model": tag, "tune_recall": cm.recall, "tune_precision": cm.precision,
        "tune_missed": cm.fn})
    ws.write_manifest("tune", tag, [ws.out / "scores" / f"{tag}.jsonl"], [out])
    return read_json(out)


def stage_filter(ws: Workspace, model: str | None = None, context: int | None = None) -> dict:
    model = model or ws.cfg["train"]["model"]
    context = ws.cfg["featurize"]["context"] if context is None else context
    _parse_model(model)
    tag = model_tag(model, context)
    thr = _resolve_threshold(ws, tag, "tuned")
    report = {"model": tag, "threshold": thr}
    for part in ("tune", "test"):
        report[part] = evaluation.filtering_report(load_scores(ws, tag, part), thr)
    out = write_json(ws.out / "filter" / f"{tag}.json", report)
    ws.write_manifest("filter", tag, [ws.out / "scores" / f"{tag}.jsonl", ws.out / "tune" / f"{tag}.json"], [out])
    return report


# ------------------------------------------------------------------ explain


def load_explainer(ws: Workspace, tag: str, context: int):
    feat = ws.out / "features" / feature_name("bow", context)
    vocab, params = bow.load_bow_model(ws.need(feat / "bow_model.json", f"featurize --mode bow --context {context}"))
    proposer = explain.FrequencyProposer.from_json(read_json(feat / "proposer.json"))
    changes = {r["example_id"]: RenderedChange.from_json(r) for r in read_jsonl(feat / "changes.jsonl")}
    model = load_model(ws.need(ws.out / "models" / f"{tag}.json", f"train --model {tag}"))
    return ModelScorer(model), bow.BowVectorizer(vocab, params), proposer, changes


def stage_explain(ws: Workspace, model: str | None = None, context: int | None = None,
                  limit: int | None = None, threshold=None) -> dict:
    ec = ws.cfg["explain"]
    model = model or ws.cfg["train"]["model"]
    context = ws.cfg["featurize"]["context"] if context is None else context
    feat_mode, _ = _parse_model(model)
    if feat_mode != "bow":
        raise UsageError("explanations need a code-aware (bow-*) model")
    tag = model_tag(model, context)
    thr = _resolve_threshold(ws, tag, ec["threshold"] if threshold is None else threshold)
    limit = ec["limit"] if limit is None else limit
    scorer, vectorizer, proposer, changes = load_explainer(ws, tag, context)
    rows = read_jsonl(ws.need(ws.out / "scores" / f"{tag}.jsonl", f"train ({tag})"))
    picked = [r for r in rows if r["split"] == ec["split"] and r["score"] > thr][:limit]
    batch = explain.make_batch_scorer(scorer, vectorizer)
    records, texts = [], []
    for r in picked:
        ch = changes[r["example_id"]]
        cf = explain.greedy_search(batch, None, ch, thr, ec["max_edits"], ec["k_per_site"], proposer)
        rec = explain.explanation_record(r["example_id"], ch, cf)
        rec["label"] = r["label"]
        records.append(rec)
        if cf is not None:
            texts.append(f"## {r['example_id']}  score {cf.original_score:.4f} -> {cf.flipped_score:.4f}\n"
                         f"{rec['annotated']}\n")
    out = ws.out / "explain"
    jpath = write_jsonl(out / f"{tag}.jsonl", records)
    tpath = out / f"{tag}.txt"
    tpath.write_text("\n".join(texts))
    n_found = sum(1 for r in records if r["counterfactual"] is not None)
    ws.write_manifest("explain", tag, [ws.out / "models" / f"{tag}.json", ws.out / "scores" / f"{tag}.jsonl"],
                      [jpath, tpath])
    return {"model": tag, "threshold": thr, "explained": len(records), "found": n_found}


# ------------------------------------------------------------------ run


def stage_run(ws: Workspace, force: bool = False) -> dict:
    """synth -> label -> split -> featurize -> train -> tune -> eval -> filter -> explain."""
    summary: dict = {"synth": stage_synth(ws, force=force)}
    summary["label"] = stage_label(ws)
    summary["split"] = stage_split(ws)
    rc = ws.cfg["run"]
    built: set[str] = set()
    for model in rc["models"]:
        feat_mode, _ = _parse_model(model)
        contexts = rc["contexts"] if feat_mode == "bow" else [ws.cfg["featurize"]["context"]]
        for ctx in contexts:
            tag = model_tag(model, ctx)
            if feature_name(feat_mode, ctx) not in built:
                stage_featurize(ws, feat_mode, ctx)
                built.add(feature_name(feat_mode, ctx))
            stage_train(ws, model, ctx)
            stage_tune(ws, model, ctx)
            summary[tag] = {"eval": stage_eval(ws, model, ctx), "filter": stage_filter(ws, model, ctx)}
            if feat_mode == "bow":
                summary[tag]["explain"] = stage_explain(ws, model, ctx)
    write_json(ws.out / "run_summary.json", summary)
    return summary
