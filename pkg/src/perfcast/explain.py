"""Counterfactual explanations: swap call or import tokens until the
classifier stops flagging a change."""

from __future__ import annotations

import itertools
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .diffcore import LinePatch, RenderedChange

_CALL_RE = re.compile(r"\b([A-Za-z_][A-Za-z0-9_]*)\s*\(")
_IMPORT_RE = re.compile(r"^\s*(?:from|import)\s+([A-Za-z_][A-Za-z0-9_.]*)")
_KEYWORDS = frozenset({
    "if", "elif", "while", "for", "return", "and", "or", "not", "in", "is",
    "def", "class", "lambda", "with", "assert", "yield", "print", "switch", "catch",
})

CALL, IMPORT = "call", "import"


class ExplainError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class PerturbationSite:
    line_index: int
    start: int
    end: int
    kind: str
    token: str


def _code_part(text: str) -> str:
    cut = len(text)
    for marker in ("#", "//"):
        i = text.find(marker)
        if i >= 0:
            cut = min(cut, i)
    return text[:cut]


def find_sites(change: RenderedChange) -> list[PerturbationSite]:
    """Call and import token locations, ordered by (line, span)."""
    sites = []
    for li, ln in enumerate(change.lines):
        code = _code_part(ln.text)
        m = _IMPORT_RE.match(code)
        if m:
            sites.append(PerturbationSite(li, m.start(1), m.end(1), IMPORT, m.group(1)))
            continue
        for m in _CALL_RE.finditer(code):
            name = m.group(1)
            if name in _KEYWORDS:
                continue
            if code[: m.start(1)].rstrip().endswith("def"):
                continue
            sites.append(PerturbationSite(li, m.start(1), m.end(1), CALL, name))
    return sorted(sites)


class Proposer(Protocol):
    def propose(self, site: PerturbationSite, k: int) -> list[str]: ...


class FrequencyProposer:
    """Suggests the most frequent training-corpus tokens of the same kind."""

    def __init__(self):
        self._counts: dict[str, Counter] | None = None

    def fit(self, changes: Iterable[RenderedChange]) -> "FrequencyProposer":
        counts = {CALL: Counter(), IMPORT: Counter()}
        for ch in changes:
            for s in find_sites(ch):
                counts[s.kind][s.token] += 1
        self._counts = counts
        return self

    def ranked(self, kind: str) -> list[str]:
        if self._counts is None:
            raise ExplainError("proposer is not fitted")
        return [t for t, _ in sorted(self._counts[kind].items(), key=lambda kv: (-kv[1], kv[0]))]

    def propose(self, site: PerturbationSite, k: int) -> list[str]:
        return [t for t in self.ranked(site.kind) if t != site.token][:k]

    def to_json(self) -> dict:
        if self._counts is None:
            raise ExplainError("proposer is not fitted")
        return {kind: dict(sorted(c.items())) for kind, c in self._counts.items()}

    @classmethod
    def from_json(cls, obj: dict) -> "FrequencyProposer":
        p = cls()
        p._counts = {CALL: Counter(obj.get(CALL, {})), IMPORT: Counter(obj.get(IMPORT, {}))}
        return p


def propose(site: PerturbationSite, generator: Proposer, k: int) -> list[str]:
    return generator.propose(site, k)


@dataclass(frozen=True)
class Substitution:
    site: PerturbationSite
    original: str
    replacement: str

    def to_json(self) -> dict:
        return {
            "line_index": self.site.line_index,
            "start": self.site.start,
            "end": self.site.end,
            "kind": self.site.kind,
            "original": self.original,
            "replacement": self.replacement,
        }


@dataclass(frozen=True)
class Counterfactual:
    substitutions: tuple[Substitution, ...]
    original_score: float
    flipped_score: float
    threshold: float
    search: str = "greedy"

    def to_json(self) -> dict:
        return {
            "substitutions": [s.to_json() for s in self.substitutions],
            "original_score": self.original_score,
            "flipped_score": self.flipped_score,
            "threshold": self.threshold,
            "search": self.search,
        }


def apply_substitutions(change: RenderedChange, subs: Sequence[Substitution]) -> RenderedChange:
    by_line: dict[int, list[Substitution]] = {}
    for s in subs:
        by_line.setdefault(s.site.line_index, []).append(s)
    lines = list(change.lines)
    for li, group in by_line.items():
        text = lines[li].text
        for s in sorted(group, key=lambda s: -s.site.start):
            if text[s.site.start:s.site.end] != s.original:
                raise ExplainError(f"site {s.site} does not hold {s.original!r}")
            text = text[: s.site.start] + s.replacement + text[s.site.end:]
        lines[li] = LinePatch(lines[li].kind, text)
    return RenderedChange(change.function_name, change.context_width, tuple(lines), change.file_path)


def annotate(change: RenderedChange, cf: Counterfactual) -> str:
    """Rendered change with each swapped token shown as [-old-]{+new+}."""
    marked = [
        Substitution(s.site, s.original, f"[-{s.original}-]{{+{s.replacement}+}}")
        for s in cf.substitutions
    ]
    return apply_substitutions(change, marked).text()


# A batch scorer maps rendered changes to model scores.
BatchScorer = Callable[[Sequence[RenderedChange]], np.ndarray]


def make_batch_scorer(scorer, vectorizer) -> BatchScorer:
    """Combine a model scorer (``score_many`` over a matrix or ``score`` per
    vector) with a change -> vector function."""
    def run(changes: Sequence[RenderedChange]) -> np.ndarray:
        vecs = [vectorizer(c) for c in changes]
        if hasattr(scorer, "score_many") and hasattr(vectorizer, "to_matrix"):
            return np.asarray(scorer.score_many(vectorizer.to_matrix(vecs)), dtype=np.float64)
        return np.array([scorer.score(v) for v in vecs], dtype=np.float64)
    return run


def _flipped(score: float, threshold: float) -> bool:
    return not score > threshold


def _prune(batch: BatchScorer, change, subs: list[Substitution], threshold: float) -> tuple[list[Substitution], float]:
    """Drop substitutions (first-found order) while the decision stays flipped."""
    subs = list(subs)
    while True:
        if len(subs) <= 1:
            break
        trials = [subs[:i] + subs[i + 1:] for i in range(len(subs))]
        scores = batch([apply_substitutions(change, t) for t in trials])
        hit = next((i for i, s in enumerate(scores) if _flipped(s, threshold)), None)
        if hit is None:
            break
        subs = trials[hit]
    final = float(batch([apply_substitutions(change, subs)])[0])
    return subs, final


def greedy_search(
    scorer,
    vectorizer,
    change: RenderedChange,
    threshold: float,
    max_edits: int = 3,
    k_per_site: int = 5,
    generator: Proposer | None = None,
    exhaustive_limit: int = 512,
) -> Counterfactual | None:
    """Greedy best-first token substitution until ``score <= threshold``.

    Each step applies the single substitution that lowers the score most
    (ties: site order, then proposal order). A found set is pruned to be
    1-minimal. When greedy stalls and the candidate space is small enough
    (at most ``exhaustive_limit`` combinations), subsets are enumerated by
    size so no reachable flip is missed.
    """
    if generator is None:
        raise ExplainError("a fitted proposal generator is required")
    batch = make_batch_scorer(scorer, vectorizer) if vectorizer is not None else scorer
    original = float(batch([change])[0])
    if not original > threshold:
        raise ExplainError("not a positive prediction")
    if max_edits <= 0:
        return None

    sites = find_sites(change)
    options = [(s, generator.propose(s, k_per_site)) for s in sites]
    options = [(s, p) for s, p in options if p]
    if not options:
        return None

    chosen: list[Substitution] = []
    used: set[PerturbationSite] = set()
    score = original
    for _ in range(max_edits):
        cands = [Substitution(s, s.token, r) for s, props in options if s not in used for r in props]
        if not cands:
            break
        scores = batch([apply_substitutions(change, chosen + [c]) for c in cands])
        best = int(np.argmin(scores))  # first minimum keeps the tie-break
        if not scores[best] < score:
            break
        chosen.append(cands[best])
        used.add(cands[best].site)
        score = float(scores[best])
        if _flipped(score, threshold):
            subs, final = _prune(batch, change, chosen, threshold)
            return Counterfactual(tuple(subs), original, final, threshold, "greedy")

    return _exhaustive(batch, change, options, threshold, max_edits, original, exhaustive_limit)


def _exhaustive(batch, change, options, threshold, max_edits, original, limit) -> Counterfactual | None:
    space = 1
    for _, props in options:
        space *= len(props) + 1
        if space > limit:
            return None
    for size in range(1, min(max_edits, len(options)) + 1):
        combos = []
        for group in itertools.combinations(options, size):
            for picks in itertools.product(*[props for _, props in group]):
                combos.append([Substitution(s, s.token, r) for (s, _), r in zip(group, picks)])
        scores = batch([apply_substitutions(change, c) for c in combos])
        for c, sc in zip(combos, scores):
            if _flipped(sc, threshold):
                subs, final = _prune(batch, change, c, threshold)
                return Counterfactual(tuple(subs), original, final, threshold, "exhaustive")
    return None


def exhaustive_flip_exists(batch: BatchScorer, change: RenderedChange, generator: Proposer,
                           k_per_site: int, threshold: float, max_edits: int | None = None) -> bool:
    """Whether any combination of proposals (one per site) flips the decision."""
    options = [(s, generator.propose(s, k_per_site)) for s in find_sites(change)]
    options = [(s, p) for s, p in options if p]
    n = len(options) if max_edits is None else min(max_edits, len(options))
    for size in range(1, n + 1):
        for group in itertools.combinations(options, size):
            for picks in itertools.product(*[props for _, props in group]):
                subs = [Substitution(s, s.token, r) for (s, _), r in zip(group, picks)]
                if _flipped(float(batch([apply_substitutions(change, subs)])[0]), threshold):
                    return True
    return False


def is_one_minimal(batch: BatchScorer, change: RenderedChange, cf: Counterfactual) -> bool:
    subs = list(cf.substitutions)
    if not _flipped(float(batch([apply_substitutions(change, subs)])[0]), cf.threshold):
        return False
    for i in range(len(subs)):
        rest = subs[:i] + subs[i + 1:]
        if _flipped(float(batch([apply_substitutions(change, rest)])[0]), cf.threshold):
            return False
    return True


def explanation_record(example_id: str, change: RenderedChange, cf: Counterfactual | None) -> dict:
    return {
        "example_id": example_id,
        "function_name": change.function_name,
        "counterfactual": None if cf is None else cf.to_json(),
        "annotated": None if cf is None else annotate(change, cf),
    }


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))
