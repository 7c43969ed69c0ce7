"""Sub-word Bag-of-Words tokenization and Okapi BM25 vectorization of changes."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .diffcore import LineKind, LinePatch, RenderedChange

TokenMultiset = Counter  # token -> count

_COMMENT_RE = re.compile(r"//.*$|#.*$")
_WORD_RE = re.compile(r"[A-Za-z0-9]+")
_DIGITS_RE = re.compile(r"[0-9]+")
# acronym runs, Capitalized words, lower runs, trailing capitals
_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+")

_PREFIX = {LineKind.ADDED: "+", LineKind.REMOVED: "-", LineKind.CONTEXT: ""}


class VocabularyError(ValueError):
    pass


def split_subwords(text: str) -> list[str]:
    """Lower-cased sub-words of one source line, comments dropped."""
    text = _COMMENT_RE.sub("", text)
    out = []
    for word in _WORD_RE.findall(text):
        word = _DIGITS_RE.sub("", word)
        out.extend(part.lower() for part in _CAMEL_RE.findall(word))
    return out


def tokenize_lines(lines: Iterable[LinePatch]) -> Counter:
    counts: Counter = Counter()
    for ln in lines:
        prefix = _PREFIX[ln.kind]
        counts.update(prefix + sw for sw in split_subwords(ln.text))
    return counts


def tokenize_change(change: RenderedChange) -> Counter:
    return tokenize_lines(change.lines)


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int | None:
        return self._index.get(token)


def build_vocabulary(train: Iterable[Mapping[str, int]]) -> Vocabulary:
    seen: set[str] = set()
    n_docs = 0
    for doc in train:
        n_docs += 1
        seen.update(t for t, c in doc.items() if c > 0)
    if not seen:
        raise VocabularyError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(tuple(sorted(seen)))


@dataclass(frozen=True)
class Bm25Params:
    k1: float
    b: float
    idf: Mapping[str, float]
    avgdl: float
    n_docs: int

    def __post_init__(self):
        if self.k1 <= 0 or not 0.0 <= self.b <= 1.0 or self.avgdl <= 0:
            raise ValueError(f"invalid BM25 parameters k1={self.k1} b={self.b} avgdl={self.avgdl}")


def fit_bm25(
    train: Sequence[Mapping[str, int]], vocab: Vocabulary, k1: float = 1.2, b: float = 0.75
) -> Bm25Params:
    n = len(train)
    if n == 0:
        raise VocabularyError("cannot fit BM25 on an empty corpus")
    df: Counter = Counter()
    total = 0
    for doc in train:
        df.update(t for t, c in doc.items() if c > 0)
        total += sum(doc.values())
    avgdl = total / n
    idf = {t: math.log(1.0 + (n - df[t] + 0.5) / (df[t] + 0.5)) for t in vocab.tokens}
    return Bm25Params(k1=k1, b=b, idf=idf, avgdl=avgdl if avgdl > 0 else 1.0, n_docs=n)


@dataclass(frozen=True)
class SparseVector:
    columns: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.columns, self.columns[1:])):
            raise ValueError("columns must be strictly increasing")

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.columns, self.weights))


def vectorize(vocab: Vocabulary, params: Bm25Params, doc: Mapping[str, int]) -> SparseVector:
    dl = sum(doc.values())
    norm = params.k1 * (1.0 - params.b + params.b * dl / params.avgdl)
    cells = []
    for token, tf in doc.items():
        col = vocab.index(token)
        if col is None or tf <= 0:
            continue
        w = params.idf[token] * tf * (params.k1 + 1.0) / (tf + norm)
        cells.append((col, w))
    cells.sort()
    return SparseVector(tuple(c for c, _ in cells), tuple(w for _, w in cells))


def to_csr(vectors: Sequence[SparseVector], n_columns: int) -> sp.csr_matrix:
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, v in enumerate(vectors):
        indptr[i + 1] = indptr[i] + len(v.columns)
    indices = np.fromiter((c for v in vectors for c in v.columns), dtype=np.int64, count=indptr[-1])
    data = np.fromiter((w for v in vectors for w in v.weights), dtype=np.float64, count=indptr[-1])
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), n_columns))


# ------------------------------------------------------------------ persistence


def save_bow_model(path: str | Path, vocab: Vocabulary, params: Bm25Params) -> None:
    payload = {
        "format": "perfcast-bow",
        "version": 1,
        "tokens": list(vocab.tokens),
        "k1": params.k1,
        "b": params.b,
        "avgdl": params.avgdl,
        "n_docs": params.n_docs,
        "idf": [params.idf[t] for t in vocab.tokens],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_bow_model(path: str | Path) -> tuple[Vocabulary, Bm25Params]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "perfcast-bow":
        raise ValueError(f"{path}: not a BoW model file")
    vocab = Vocabulary(tuple(payload["tokens"]))
    params = Bm25Params(
        k1=payload["k1"],
        b=payload["b"],
        idf=dict(zip(vocab.tokens, payload["idf"])),
        avgdl=payload["avgdl"],
        n_docs=payload["n_docs"],
    )
    return vocab, params


class BowVectorizer:
    """RenderedChange -> BM25 sparse vector, with a fitted vocabulary."""

    def __init__(self, vocab: Vocabulary, params: Bm25Params):
        self.vocab = vocab
        self.params = params

    def __call__(self, change: RenderedChange) -> SparseVector:
        return vectorize(self.vocab, self.params, tokenize_change(change))

    def to_matrix(self, vectors: Sequence[SparseVector]) -> sp.csr_matrix:
        return to_csr(vectors, len(self.vocab))
