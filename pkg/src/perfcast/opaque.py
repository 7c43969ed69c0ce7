"""Code-opaque diff features: who changed what, where, and how much."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .diffcore import UnifiedDiff

DEFAULT = "<default>"
MIN_COUNT = 5
MAX_PATH_DEPTH = 3
TENURE_CLASSES = tuple(range(1, 8))


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class OpaqueRow:
    team: str
    tenure_class: int
    n_files: int
    sloc_changed: int
    base_paths: frozenset[str] = frozenset()
    extensions: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.tenure_class not in TENURE_CLASSES:
            raise ValueError(f"tenure_class must be 1..7, got {self.tenure_class}")
        if self.n_files < 0 or self.sloc_changed < 0:
            raise ValueError("counts must be >= 0")
        object.__setattr__(self, "base_paths", frozenset(self.base_paths))
        object.__setattr__(self, "extensions", frozenset(self.extensions))
        for p in self.base_paths:
            if len(PurePosixPath(p).parts) > MAX_PATH_DEPTH:
                raise ValueError(f"base path deeper than {MAX_PATH_DEPTH}: {p}")

    def to_json(self) -> dict:
        return {
            "team": self.team,
            "tenure_class": self.tenure_class,
            "n_files": self.n_files,
            "sloc_changed": self.sloc_changed,
            "base_paths": sorted(self.base_paths),
            "extensions": sorted(self.extensions),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OpaqueRow":
        return cls(obj["team"], obj["tenure_class"], obj["n_files"], obj["sloc_changed"],
                   frozenset(obj["base_paths"]), frozenset(obj["extensions"]))


def base_path(path: str) -> str:
    """Directory part of ``path``, truncated to three segments."""
    parts = PurePosixPath(path).parts[:-1]
    return "/".join(parts[:MAX_PATH_DEPTH])


def extension(path: str) -> str:
    return PurePosixPath(path).suffix.lstrip(".")


@dataclass(frozen=True)
class DiffMetadata:
    team: str | None
    tenure_class: int | None
    diffs: Sequence[UnifiedDiff] = ()


def extract_opaque(meta: DiffMetadata, strict: bool = False) -> OpaqueRow:
    """Features of one diff. Missing team falls back to the default category;
    missing tenure raises when ``strict`` and becomes class 1 otherwise."""
    team = meta.team if meta.team else DEFAULT
    tenure = meta.tenure_class
    if tenure is None:
        if strict:
            raise EncoderError("diff metadata has no tenure class")
        tenure = 1
    paths = [d.file_path for d in meta.diffs]
    sloc = sum(d.added + d.removed for d in meta.diffs)
    return OpaqueRow(
        team=team,
        tenure_class=int(tenure),
        n_files=len(paths),
        sloc_changed=sloc,
        base_paths=frozenset(base_path(p) for p in paths),
        extensions=frozenset(e for e in (extension(p) for p in paths) if e),
    )


@dataclass(frozen=True)
class OpaqueEncoder:
    """Column layout: team one-hot (default first), tenure one-hot (1..7),
    base-path multi-hot (default first), extension multi-hot (default first),
    then n_files and sloc_changed unscaled."""

    teams: tuple[str, ...]
    base_paths: tuple[str, ...]
    extensions: tuple[str, ...]
    min_count: int = MIN_COUNT
    _pos: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        pos = {}
        off = 0
        for block, cats in (("team", self.teams), ("tenure", tuple(map(str, TENURE_CLASSES))),
                            ("base_path", self.base_paths), ("extension", self.extensions)):
            pos[block] = {c: off + i for i, c in enumerate(cats)}
            off += len(cats)
        pos["numeric"] = {"n_files": off, "sloc_changed": off + 1}
        object.__setattr__(self, "_pos", pos)

    @property
    def n_columns(self) -> int:
        return len(self.teams) + len(TENURE_CLASSES) + len(self.base_paths) + len(self.extensions) + 2

    def columns(self) -> list[str]:
        cols = [f"team={t}" for t in self.teams]
        cols += [f"tenure={t}" for t in TENURE_CLASSES]
        cols += [f"base_path={p}" for p in self.base_paths]
        cols += [f"extension={e}" for e in self.extensions]
        return cols + ["n_files", "sloc_changed"]

    def _col(self, block: str, value: str) -> int:
        table = self._pos[block]
        return table.get(value, table[DEFAULT])

    def encode_row(self, row: OpaqueRow) -> tuple[list[int], list[float]]:
        cols = {self._col("team", row.team): 1.0}
        cols[self._pos["tenure"][str(row.tenure_class)]] = 1.0
        for p in row.base_paths:
            cols[self._col("base_path", p)] = 1.0
        for e in row.extensions:
            cols[self._col("extension", e)] = 1.0
        if row.n_files:
            cols[self._pos["numeric"]["n_files"]] = float(row.n_files)
        if row.sloc_changed:
            cols[self._pos["numeric"]["sloc_changed"]] = float(row.sloc_changed)
        idx = sorted(cols)
        return idx, [cols[i] for i in idx]

    def to_json(self) -> dict:
        return {
            "format": "perfcast-opaque-encoder",
            "version": 1,
            "min_count": self.min_count,
            "teams": list(self.teams),
            "base_paths": list(self.base_paths),
            "extensions": list(self.extensions),
            "columns": self.columns(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OpaqueEncoder":
        if obj.get("format") != "perfcast-opaque-encoder":
            raise EncoderError("not a serialized opaque encoder")
        return cls(tuple(obj["teams"]), tuple(obj["base_paths"]), tuple(obj["extensions"]),
                   obj["min_count"])


def _kept(counter: Counter, min_count: int) -> tuple[str, ...]:
    keep = sorted(c for c, n in counter.items() if n >= min_count and c != DEFAULT)
    return (DEFAULT, *keep)


def fit_encoder(rows: Sequence[OpaqueRow], min_count: int = MIN_COUNT) -> OpaqueEncoder:
    """Keep categories seen at least ``min_count`` times in the training rows."""
    if not rows:
        raise EncoderError("cannot fit an encoder on an empty training set")
    teams = Counter(r.team for r in rows)
    paths = Counter(p for r in rows for p in r.base_paths)
    exts = Counter(e for r in rows for e in r.extensions)
    return OpaqueEncoder(_kept(teams, min_count), _kept(paths, min_count), _kept(exts, min_count),
                         min_count)


def encode(encoder: OpaqueEncoder, rows: Iterable[OpaqueRow]) -> sp.csr_matrix:
    data, indices, indptr = [], [], [0]
    for r in rows:
        idx, vals = encoder.encode_row(r)
        indices.extend(idx)
        data.extend(vals)
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(len(indptr) - 1, encoder.n_columns),
    )


def decode(encoder: OpaqueEncoder, X: sp.csr_matrix) -> list[dict]:
    """Recover the filtered categorical values and numerics of each row."""
    cols = encoder.columns()
    X = sp.csr_matrix(X)
    out = []
    for i in range(X.shape[0]):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        row: dict = {"team": None, "tenure_class": None, "base_paths": set(), "extensions": set(),
                     "n_files": 0, "sloc_changed": 0}
        for j, v in zip(X.indices[lo:hi], X.data[lo:hi]):
            name = cols[j]
            if name in ("n_files", "sloc_changed"):
                row[name] = int(v)
                continue
            block, value = name.split("=", 1)
            if block == "team":
                row["team"] = value
            elif block == "tenure":
                row["tenure_class"] = int(value)
            elif block == "base_path":
                row["base_paths"].add(value)
            else:
                row["extensions"].add(value)
        out.append(row)
    return out


def filtered(encoder: OpaqueEncoder, row: OpaqueRow) -> dict:
    """What ``decode`` should return for ``row``: unseen values mapped to default."""
    def f(v, cats):
        return v if v in cats else DEFAULT
    return {
        "team": f(row.team, encoder.teams),
        "tenure_class": row.tenure_class,
        "base_paths": {f(p, encoder.base_paths) for p in row.base_paths},
        "extensions": {f(e, encoder.extensions) for e in row.extensions},
        "n_files": row.n_files,
        "sloc_changed": row.sloc_changed,
    }


def save_encoder(path: str | Path, encoder: OpaqueEncoder) -> None:
    Path(path).write_text(json.dumps(encoder.to_json(), indent=1, sort_keys=True) + "\n")


def load_encoder(path: str | Path) -> OpaqueEncoder:
    return OpaqueEncoder.from_json(json.loads(Path(path).read_text()))
