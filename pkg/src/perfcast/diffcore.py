"""Unified-diff parsing, context re-rendering and per-function change extraction.

Function boundaries come from a sidecar index (one JSON object per line with
``revision``, ``file_path``, ``function_name``, ``start_line``, ``end_line``);
no source language is parsed here.
"""

from __future__ import annotations

import difflib
import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

TOPLEVEL = "<toplevel>"

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@(.*)$")


class DiffParseError(ValueError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DiffConsistencyError(ValueError):
    """The diff does not apply to the supplied source text."""


class FunctionIndexError(ValueError):
    pass


class LineKind(str, enum.Enum):
    ADDED = "+"
    REMOVED = "-"
    CONTEXT = " "


@dataclass(frozen=True)
class LinePatch:
    kind: LineKind
    text: str

    def __post_init__(self):
        if "\n" in self.text or "\r" in self.text:
            raise ValueError("LinePatch text must be a single line")
        object.__setattr__(self, "kind", LineKind(self.kind))

    def render(self) -> str:
        return self.kind.value + self.text


@dataclass(frozen=True)
class Hunk:
    old_start: int
    new_start: int
    lines: tuple[LinePatch, ...]

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))
        if not self.lines:
            raise ValueError("hunk without lines")

    @property
    def old_count(self) -> int:
        return sum(1 for ln in self.lines if ln.kind is not LineKind.ADDED)

    @property
    def new_count(self) -> int:
        return sum(1 for ln in self.lines if ln.kind is not LineKind.REMOVED)

    @property
    def old_first(self) -> int:
        # 0-based index of the first old-side line touched by this hunk
        return self.old_start - 1 if self.old_count else self.old_start

    @property
    def new_first(self) -> int:
        return self.new_start - 1 if self.new_count else self.new_start

    def header(self) -> str:
        return "@@ -{} +{} @@".format(
            _format_range(self.old_start, self.old_count),
            _format_range(self.new_start, self.new_count),
        )


@dataclass(frozen=True)
class UnifiedDiff:
    file_path: str
    hunks: tuple[Hunk, ...]
    old_path: str | None = None

    def __post_init__(self):
        hunks = tuple(self.hunks)
        object.__setattr__(self, "hunks", hunks)
        for prev, cur in zip(hunks, hunks[1:]):
            if cur.old_first < prev.old_first + prev.old_count:
                raise ValueError(f"{self.file_path}: hunks overlap or are unsorted")

    @property
    def added(self) -> int:
        return sum(1 for h in self.hunks for ln in h.lines if ln.kind is LineKind.ADDED)

    @property
    def removed(self) -> int:
        return sum(1 for h in self.hunks for ln in h.lines if ln.kind is LineKind.REMOVED)


@dataclass(frozen=True)
class FunctionIndexEntry:
    revision: str
    file_path: str
    function_name: str
    start_line: int
    end_line: int

    def __post_init__(self):
        if self.start_line < 1 or self.end_line < self.start_line:
            raise FunctionIndexError(
                f"bad span {self.start_line}-{self.end_line} for {self.function_name}"
            )

    def contains(self, line_no: int) -> bool:
        return self.start_line <= line_no <= self.end_line


@dataclass(frozen=True)
class RenderedChange:
    function_name: str
    context_width: int
    lines: tuple[LinePatch, ...] = field(default_factory=tuple)
    file_path: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))

    @property
    def is_empty(self) -> bool:
        return not any(ln.kind is not LineKind.CONTEXT for ln in self.lines)

    def text(self) -> str:
        return "\n".join(ln.render() for ln in self.lines)

    def to_json(self) -> dict:
        return {
            "function_name": self.function_name,
            "file_path": self.file_path,
            "context_width": self.context_width,
            "lines": [ln.render() for ln in self.lines],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RenderedChange":
        return cls(
            function_name=obj["function_name"],
            context_width=obj["context_width"],
            lines=tuple(LinePatch(LineKind(s[0]), s[1:]) for s in obj["lines"]),
            file_path=obj.get("file_path", ""),
        )


def _format_range(start: int, count: int) -> str:
    if count == 1:
        return str(start)
    return f"{start},{count}"


def _strip_prefix(path: str) -> str:
    path = path.split("\t", 1)[0].strip()
    if path.startswith(("a/", "b/")):
        return path[2:]
    return path


# ---------------------------------------------------------------- parse/render


def parse_unified_diff(text: str) -> list[UnifiedDiff]:
    """Parse (possibly multi-file) unified-diff text."""
    lines = text.splitlines()
    diffs: list[UnifiedDiff] = []
    i = 0
    n = len(lines)
    while i < n:
        line = lines[i]
        if not line.startswith("--- "):
            if line.startswith("@@"):
                raise DiffParseError("hunk header before file header", i + 1)
            i += 1
            continue
        if i + 1 >= n or not lines[i + 1].startswith("+++ "):
            raise DiffParseError("'---' header not followed by '+++'", i + 1)
        old_path = _strip_prefix(line[4:])
        new_path = _strip_prefix(lines[i + 1][4:])
        file_path = old_path if new_path == "/dev/null" else new_path
        i += 2
        hunks: list[Hunk] = []
        while i < n and lines[i].startswith("@@"):
            m = _HUNK_RE.match(lines[i])
            if m is None:
                raise DiffParseError(f"malformed hunk header {lines[i]!r}", i + 1)
            header_line = i + 1
            old_start, new_start = int(m.group(1)), int(m.group(3))
            old_left = int(m.group(2)) if m.group(2) is not None else 1
            new_left = int(m.group(4)) if m.group(4) is not None else 1
            i += 1
            body: list[LinePatch] = []
            while old_left > 0 or new_left > 0:
                if i >= n:
                    raise DiffParseError("hunk truncated: line counts exceed body", header_line)
                raw = lines[i]
                if raw.startswith("\\"):
                    i += 1
                    continue
                tag = raw[:1] or " "
                if tag == "+":
                    new_left -= 1
                elif tag == "-":
                    old_left -= 1
                elif tag == " ":
                    old_left -= 1
                    new_left -= 1
                else:
                    raise DiffParseError(f"unexpected line in hunk body {raw!r}", i + 1)
                if old_left < 0 or new_left < 0:
                    raise DiffParseError("hunk body inconsistent with header counts", header_line)
                body.append(LinePatch(LineKind(tag), raw[1:]))
                i += 1
            while i < n and lines[i].startswith("\\"):
                i += 1
            if not body:
                raise DiffParseError("empty hunk", header_line)
            hunks.append(Hunk(old_start, new_start, tuple(body)))
        if not hunks:
            raise DiffParseError(f"file {file_path!r} has no hunks", i)
        try:
            diffs.append(UnifiedDiff(file_path, tuple(hunks), old_path=old_path))
        except ValueError as exc:
            raise DiffParseError(str(exc), i) from None
    return diffs


def render_diff(diff: UnifiedDiff) -> str:
    old = diff.old_path if diff.old_path is not None else diff.file_path
    old_hdr = "/dev/null" if old == "/dev/null" else f"a/{old}"
    out = [f"--- {old_hdr}", f"+++ b/{diff.file_path}"]
    for hunk in diff.hunks:
        out.append(hunk.header())
        out.extend(ln.render() for ln in hunk.lines)
    return "\n".join(out) + "\n"


def render_diffs(diffs: Iterable[UnifiedDiff]) -> str:
    return "".join(render_diff(d) for d in diffs)


# ------------------------------------------------------------ full alignments

# An aligned op is (kind, text, old_no, new_no) with 1-based line numbers; the
# number on the side a line does not exist on is the position it sits after.
_Op = tuple[LineKind, str, int, int]


def _split_source(text: str) -> list[str]:
    return text.splitlines()


def _align(diff: UnifiedDiff, before: list[str]) -> list[_Op]:
    ops: list[_Op] = []
    old_i = 0  # 0-based cursor into before
    new_no = 0
    for hunk in diff.hunks:
        first = hunk.old_first
        if first < old_i or first > len(before):
            raise DiffConsistencyError(f"{diff.file_path}: hunk at -{hunk.old_start} out of range")
        while old_i < first:
            new_no += 1
            ops.append((LineKind.CONTEXT, before[old_i], old_i + 1, new_no))
            old_i += 1
        if new_no != hunk.new_first:
            raise DiffConsistencyError(
                f"{diff.file_path}: hunk +{hunk.new_start} misaligned with old side"
            )
        for ln in hunk.lines:
            if ln.kind is LineKind.ADDED:
                new_no += 1
                ops.append((LineKind.ADDED, ln.text, old_i, new_no))
                continue
            if old_i >= len(before) or before[old_i] != ln.text:
                raise DiffConsistencyError(
                    f"{diff.file_path}: line {old_i + 1} does not match hunk body"
                )
            old_i += 1
            if ln.kind is LineKind.CONTEXT:
                new_no += 1
            ops.append((ln.kind, ln.text, old_i, new_no))
    while old_i < len(before):
        new_no += 1
        ops.append((LineKind.CONTEXT, before[old_i], old_i + 1, new_no))
        old_i += 1
    return ops


def _align_sources(before: list[str], after: list[str]) -> list[_Op]:
    ops: list[_Op] = []
    matcher = difflib.SequenceMatcher(None, before, after, autojunk=False)
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag == "equal":
            for k in range(i2 - i1):
                ops.append((LineKind.CONTEXT, before[i1 + k], i1 + k + 1, j1 + k + 1))
            continue
        for k in range(i1, i2):
            ops.append((LineKind.REMOVED, before[k], k + 1, j1))
        for k in range(j1, j2):
            ops.append((LineKind.ADDED, after[k], i2, k + 1))
    return ops


def _hunks_from_ops(ops: Sequence[_Op], width: int) -> list[Hunk]:
    if width < 0:
        raise ValueError("context width must be >= 0")
    changed = [k for k, op in enumerate(ops) if op[0] is not LineKind.CONTEXT]
    if not changed:
        return []
    groups: list[list[int]] = [[changed[0], changed[0]]]
    for k in changed[1:]:
        # merge when the unchanged gap fits inside both contexts
        if k - groups[-1][1] - 1 <= 2 * width:
            groups[-1][1] = k
        else:
            groups.append([k, k])
    hunks = []
    for lo, hi in groups:
        lo = max(0, lo - width)
        hi = min(len(ops) - 1, hi + width)
        # trailing context may only consist of context lines; this holds by
        # construction since groups end on a changed op
        chunk = ops[lo : hi + 1]
        body = tuple(LinePatch(op[0], op[1]) for op in chunk)
        old_count = sum(1 for op in chunk if op[0] is not LineKind.ADDED)
        new_count = sum(1 for op in chunk if op[0] is not LineKind.REMOVED)
        first = chunk[0]
        if first[0] is LineKind.ADDED:
            old_first = first[2]
        else:
            old_first = first[2] - 1
        if first[0] is LineKind.REMOVED:
            new_first = first[3]
        else:
            new_first = first[3] - 1
        old_start = old_first + 1 if old_count else old_first
        new_start = new_first + 1 if new_count else new_first
        hunks.append(Hunk(old_start, new_start, body))
    return hunks


def make_diff(before: str, after: str, file_path: str, width: int = 1) -> UnifiedDiff | None:
    """Diff two source texts; ``None`` when they are identical."""
    ops = _align_sources(_split_source(before), _split_source(after))
    hunks = _hunks_from_ops(ops, width)
    if not hunks:
        return None
    return UnifiedDiff(file_path, tuple(hunks))


def apply_diff(diff: UnifiedDiff, before: str) -> str:
    ops = _align(diff, _split_source(before))
    out = [op[1] for op in ops if op[0] is not LineKind.REMOVED]
    return "\n".join(out) + ("\n" if out else "")


def expand_context(diff: UnifiedDiff, before_source: str, after_source: str, width: int) -> UnifiedDiff:
    """Re-render ``diff`` with ``width`` context lines, clamped at file ends.

    Raises DiffConsistencyError when ``diff`` does not turn ``before_source``
    into ``after_source``.
    """
    before = _split_source(before_source)
    ops = _align(diff, before)
    rebuilt = [op[1] for op in ops if op[0] is not LineKind.REMOVED]
    if rebuilt != _split_source(after_source):
        raise DiffConsistencyError(f"{diff.file_path}: diff applied to before != after")
    hunks = _hunks_from_ops(ops, width)
    return UnifiedDiff(diff.file_path, tuple(hunks), old_path=diff.old_path)


def strip_context(diff: UnifiedDiff) -> list[tuple[int, tuple[LinePatch, ...]]]:
    """Change blocks without context, keyed by their old-side position."""
    blocks = []
    for hunk in diff.hunks:
        old_i = hunk.old_first
        cur: list[LinePatch] = []
        pos = old_i
        for ln in hunk.lines:
            if ln.kind is LineKind.CONTEXT:
                if cur:
                    blocks.append((pos, tuple(cur)))
                    cur = []
                old_i += 1
                continue
            if not cur:
                pos = old_i
            cur.append(ln)
            if ln.kind is LineKind.REMOVED:
                old_i += 1
        if cur:
            blocks.append((pos, tuple(cur)))
    return blocks


# --------------------------------------------------------- function extraction


def _check_index(entries: Sequence[FunctionIndexEntry]) -> list[FunctionIndexEntry]:
    ordered = sorted(entries, key=lambda e: (e.start_line, e.end_line))
    for a, b in zip(ordered, ordered[1:]):
        if b.start_line <= a.end_line:
            raise FunctionIndexError(
                f"{a.file_path}: {a.function_name} overlaps {b.function_name}"
            )
    return ordered


def _owner(entries: Sequence[FunctionIndexEntry], line_no: int) -> str | None:
    for e in entries:
        if e.contains(line_no):
            return e.function_name
        if e.start_line > line_no:
            break
    return None


def extract_function_changes(
    diff: UnifiedDiff,
    index_before: Sequence[FunctionIndexEntry],
    index_after: Sequence[FunctionIndexEntry],
    context_width: int | None = None,
) -> list[RenderedChange]:
    """Split a file diff into one rendered change per touched function.

    Context lines are kept only inside the owning function's span, so context
    never crosses a function boundary. With ``context_width`` set, context is
    additionally trimmed to that many lines around each changed block.
    """
    before = _check_index([e for e in index_before if e.file_path == diff.file_path])
    after = _check_index([e for e in index_after if e.file_path == diff.file_path])

    per_fn: dict[str, list[tuple[int, LinePatch]]] = {}
    touched: list[str] = []
    seq = 0
    for hunk in diff.hunks:
        old_no, new_no = hunk.old_first, hunk.new_first
        for ln in hunk.lines:
            if ln.kind is LineKind.ADDED:
                new_no += 1
                owners = {_owner(after, new_no) or TOPLEVEL}
            elif ln.kind is LineKind.REMOVED:
                old_no += 1
                owners = {_owner(before, old_no) or TOPLEVEL}
            else:
                old_no += 1
                new_no += 1
                owners = {_owner(before, old_no), _owner(after, new_no)} - {None}
                if not owners:
                    owners = {TOPLEVEL}
            for name in sorted(owners):
                per_fn.setdefault(name, []).append((seq, ln))
                if ln.kind is not LineKind.CONTEXT and name not in touched:
                    touched.append(name)
            seq += 1
        seq += 1  # hunk break keeps blocks from different hunks apart

    inferred = _infer_width(diff)
    width = inferred if context_width is None else context_width
    out = []
    for name in touched:
        items = per_fn[name]
        lines = _trim_context(items, width)
        out.append(RenderedChange(name, width, tuple(lines), file_path=diff.file_path))
    return out


def _infer_width(diff: UnifiedDiff) -> int:
    best = 0
    for hunk in diff.hunks:
        lead = 0
        for ln in hunk.lines:
            if ln.kind is not LineKind.CONTEXT:
                break
            lead += 1
        trail = 0
        for ln in reversed(hunk.lines):
            if ln.kind is not LineKind.CONTEXT:
                break
            trail += 1
        best = max(best, lead, trail)
    return best


def _trim_context(items: list[tuple[int, LinePatch]], width: int) -> list[LinePatch]:
    changed = [k for k, (_, ln) in enumerate(items) if ln.kind is not LineKind.CONTEXT]
    keep = set(changed)
    for k in changed:
        s = items[k][0]
        # walk outwards over consecutive (same-run) context lines only
        for step in (-1, 1):
            j, prev = k + step, s
            taken = 0
            while 0 <= j < len(items) and taken < width:
                sj, lj = items[j]
                if abs(sj - prev) != 1 or lj.kind is not LineKind.CONTEXT:
                    break
                keep.add(j)
                taken += 1
                prev = sj
                j += step
    return [items[k][1] for k in sorted(keep)]


# ------------------------------------------------------------------ index I/O


def load_function_index(path: str | Path) -> list[FunctionIndexEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(FunctionIndexEntry(**json.loads(line)))
    return entries


def index_entry_to_json(entry: FunctionIndexEntry) -> dict:
    return {
        "revision": entry.revision,
        "file_path": entry.file_path,
        "function_name": entry.function_name,
        "start_line": entry.start_line,
        "end_line": entry.end_line,
    }
