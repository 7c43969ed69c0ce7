"""Synthetic source code: function bodies and the edit templates applied to them.

Every generated function has the same skeleton

    def name(args):
        <preamble statements>
        for var in iterable:
            <loop body statements>
        <tail statements>
        return result

which keeps edits easy to place relative to the loop header.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

EXPENSIVE_CALLS = (
    "call_medium_expensive_function",
    "fetch_remote_config",
    "load_full_profile",
    "serialize_object_graph",
    "compute_similarity_matrix",
    "query_user_database",
    "render_template_tree",
    "decompress_payload_blob",
)

CHEAP_CALLS = (
    "call_cheap_function",
    "get_cached_value",
    "format_label",
    "is_feature_enabled",
    "log_debug_message",
    "lookup_local_flag",
    "increment_counter",
    "normalize_key",
    "parse_int_field",
    "make_cache_key",
)

MODULES = ("json", "logging", "collections", "itertools", "functools", "hashlib", "re", "math")

LOCALS = (
    "value", "data", "payload", "score", "total", "cacheKey", "userIds",
    "response", "entry", "options", "retryCount", "label",
)

LOOP_VARS = ("i", "item", "row", "user", "node", "record")
ITERABLES = ("all_users", "items", "rows", "children", "records", "batch")

COMMENT_WORDS = (
    "keep", "legacy", "behaviour", "see", "ticket", "cleanup", "later", "owner",
    "todo", "note", "ordering", "matters", "temporary", "guard", "flag",
)

VERBS = (
    "build", "compute", "resolve", "update", "handle", "merge", "collect",
    "apply", "prepare", "render", "rank", "filter", "emit", "score", "check",
    "sync", "load", "store", "route", "expand",
)
NOUNS = (
    "feed", "story", "comment", "profile", "session", "cursor", "bucket",
    "payload", "ranking", "message", "thread", "invite", "badge", "setting",
    "token", "upload", "media", "reaction", "group", "event", "page", "notice",
)
QUALIFIERS = ("", "", "", "batch", "async", "cached", "full", "partial", "local", "remote")

_INDENT = "    "

# Tags used to remember what each statement is.
PLAIN, CHEAP, EXPENSIVE, IMPORT, COMMENT = "plain", "cheap", "expensive", "import", "comment"


@dataclass
class Stmt:
    text: str
    tag: str = PLAIN
    callee: str | None = None


@dataclass
class FunctionSource:
    name: str
    args: tuple[str, ...]
    pre: list[Stmt]
    loop_var: str
    iterable: str
    body: list[Stmt]
    tail: list[Stmt]

    def render(self) -> list[str]:
        out = [f"def {self.name}({', '.join(self.args)}):"]
        out += [_INDENT + s.text for s in self.pre]
        out.append(f"{_INDENT}for {self.loop_var} in {self.iterable}:")
        out += [_INDENT * 2 + s.text for s in self.body]
        out += [_INDENT + s.text for s in self.tail]
        out.append(f"{_INDENT}return result")
        return out

    def loop_header_offset(self) -> int:
        return 1 + len(self.pre)

    def clone(self) -> "FunctionSource":
        return copy.deepcopy(self)


def _pick(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


def _arg(rng, fn: FunctionSource | None = None, in_loop: bool = False) -> str:
    pool = list(LOCALS[:6])
    if fn is not None:
        pool += list(fn.args)
        pool.append(fn.loop_var)
    return _pick(rng, pool)


def call_stmt(rng, callee: str, tag: str, fn: FunctionSource | None = None, in_loop: bool = False) -> Stmt:
    arg = _arg(rng, fn, in_loop)
    if rng.random() < 0.6:
        return Stmt(f"{_pick(rng, LOCALS)} = {callee}({arg})", tag, callee)
    return Stmt(f"{callee}({arg})", tag, callee)


def plain_stmt(rng, fn: FunctionSource | None = None) -> Stmt:
    a, b = _pick(rng, LOCALS), _pick(rng, LOCALS)
    forms = (
        f"{a} = {b} + {int(rng.integers(1, 9))}",
        f"result.append({a})",
        f"{a} = {b} or {_pick(rng, LOCALS)}",
        f"{a}[{int(rng.integers(0, 4))}] = {b}",
        f"{a} = len({b})",
    )
    return Stmt(_pick(rng, forms))


def comment_stmt(rng) -> Stmt:
    n = int(rng.integers(2, 5))
    words = [_pick(rng, COMMENT_WORDS) for _ in range(n)]
    return Stmt("# " + " ".join(words), COMMENT)


def import_stmt(rng) -> Stmt:
    mod = _pick(rng, MODULES)
    if rng.random() < 0.5:
        return Stmt(f"import {mod}", IMPORT, mod)
    return Stmt(f"from {mod} import {_pick(rng, ('partial', 'chain', 'defaultdict', 'sha1', 'sub'))}", IMPORT, mod)


def new_function(rng: np.random.Generator, name: str) -> FunctionSource:
    nargs = int(rng.integers(1, 3))
    args = tuple(_pick(rng, ("request", "ctx", "config", "viewer", "params")) for _ in range(nargs))
    args = tuple(dict.fromkeys(args))
    fn = FunctionSource(name, args, [], _pick(rng, LOOP_VARS), _pick(rng, ITERABLES), [], [])
    fn.pre.append(Stmt("result = []"))
    for _ in range(int(rng.integers(1, 4))):
        r = rng.random()
        if r < 0.45:
            fn.pre.append(call_stmt(rng, _pick(rng, CHEAP_CALLS), CHEAP, fn))
        elif r < 0.55:
            fn.pre.append(call_stmt(rng, _pick(rng, EXPENSIVE_CALLS), EXPENSIVE, fn))
        elif r < 0.65:
            fn.pre.append(import_stmt(rng))
        elif r < 0.75:
            fn.pre.append(comment_stmt(rng))
        else:
            fn.pre.append(plain_stmt(rng, fn))
    for _ in range(int(rng.integers(2, 5))):
        if rng.random() < 0.5:
            fn.body.append(call_stmt(rng, _pick(rng, CHEAP_CALLS), CHEAP, fn, True))
        else:
            fn.body.append(plain_stmt(rng, fn))
    for _ in range(int(rng.integers(0, 3))):
        fn.tail.append(plain_stmt(rng, fn) if rng.random() < 0.6 else call_stmt(rng, _pick(rng, CHEAP_CALLS), CHEAP, fn))
    return fn


def function_name(rng: np.random.Generator, taken: set[str]) -> str:
    while True:
        q = _pick(rng, QUALIFIERS)
        parts = [_pick(rng, VERBS)] + ([q] if q else []) + [_pick(rng, NOUNS)]
        if rng.random() < 0.3:
            parts.append(_pick(rng, NOUNS))
        name = "_".join(parts)
        if name not in taken:
            taken.add(name)
            return name


# ----------------------------------------------------------------- templates

MAX_BODY = 6  # keeps the loop header within 7 lines of any body statement
MAX_PRE = 7


@dataclass
class Edit:
    kind: str
    regression: bool
    after: FunctionSource
    n_calls_added: int = 0
    callee: str | None = None
    extra: dict = field(default_factory=dict)


def regression_edit(rng, fn: FunctionSource, callee: str | None = None) -> Edit:
    """Plant an expensive call inside the loop body."""
    callee = callee or _pick(rng, EXPENSIVE_CALLS)
    r = rng.random()
    cheap_in_body = [i for i, s in enumerate(fn.body) if s.tag == CHEAP]
    expensive_pre = [i for i, s in enumerate(fn.pre) if s.tag == EXPENSIVE]
    new = fn.clone()
    if r < 0.3 and cheap_in_body:
        i = _pick(rng, cheap_in_body)
        old = new.body[i]
        new.body[i] = Stmt(old.text.replace(old.callee, callee, 1), EXPENSIVE, callee)
        return Edit("changed_callee", True, new, 1, callee)
    if r < 0.5 and expensive_pre and len(fn.body) < MAX_BODY:
        i = _pick(rng, expensive_pre)
        stmt = new.pre.pop(i)
        if callee != stmt.callee:
            stmt = Stmt(stmt.text.replace(stmt.callee, callee, 1), EXPENSIVE, callee)
        pos = int(rng.integers(1, len(new.body) + 1))
        new.body.insert(pos, stmt)
        return Edit("moved_into_loop", True, new, 1, callee)
    # loop_call: at least two lines below the header
    if len(new.body) >= MAX_BODY:
        new.body.pop(int(rng.integers(1, len(new.body))))
    pos = int(rng.integers(1, len(new.body) + 1))
    new.body.insert(pos, call_stmt(rng, callee, EXPENSIVE, new, True))
    return Edit("loop_call", True, new, 1, callee)


def _make_room(rng, fn: FunctionSource, block: str, cap: int) -> None:
    """Drop one statement when ``block`` is at its cap."""
    stmts = getattr(fn, block)
    if len(stmts) < cap:
        return
    lo = 1 if block == "pre" else 0
    stmts.pop(int(rng.integers(lo, len(stmts))))


def benign_edit(rng, fn: FunctionSource, decoy_rate: float = 0.1) -> Edit:
    """A change that leaves the function's cost alone; never a no-op."""
    for _ in range(8):
        edit = _benign_once(rng, fn, decoy_rate)
        if edit.after.render() != fn.render():
            return edit
    new = fn.clone()
    new.tail.append(plain_stmt(rng, new))
    return Edit("cosmetic", False, new)


def _benign_once(rng, fn: FunctionSource, decoy_rate: float) -> Edit:
    new = fn.clone()
    r = rng.random()
    if r < decoy_rate:
        _make_room(rng, new, "pre", MAX_PRE)
        # an expensive call that runs once, outside the loop
        pos = int(rng.integers(1, len(new.pre) + 1))
        callee = _pick(rng, EXPENSIVE_CALLS)
        new.pre.insert(pos, call_stmt(rng, callee, EXPENSIVE, new))
        return Edit("decoy_expensive", False, new, 1, callee)
    r = rng.random()
    if r < 0.25:
        return _cosmetic(rng, new)
    if r < 0.55:
        callee = _pick(rng, CHEAP_CALLS)
        if rng.random() < 0.5:
            _make_room(rng, new, "body", MAX_BODY)
            pos = int(rng.integers(0, len(new.body) + 1))
            new.body.insert(pos, call_stmt(rng, callee, CHEAP, new, True))
        else:
            _make_room(rng, new, "pre", MAX_PRE)
            pos = int(rng.integers(1, len(new.pre) + 1))
            new.pre.insert(pos, call_stmt(rng, callee, CHEAP, new))
        return Edit("cheap_call", False, new, 1, callee)
    if r < 0.72:
        removable = [("pre", i) for i in range(1, len(new.pre))]
        removable += [("body", i) for i, s in enumerate(new.body) if s.tag != EXPENSIVE and len(new.body) > 1]
        removable += [("tail", i) for i in range(len(new.tail))]
        if removable:
            block, i = removable[int(rng.integers(len(removable)))]
            getattr(new, block).pop(i)
            return Edit("line_removal", False, new)
    if r < 0.9:
        sites = [(blk, i) for blk in ("pre", "body", "tail") for i, s in enumerate(getattr(new, blk)) if s.tag == CHEAP]
        if sites:
            blk, i = sites[int(rng.integers(len(sites)))]
            old = getattr(new, blk)[i]
            repl = _pick(rng, [c for c in CHEAP_CALLS if c != old.callee])
            getattr(new, blk)[i] = Stmt(old.text.replace(old.callee, repl, 1), CHEAP, repl)
            return Edit("cheap_swap", False, new, 0, repl)
    _make_room(rng, new, "pre", MAX_PRE)
    new.pre.insert(1, import_stmt(rng))
    return Edit("add_import", False, new)


def _cosmetic(rng, new: FunctionSource) -> Edit:
    comments = [("pre", i) for i, s in enumerate(new.pre) if s.tag == COMMENT]
    r = rng.random()
    if comments and r < 0.4:
        blk, i = comments[int(rng.integers(len(comments)))]
        getattr(new, blk)[i] = comment_stmt(rng)
    elif r < 0.7:
        _make_room(rng, new, "pre", MAX_PRE)
        new.pre.insert(int(rng.integers(1, len(new.pre) + 1)), comment_stmt(rng))
    else:
        plains = [(blk, i) for blk in ("pre", "body", "tail") for i, s in enumerate(getattr(new, blk))
                  if s.tag == PLAIN and not (blk == "pre" and i == 0)]
        if plains:
            blk, i = plains[int(rng.integers(len(plains)))]
            getattr(new, blk)[i] = plain_stmt(rng, new)
        else:
            new.tail.append(plain_stmt(rng, new))
    return Edit("cosmetic", False, new)


# ----------------------------------------------------------------- files


@dataclass
class SourceFile:
    path: str
    imports: list[str]
    functions: list[FunctionSource]

    def render(self) -> tuple[str, list[tuple[str, int, int]]]:
        """File text plus (function, start_line, end_line) spans (1-based)."""
        lines = list(self.imports)
        spans = []
        for fn in self.functions:
            lines.append("")
            start = len(lines) + 1
            lines.extend(fn.render())
            spans.append((fn.name, start, len(lines)))
        return "\n".join(lines) + "\n", spans


def file_imports(rng) -> list[str]:
    k = int(rng.integers(1, 4))
    mods = sorted({_pick(rng, MODULES) for _ in range(k)})
    return [f"import {m}" for m in mods]


AUX_KINDS = ("test", "config", "doc")


def aux_text(kind: str, rng, n_lines: int) -> list[str]:
    if kind == "test":
        return [f"def test_case_{i}():" if i % 3 == 0 else f"    assert {_pick(rng, LOCALS)} is not None"
                for i in range(n_lines)]
    if kind == "config":
        body = [f'  "{_pick(rng, LOCALS)}_{i}": {int(rng.integers(0, 100))},' for i in range(n_lines)]
        return ["{"] + body + ['  "version": 1', "}"]
    return [f"{' '.join(_pick(rng, COMMENT_WORDS) for _ in range(5))}" for _ in range(n_lines)]


def aux_edit(kind: str, rng, lines: list[str]) -> list[str]:
    new = list(lines)
    if kind == "config":
        i = int(rng.integers(1, len(new) - 2))
        new[i] = f'  "{_pick(rng, LOCALS)}_{int(rng.integers(0, 99))}": {int(rng.integers(0, 100))},'
    elif kind == "test":
        new.append(f"    assert {_pick(rng, LOCALS)} == {int(rng.integers(0, 9))}")
    else:
        i = int(rng.integers(0, len(new)))
        new[i] = " ".join(_pick(rng, COMMENT_WORDS) for _ in range(5))
    return new
