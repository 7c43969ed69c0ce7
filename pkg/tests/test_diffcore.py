import difflib
import random

import pytest
from hypothesis import given, settings, strategies as st

from helpers import LISTING_DIFF, LOOP_AFTER, LOOP_BEFORE
from perfcast.diffcore import (
    DiffConsistencyError,
    DiffParseError,
    FunctionIndexEntry,
    LineKind,
    apply_diff,
    expand_context,
    extract_function_changes,
    make_diff,
    parse_unified_diff,
    render_diff,
    render_diffs,
    strip_context,
)
from perfcast.diffcore import TOPLEVEL


def kinds(diff):
    out = {k: 0 for k in LineKind}
    for h in diff.hunks:
        for ln in h.lines:
            out[ln.kind] += 1
    return out


def test_listing_parses_to_two_hunks():
    (d,) = parse_unified_diff(LISTING_DIFF)
    assert d.file_path == "Example.java"
    assert len(d.hunks) == 2
    k = kinds(d)
    assert (k[LineKind.ADDED], k[LineKind.REMOVED], k[LineKind.CONTEXT]) == (3, 1, 4)


def test_empty_text():
    assert parse_unified_diff("") == []


def test_render_is_byte_identical():
    assert render_diff(parse_unified_diff(LISTING_DIFF)[0]) == LISTING_DIFF


@pytest.mark.parametrize("text", [
    "@@ -1 +1 @@\n-a\n+b\n",
    "--- a/x\n@@ -1 +1 @@\n",
    "--- a/x\n+++ b/x\n@@ -1,3 +1,3 @@\n a\n",
    "--- a/x\n+++ b/x\n@@ bogus @@\n",
])
def test_malformed(text):
    with pytest.raises(DiffParseError):
        parse_unified_diff(text)


def _unified(before, after, path, n):
    # reference hunks from difflib, headers normalized to ours
    out = list(difflib.unified_diff(before, after, f"a/{path}", f"b/{path}", n=n, lineterm=""))
    return "\n".join(out) + "\n"


def test_three_file_diff_against_difflib():
    rng = random.Random(3)
    pieces, expected = [], []
    for f in range(3):
        before = [f"line {i} of file {f}" for i in range(30)]
        after = list(before)
        for _ in range(3):
            i = rng.randrange(len(after))
            after[i] = after[i] + " changed"
        after.insert(rng.randrange(len(after)), "inserted")
        text = _unified(before, after, f"pkg/f{f}.py", 3)
        pieces.append(text)
        expected.append((before, after))
    diffs = parse_unified_diff("".join(pieces))
    assert len(diffs) == 3
    for d, (before, after) in zip(diffs, expected):
        assert apply_diff(d, "\n".join(before) + "\n") == "\n".join(after) + "\n"
    # hunk bodies are the difflib bodies line for line
    for d, text in zip(diffs, pieces):
        body = [ln for ln in text.splitlines() if ln[:1] in " +-" and not ln.startswith(("---", "+++"))]
        assert [ln.render() for h in d.hunks for ln in h.lines] == body


def test_expand_reveals_loop():
    d = make_diff(LOOP_BEFORE, LOOP_AFTER, "svc.py", width=1)
    texts = [ln.text for h in d.hunks for ln in h.lines]
    assert "    for i in (1, all_users):" not in texts
    wide = expand_context(d, LOOP_BEFORE, LOOP_AFTER, 2)
    texts = [ln.text for h in wide.hunks for ln in h.lines]
    assert "    for i in (1, all_users):" in texts


def test_full_width_covers_file_once():
    d = make_diff(LOOP_BEFORE, LOOP_AFTER, "svc.py", width=1)
    wide = expand_context(d, LOOP_BEFORE, LOOP_AFTER, 100)
    assert len(wide.hunks) == 1
    kept = [ln.text for ln in wide.hunks[0].lines if ln.kind is not LineKind.ADDED]
    assert kept == LOOP_BEFORE.splitlines()


def test_expand_rejects_mismatched_sources():
    d = make_diff(LOOP_BEFORE, LOOP_AFTER, "svc.py")
    with pytest.raises(DiffConsistencyError):
        expand_context(d, LOOP_BEFORE, LOOP_BEFORE, 2)


def test_identical_sources():
    assert make_diff("a\nb\n", "a\nb\n", "x") is None


# ------------------------------------------------------------ function index

SRC_BEFORE = "\n".join([
    "import os",        # 1
    "def alpha():",     # 2
    "    a = 1",        # 3
    "    return a",     # 4
    "def beta():",      # 5
    "    b = 2",        # 6
    "    return b",     # 7
]) + "\n"


def _index(rev, spans):
    return [FunctionIndexEntry(rev, "m.py", n, s, e) for n, (s, e) in spans.items()]


def test_single_function():
    after = SRC_BEFORE.replace("    a = 1", "    a = 10")
    d = make_diff(SRC_BEFORE, after, "m.py")
    idx = _index("r", {"alpha": (2, 4), "beta": (5, 7)})
    (ch,) = extract_function_changes(d, idx, idx)
    assert ch.function_name == "alpha"


def test_hunk_spanning_two_functions():
    after = SRC_BEFORE.replace("    return a", "    return a + 1").replace("    b = 2", "    b = 3")
    d = make_diff(SRC_BEFORE, after, "m.py", width=3)
    assert len(d.hunks) == 1
    idx = _index("r", {"alpha": (2, 4), "beta": (5, 7)})
    out = {c.function_name: c for c in extract_function_changes(d, idx, idx)}
    assert set(out) == {"alpha", "beta"}
    alpha_lines = {"def alpha():", "    a = 1", "    return a", "    return a + 1"}
    beta_lines = {"def beta():", "    b = 2", "    b = 3", "    return b"}
    assert {ln.text for ln in out["alpha"].lines} <= alpha_lines
    assert {ln.text for ln in out["beta"].lines} <= beta_lines


def test_unindexed_lines_go_to_toplevel():
    after = SRC_BEFORE.replace("import os", "import sys")
    d = make_diff(SRC_BEFORE, after, "m.py")
    idx = _index("r", {"alpha": (2, 4), "beta": (5, 7)})
    (ch,) = extract_function_changes(d, idx, idx)
    assert ch.function_name == TOPLEVEL


# ------------------------------------------------------------ properties

lines_st = st.lists(st.sampled_from(["a", "b", "c", "d", "x = 1", ""]), min_size=0, max_size=25)


def _edit(before, ops):
    after = list(before)
    for kind, pos, text in ops:
        if kind == 0 and after:
            del after[pos % len(after)]
        elif kind == 1:
            after.insert(pos % (len(after) + 1), text)
        elif after:
            after[pos % len(after)] = text
    return after


edits_st = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 50), st.sampled_from(["e", "f", "y = 2"])),
                    min_size=1, max_size=6)


def _text(lines):
    return "\n".join(lines) + "\n" if lines else ""


@settings(max_examples=150, deadline=None)
@given(lines_st, edits_st, st.integers(0, 4))
def test_render_parse_round_trip(before, ops, width):
    after = _edit(before, ops)
    d = make_diff(_text(before), _text(after), "f.py", width)
    if d is None:
        return
    (back,) = parse_unified_diff(render_diff(d))
    assert back.hunks == d.hunks
    assert apply_diff(back, _text(before)) == _text(after)


@settings(max_examples=150, deadline=None)
@given(lines_st, edits_st, st.integers(0, 3), st.integers(0, 4))
def test_expand_properties(before, ops, w0, w):
    after = _edit(before, ops)
    d = make_diff(_text(before), _text(after), "f.py", w0)
    if d is None:
        return
    e = expand_context(d, _text(before), _text(after), w)
    assert strip_context(e) == strip_context(d)
    changed = lambda x: sorted((ln.kind, ln.text) for h in x.hunks for ln in h.lines if ln.kind is not LineKind.CONTEXT)
    assert changed(e) == changed(d)
    # monotone context: positions of context lines at w are kept at w + 1
    def ctx_positions(x):
        out = set()
        for h in x.hunks:
            i = h.old_first
            for ln in h.lines:
                if ln.kind is LineKind.CONTEXT:
                    out.add(i)
                if ln.kind is not LineKind.ADDED:
                    i += 1
        return out
    wider = expand_context(d, _text(before), _text(after), w + 1)
    assert ctx_positions(e) <= ctx_positions(wider)
    if w == w0:
        assert e.hunks == d.hunks


def test_render_diffs_concatenates():
    (d,) = parse_unified_diff(LISTING_DIFF)
    assert parse_unified_diff(render_diffs([d, d])) == [d, d]
