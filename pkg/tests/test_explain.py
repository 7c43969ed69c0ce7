import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import LOOP_AFTER, LOOP_BEFORE, change
from perfcast.bow import BowVectorizer, build_vocabulary, fit_bm25, tokenize_change
from perfcast.classifiers import ModelScorer, train_random_forest
from perfcast.diffcore import FunctionIndexEntry, extract_function_changes, expand_context, make_diff
from perfcast.explain import (
    CALL,
    IMPORT,
    ExplainError,
    FrequencyProposer,
    annotate,
    apply_substitutions,
    exhaustive_flip_exists,
    explanation_record,
    find_sites,
    greedy_search,
    is_one_minimal,
    make_batch_scorer,
    propose,
)


def loop_change():
    d = expand_context(make_diff(LOOP_BEFORE, LOOP_AFTER, "svc.py"), LOOP_BEFORE, LOOP_AFTER, 2)
    idx = [FunctionIndexEntry("r", "svc.py", "notify_all", 1, 5)]
    (ch,) = extract_function_changes(d, idx, idx)
    return ch


def test_sites_of_loop_change():
    sites = find_sites(loop_change())
    assert [s.token for s in sites if s.kind == CALL] == ["call_medium_expensive_function"]


def test_no_sites():
    assert find_sites(change("+x = 1 + 2", " y = (3)")) == []


def test_import_and_comment_sites():
    ch = change("+import os.path", "+x = f(1)  # g(2)", "-from collections import deque")
    kinds = [(s.kind, s.token) for s in find_sites(ch)]
    assert kinds == [(IMPORT, "os.path"), (CALL, "f"), (IMPORT, "collections")]


def test_planted_call_count():
    rng = np.random.default_rng(0)
    names = ["alpha", "beta", "gamma_fn", "deltaCall"]
    for _ in range(30):
        k = int(rng.integers(0, 6))
        lines = ["+" + f"v{i} = {rng.choice(names)}(x)" for i in range(k)]
        lines += [" plain = value + 1", "-y = z"]
        assert len(find_sites(change(*lines))) == k


def fitted(*lines_per_change):
    return FrequencyProposer().fit([change(*ls) for ls in lines_per_change])


def test_frequency_oracle():
    p = fitted(["+a()", "+a()", "+a()", "+a()"], ["+b()", "+b()", "+b()"], ["+c()", "+c()"], ["+d()"])
    site = find_sites(change("+b()"))[0]
    assert propose(site, p, 3) == ["a", "c", "d"]
    site = find_sites(change("+zz()"))[0]
    assert propose(site, p, 3) == ["a", "b", "c"]
    only = fitted(["+solo()"])
    assert only.propose(find_sites(change("+solo()"))[0], 5) == []
    with pytest.raises(ExplainError):
        FrequencyProposer().ranked(CALL)


def test_proposals_are_in_distribution():
    p = fitted(["+a()", "+import os"], ["+b()", "+import sys"])
    p = FrequencyProposer.from_json(p.to_json())
    corpus_tokens = {CALL: {"a", "b"}, IMPORT: {"os", "sys"}}
    for s in find_sites(change("+a()", "+import os", "+q()")):
        assert set(p.propose(s, 10)) <= corpus_tokens[s.kind]


# ------------------------------------------------------ scripted scorers

def token_scorer(weights, base=0.0):
    """Batch scorer: base + sum of weights of call/import tokens present."""
    def run(changes):
        out = []
        for ch in changes:
            toks = [s.token for s in find_sites(ch)]
            out.append(base + sum(weights.get(t, 0.0) for t in toks))
        return np.array(out)
    return run


def test_greedy_budget_and_errors():
    p = fitted(["+cheap()"] * 3)
    ch = change("+costly()")
    batch = token_scorer({"costly": 1.0})
    assert greedy_search(batch, None, ch, 0.5, max_edits=0, generator=p) is None
    with pytest.raises(ExplainError):
        greedy_search(batch, None, change("+cheap()"), 0.5, generator=p)
    with pytest.raises(ExplainError):
        greedy_search(batch, None, ch, 0.5)
    cf = greedy_search(batch, None, ch, 0.5, generator=p)
    assert [(s.original, s.replacement) for s in cf.substitutions] == [("costly", "cheap")]
    assert "[-costly-]{+cheap+}" in annotate(ch, cf)
    rec = explanation_record("D1:f", ch, cf)
    assert rec["counterfactual"]["search"] == "greedy"


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "c", "d", "e"]), min_size=1, max_size=2),
       st.dictionaries(st.sampled_from(["a", "b", "c", "d", "e", "f"]), st.floats(-1, 1), min_size=1),
       st.floats(-0.5, 0.5))
def test_greedy_matches_exhaustive_small(calls, weights, thr):
    ch = change(*[f"+v = {c}(x)" for c in calls])
    p = fitted(["+a()", "+b()", "+c()"], ["+a()", "+f()"], ["+a()"])
    batch = token_scorer(weights)
    if not batch([ch])[0] > thr:
        return
    cf = greedy_search(batch, None, ch, thr, max_edits=3, k_per_site=3, generator=p)
    assert (cf is not None) == exhaustive_flip_exists(batch, ch, p, 3, thr)
    if cf is not None:
        assert not batch([apply_substitutions(ch, cf.substitutions)])[0] > thr
        assert is_one_minimal(batch, ch, cf)
        # only the reported sites change
        after = apply_substitutions(ch, cf.substitutions)
        touched = {s.site.line_index for s in cf.substitutions}
        for i, (a, b) in enumerate(zip(ch.lines, after.lines)):
            if i not in touched:
                assert a == b
        again = greedy_search(batch, None, ch, thr, max_edits=3, k_per_site=3, generator=p)
        assert again == cf


def test_bad_substitution_rejected():
    ch = change("+foo()")
    site = find_sites(ch)[0]
    from perfcast.explain import Substitution
    with pytest.raises(ExplainError):
        apply_substitutions(ch, [Substitution(site, "bar", "baz")])


# ------------------------------------------------------ learned model

def test_forest_explanation_swaps_expensive_call():
    rng = np.random.default_rng(3)
    changes, labels = [], []
    expensive = "call_medium_expensive_function"
    cheap = ["call_cheap_function", "lookup_local_flag", "format_label"]
    for i in range(300):
        pos = i % 3 == 0
        callee = expensive if pos else str(rng.choice(cheap))
        changes.append(change(
            f" def handler_{i}(users):",
            "     for i in (1, all_users):",
            "         print(i)",
            f"+        {callee}(i)",
            "     return None",
            name=f"handler_{i}",
        ))
        labels.append(pos)
    docs = [tokenize_change(c) for c in changes]
    vocab = build_vocabulary(docs)
    vec = BowVectorizer(vocab, fit_bm25(docs, vocab))
    X = vec.to_matrix([vec(c) for c in changes])
    model = train_random_forest(X, np.array(labels), n_estimators=25, seed=0)
    batch = make_batch_scorer(ModelScorer(model), vec)
    target = loop_change()
    assert batch([target])[0] > 0.5
    cf = greedy_search(ModelScorer(model), vec, target, 0.5, generator=FrequencyProposer().fit(changes))
    assert cf is not None
    (sub,) = cf.substitutions
    assert sub.original == expensive and sub.replacement in cheap
    assert is_one_minimal(batch, target, cf)
