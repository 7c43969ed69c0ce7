import hashlib
import math
from pathlib import Path

import numpy as np
import pytest

from perfcast.diffcore import parse_unified_diff
from perfcast.fleetsim import (
    CorpusConfig,
    CorpusError,
    CorpusReader,
    CostModel,
    CostModelError,
    GcpuSeries,
    generate_corpus,
    renormalized_share,
    simulate_sampling,
    true_inclusive_shares,
    write_corpus,
)

SMALL = dict(n_changes=1000, n_releases=60, n_functions=80, n_dispatchers=8)


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_single_function_owns_everything():
    s = simulate_sampling(CostModel({"only": 3.0}, rate={"only": 1.0}), duration=20, batch_size=50)
    assert np.all(s["only"].gcpu == 1.0)


def test_two_leaves_binomial():
    cost = CostModel({"a": 0.7, "b": 0.3}, rate={"a": 1.0, "b": 1.0})
    n, batch = 200, 5000
    s = simulate_sampling(cost, duration=n, batch_size=batch, seed=1)
    for f, p in (("a", 0.7), ("b", 0.3)):
        mean = s[f].gcpu.mean()
        sigma = math.sqrt(p * (1 - p) / (n * batch))
        assert abs(mean - p) <= 3 * sigma


def test_inclusive_caller_equals_leaf():
    cost = CostModel({"A": 0.0, "B": 1.0}, calls={"A": [("B", 2.0)]}, rate={"A": 1.0})
    s = simulate_sampling(cost, duration=30, batch_size=200, seed=2)
    assert np.array_equal(s["A"].gcpu, s["B"].gcpu)
    assert true_inclusive_shares(cost) == {"A": 1.0, "B": 1.0}


def test_unbiased_on_tree():
    cost = CostModel(
        {"root": 0.5, "mid": 1.0, "x": 2.0, "y": 0.5},
        calls={"root": [("mid", 1.0), ("y", 3.0)], "mid": [("x", 1.0)]},
        rate={"root": 1.0},
    )
    truth = true_inclusive_shares(cost)
    n, batch = 400, 2000
    s = simulate_sampling(cost, duration=n, batch_size=batch, seed=3)
    for f, p in truth.items():
        sigma = math.sqrt(max(p * (1 - p), 1e-12) / (n * batch))
        assert abs(s[f].gcpu.mean() - p) <= 3 * sigma + 1e-12


@pytest.mark.parametrize("s,f", [(0.1, 2.0), (0.02, 8.0), (0.5, 0.5)])
def test_renormalization_closed_form(s, f):
    cost = CostModel({"leaf": s, "rest": 1 - s}, rate={"leaf": 1.0, "rest": 1.0})
    cost.base_cost["leaf"] *= f
    assert true_inclusive_shares(cost)["leaf"] == pytest.approx(renormalized_share(s, f), rel=1e-12)
    assert renormalized_share(s, 2.0) == pytest.approx(2 * s / (1 + s))


def test_cost_model_errors():
    with pytest.raises(CostModelError):
        CostModel({"a": 1.0, "b": 1.0}, calls={"a": [("b", 1)], "b": [("a", 1)]}, rate={"a": 1}).validate()
    with pytest.raises(CostModelError):
        CostModel({"a": -1.0}).validate()
    with pytest.raises(CostModelError):
        CostModel({"a": 1.0}, calls={"a": [("zz", 1)]}).validate()
    with pytest.raises(ValueError):
        GcpuSeries("f", [1.0, 1.0], [0.1, 0.2])
    with pytest.raises(ValueError):
        GcpuSeries("f", [1.0], [1.5])


def test_noise_is_mean_one():
    cost = CostModel({"a": 0.5, "b": 0.5}, rate={"a": 1.0, "b": 1.0})
    s = simulate_sampling(cost, duration=3000, batch_size=1000, seed=4, noise_sigma={"a": 0.3})
    assert s["a"].gcpu.std() > 0.05
    assert abs(s["a"].gcpu.mean() - 0.5) < 0.02


def test_corpus_deterministic(tmp_path):
    a = write_corpus(generate_corpus(**SMALL), tmp_path / "a")
    b = write_corpus(generate_corpus(**SMALL), tmp_path / "b")
    assert tree_digest(a) == tree_digest(b)
    c = write_corpus(generate_corpus(seed=7, **SMALL), tmp_path / "c")
    assert tree_digest(a) != tree_digest(c)


def test_corpus_structure_and_replay(tmp_path):
    corpus = generate_corpus(**SMALL)
    assert len(corpus.commits) == 1000
    root = write_corpus(corpus, tmp_path / "c")
    reader = CorpusReader(root)
    n = 0
    for commit, triples in reader.replay():
        assert triples
        n += 1
    assert n == 1000
    diffs = parse_unified_diff(reader.diff_text(corpus.commits[0].diff_id))
    assert {d.file_path for d in diffs} == {f["path"] for f in corpus.commits[0].files}
    series = reader.series()
    assert all(len(s) == reader.meta["n_intervals"] for s in series.values())


def test_planted_regressions_change_cost():
    corpus = generate_corpus(**SMALL)
    by_release: dict[str, set] = {}
    for t in corpus.truth:
        if t["regression"]:
            assert t["cost_factor"] > 1.0
        elif t["fix_of"] is None:
            assert t["cost_factor"] == 1.0
        if t["regression"] or t["fix_of"]:
            by_release.setdefault(t["release_id"], set()).add(t["function"])
    for r in corpus.releases:
        assert {f for f, _ in r.effects} == by_release.get(r.release_id, set())


def test_reader_errors(tmp_path):
    with pytest.raises(CorpusError):
        CorpusReader(tmp_path)


def test_config_round_trip():
    cfg = CorpusConfig(clustered=True, n_changes=50)
    assert CorpusConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValueError):
        CorpusConfig(regression_rate=0.0).validate()


@pytest.mark.slow
def test_default_planted_rate():
    corpus = generate_corpus()
    n = len(corpus.truth)
    k = sum(t["regression"] for t in corpus.truth)
    assert n == 20000
    sigma = math.sqrt(n * 0.007 * 0.993)
    assert abs(k - 140) <= 3 * sigma
