"""Synthetic monorepo history with planted regressions and sampled fleet CPU."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from ..diffcore import FunctionIndexEntry, UnifiedDiff, make_diff, parse_unified_diff, render_diffs, apply_diff
from . import codegen
from .codegen import SourceFile
from .sampling import CostModel, GcpuSeries, enumerate_paths, mean_one_lognormal, sample_inclusive_counts

ROOT_FUNCTION = "fleet_main"
CORPUS_FORMAT = "perfcast-corpus"

AREAS = (
    "feed", "ads", "search", "messaging", "video", "payments", "growth", "infra",
    "storage", "ranking", "groups", "events", "photos", "notifications", "privacy",
    "integrity", "marketplace", "stories", "comments", "profile",
)
TEAM_SUFFIX = ("core", "infra", "ui", "perf", "data", "api")
SUBDIRS = ("handlers", "models", "lib", "ranking", "utils", "views", "jobs", "common")
TOPS = ("www", "services", "lib")

# tenure quantum -> regression propensity; newest and longest-tenured
# engineers regress a little more often than the middle
TENURE_MULT = {1: 1.8, 2: 1.3, 3: 1.0, 4: 0.85, 5: 0.8, 6: 0.9, 7: 1.25}


@dataclass
class CorpusConfig:
    n_functions: int = 400
    n_releases: int = 600
    n_changes: int = 20000
    regression_rate: float = 0.007
    seed: int = 42
    interval: float = 1.0
    intervals_per_release: int = 12
    batch_size: int = 1000
    n_teams: int = 30
    n_tiny_teams: int = 4
    n_hot_teams: int = 3
    n_dispatchers: int = 20
    decoy_rate: float = 0.1
    clustered: bool = False
    n_clusters: int = 12
    cluster_width: float = 6.0
    cluster_name_prob: float = 0.9
    cost_factor: tuple[float, float] = (6.0, 12.0)
    fix_delay: tuple[int, int] = (2, 8)
    rare_fraction: float = 0.05
    share_sigma: float = 0.35
    noise_sigma: tuple[float, float] = (0.1, 0.25)
    flaky_sigma: float = 1.2
    tiny_share_factor: float = 0.08
    p_test_file: float = 0.35
    p_config_file: float = 0.1
    p_doc_file: float = 0.05

    def validate(self) -> None:
        if not 0.0 < self.regression_rate < 1.0:
            raise ValueError("regression_rate must be in (0, 1)")
        if self.n_functions < 2 or self.n_releases < 1 or self.n_changes < 1:
            raise ValueError("need at least 2 functions, 1 release and 1 change")
        if self.n_changes > self.n_releases * self.n_functions:
            raise ValueError("more changes than (release, function) slots")
        if self.interval <= 0 or self.intervals_per_release < 1 or self.batch_size < 1:
            raise ValueError("bad sampling parameters")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "CorpusConfig":
        obj = dict(obj)
        for key in ("cost_factor", "fix_delay", "noise_sigma"):
            if key in obj:
                obj[key] = tuple(obj[key])
        return cls(**obj)


@dataclass
class ReleaseSpec:
    release_id: str
    timestamp: float
    diffs: list[str]
    effects: list[tuple[str, float]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "release_id": self.release_id,
            "timestamp": self.timestamp,
            "diffs": self.diffs,
            "effects": [[f, x] for f, x in self.effects],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ReleaseSpec":
        return cls(obj["release_id"], obj["timestamp"], list(obj["diffs"]),
                   [(f, x) for f, x in obj["effects"]])


@dataclass
class Commit:
    diff_id: str
    release_id: str
    author: str
    team: str
    tenure: int
    files: list[dict]  # path, before, after revisions
    diff_text: str

    def to_json(self) -> dict:
        return {
            "diff_id": self.diff_id,
            "release_id": self.release_id,
            "author": self.author,
            "team": self.team,
            "tenure": self.tenure,
            "files": self.files,
        }


@dataclass
class Corpus:
    config: CorpusConfig
    releases: list[ReleaseSpec]
    commits: list[Commit]
    truth: list[dict]
    series: dict[str, GcpuSeries]
    counts: np.ndarray
    functions: list[str]
    editable: list[str]
    index: list[FunctionIndexEntry]
    initial_sources: dict[str, tuple[str, str]]  # path -> (revision, text)
    meta: dict

    @property
    def labels(self) -> dict[str, bool]:
        return {t["diff_id"]: t["regression"] for t in self.truth}


def revision_id(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:16]


def _syllable_word(rng, n: int) -> str:
    cons = "bdfgklmnprstvz"
    vows = "aeiou"
    return "".join(cons[rng.integers(len(cons))] + vows[rng.integers(len(vows))] for _ in range(n)) + cons[rng.integers(len(cons))]


class _World:
    """Mutable generator state: teams, files, functions and their costs."""

    def __init__(self, cfg: CorpusConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self._teams()
        self._files_and_functions()
        self._costs()

    def _teams(self):
        cfg, rng = self.cfg, self.rng
        names = []
        for a in AREAS:
            for s in TEAM_SUFFIX:
                names.append(f"{a}_{s}")
        order = rng.permutation(len(names))
        n_regular = cfg.n_teams - cfg.n_tiny_teams
        self.teams = [names[i] for i in order[: cfg.n_teams]]
        w = np.array([1.0 / (k + 1) ** 1.1 for k in range(n_regular)] + [0.0005] * cfg.n_tiny_teams)
        self.team_weight = w / w.sum()
        self.regular = self.teams[:n_regular]
        hot = rng.choice(n_regular, size=min(cfg.n_hot_teams, n_regular), replace=False)
        self.team_mult = {t: float(np.exp(0.3 * rng.standard_normal())) for t in self.teams}
        for i in hot:
            self.team_mult[self.teams[i]] *= 3.0
        self.authors: dict[str, list[tuple[str, int]]] = {}
        uid = 0
        for k, t in enumerate(self.teams):
            n = max(1, int(round(self.team_weight[k] * 400)))
            people = []
            for _ in range(n):
                people.append((f"u{uid:04d}", int(rng.integers(1, 8))))
                uid += 1
            self.authors[t] = people

    def _files_and_functions(self):
        cfg, rng = self.cfg, self.rng
        n_files = max(1, cfg.n_functions // 4)
        reg_w = self.team_weight[: len(self.regular)]
        reg_w = reg_w / reg_w.sum()
        owners = [self.regular[i % len(self.regular)] for i in range(min(n_files, len(self.regular)))]
        owners += list(rng.choice(self.regular, size=n_files - len(owners), p=reg_w))
        counts = np.ones(n_files, dtype=int)
        extra = rng.multinomial(cfg.n_functions - n_files, np.full(n_files, 1.0 / n_files)) if cfg.n_functions > n_files else np.zeros(n_files, int)
        counts += extra
        taken: set[str] = set()
        paths: set[str] = set()
        self.files: dict[str, SourceFile] = {}
        self.file_owner: dict[str, str] = {}
        self.fn_file: dict[str, str] = {}
        self.aux_files: dict[str, list[str]] = {}
        self.aux_for: dict[str, dict[str, str]] = {}
        for i in range(n_files):
            team = str(owners[i])
            area = team.split("_")[0]
            while True:
                top = codegen._pick(rng, TOPS)
                segs = [top, area, codegen._pick(rng, SUBDIRS)]
                if rng.random() < 0.5:
                    segs.append(codegen._pick(rng, SUBDIRS))
                leaf = f"{codegen._pick(rng, codegen.NOUNS)}_{codegen._pick(rng, ('util', 'service', 'handler', 'store', 'view'))}"
                path = "/".join(segs + [leaf + ".py"])
                if path not in paths:
                    paths.add(path)
                    break
            fns = [codegen.new_function(rng, codegen.function_name(rng, taken)) for _ in range(counts[i])]
            self.files[path] = SourceFile(path, codegen.file_imports(rng), fns)
            self.file_owner[path] = team
            for fn in fns:
                self.fn_file[fn.name] = path
            test_path = f"tests/{area}/test_{leaf}.py"
            cfg_path = f"configs/{area}/{team}.json"
            doc_path = f"docs/{area}/README.md"
            self.aux_for[path] = {"test": test_path, "config": cfg_path, "doc": doc_path}
            for kind, p in self.aux_for[path].items():
                if p not in self.aux_files:
                    self.aux_files[p] = codegen.aux_text(kind, rng, int(rng.integers(4, 9)))
        self.editable = [fn.name for f in self.files.values() for fn in f.functions]
        self.fn_obj = {fn.name: fn for f in self.files.values() for fn in f.functions}

    def _costs(self):
        cfg, rng = self.cfg, self.rng
        n = len(self.editable)
        share = np.exp(cfg.share_sigma * rng.standard_normal(n))
        noise = rng.uniform(cfg.noise_sigma[0], cfg.noise_sigma[1], n)
        n_rare = int(round(cfg.rare_fraction * n))
        rare = rng.choice(n, size=n_rare, replace=False)
        for j, i in enumerate(rare):
            if j % 2 == 0:
                noise[i] = cfg.flaky_sigma
            else:
                share[i] *= cfg.tiny_share_factor
        share = 0.95 * share / share.sum()
        self.rare = {self.editable[i] for i in rare}

        dispatchers = [f"dispatch_{AREAS[k % len(AREAS)]}_{k}" for k in range(cfg.n_dispatchers)]
        base: dict[str, float] = {ROOT_FUNCTION: 0.01}
        calls: dict[str, list[tuple[str, float]]] = {ROOT_FUNCTION: []}
        for d in dispatchers:
            base[d] = 0.04 / len(dispatchers)
            calls[ROOT_FUNCTION].append((d, 1.0))
            calls[d] = []
        assign = rng.integers(0, len(dispatchers), n)
        for i, f in enumerate(self.editable):
            k = float(rng.integers(1, 5))
            calls[dispatchers[assign[i]]].append((f, k))
            base[f] = float(share[i] / k)
        self.cost = CostModel(base, calls, {ROOT_FUNCTION: 1.0})
        self.noise_sigma = {f: float(noise[i]) for i, f in enumerate(self.editable)}
        for d in dispatchers:
            self.noise_sigma[d] = 0.1
        self.noise_sigma[ROOT_FUNCTION] = 0.0
        self.dispatchers = dispatchers
        churn = np.exp(0.8 * rng.standard_normal(n))
        self.churn = churn / churn.sum()

    def pick_author(self, fn: str) -> tuple[str, str, int]:
        rng = self.rng
        if rng.random() < 0.85:
            team = self.file_owner[self.fn_file[fn]]
        else:
            team = self.teams[int(rng.choice(len(self.teams), p=self.team_weight))]
        author, tenure = codegen._pick(self.rng, self.authors[team])
        return team, author, tenure

    def expected_multiplier(self) -> float:
        """E[team_mult * tenure_mult] under the author-picking process."""
        total = 0.0
        for i, fn in enumerate(self.editable):
            owner = self.file_owner[self.fn_file[fn]]
            exp_owner = self._team_mean(owner)
            cross = sum(self.team_weight[k] * self._team_mean(t) for k, t in enumerate(self.teams))
            total += self.churn[i] * (0.85 * exp_owner + 0.15 * cross)
        return total

    def _team_mean(self, team: str) -> float:
        people = self.authors[team]
        return self.team_mult[team] * float(np.mean([TENURE_MULT[t] for _, t in people]))

    def render_file(self, path: str) -> tuple[str, list[FunctionIndexEntry]]:
        text, spans = self.files[path].render()
        rev = revision_id(text)
        return text, [FunctionIndexEntry(rev, path, name, s, e) for name, s, e in spans]


def _aux_render(lines: list[str]) -> str:
    return "\n".join(lines) + "\n"


def generate_corpus(config: CorpusConfig | None = None, **overrides) -> Corpus:
    """Simulate a release history, plant regressions and sample the fleet.

    Every planted regression multiplies its function's self cost by a factor
    drawn from ``cost_factor``; it is reverted by a fix commit a few releases
    later. Benign commits never touch costs.
    """
    cfg = config or CorpusConfig()
    if overrides:
        cfg = CorpusConfig(**{**asdict(cfg), **overrides})
    cfg.validate()
    ss = np.random.SeedSequence(cfg.seed)
    world_ss, sched_ss, edit_ss, sample_ss, cluster_ss = ss.spawn(5)
    world = _World(cfg, np.random.default_rng(world_ss))
    rng = np.random.default_rng(sched_ss)
    erng = np.random.default_rng(edit_ss)
    crng = np.random.default_rng(cluster_ss)

    n_fn = len(world.editable)
    fn_pos = {f: i for i, f in enumerate(world.editable)}
    release_gap = cfg.interval * cfg.intervals_per_release

    # per-release regression intensity (flat unless clustered)
    intensity = np.ones(cfg.n_releases)
    clusters: list[dict] = []
    if cfg.clustered:
        centers = np.sort(crng.uniform(0, cfg.n_releases, cfg.n_clusters))
        used: set[str] = set()
        for c in centers:
            while True:
                name = f"{_syllable_word(crng, 2)}_{_syllable_word(crng, 2)}"
                if name not in used:
                    used.add(name)
                    break
            clusters.append({"center": float(c), "callee": name})
        r = np.arange(cfg.n_releases)
        bumps = np.exp(-0.5 * ((r[:, None] - centers[None, :]) / cfg.cluster_width) ** 2)
        intensity = 0.1 + bumps.sum(axis=1)
    intensity = intensity / intensity.mean()
    norm = world.expected_multiplier()

    quotas = np.full(cfg.n_releases, cfg.n_changes // cfg.n_releases)
    extra = cfg.n_changes - quotas.sum()
    if extra:
        quotas[rng.choice(cfg.n_releases, size=extra, replace=False)] += 1

    index: dict[tuple[str, str], list[FunctionIndexEntry]] = {}
    initial: dict[str, tuple[str, str]] = {}
    for path in sorted(world.files):
        text, entries = world.render_file(path)
        initial[path] = (entries[0].revision, text)
        index[(entries[0].revision, path)] = entries
    for path in sorted(world.aux_files):
        text = _aux_render(world.aux_files[path])
        initial[path] = (revision_id(text), text)

    locked: dict[str, dict] = {}  # function -> pending regression
    fixes_due: dict[int, list[str]] = {}
    releases: list[ReleaseSpec] = []
    commits: list[Commit] = []
    truth: list[dict] = []
    seq = 0
    for r in range(cfg.n_releases):
        rid = f"R{r:04d}"
        ts = (r + 1) * release_gap
        due = [f for f in fixes_due.pop(r, []) if f in locked]
        quota = int(quotas[r])
        if len(due) > quota:
            fixes_due.setdefault(r + 1, [])[:0] = due[quota:]
            due = due[:quota]
        planned: list[tuple[str, bool]] = [(f, True) for f in due]
        free = max(0, quota - len(planned))
        avail = np.ones(n_fn, dtype=bool)
        for f in locked:
            avail[fn_pos[f]] = False
        k = min(free, int(avail.sum()))
        if k:
            p = world.churn * avail
            picks = rng.choice(n_fn, size=k, replace=False, p=p / p.sum())
            planned += [(world.editable[i], False) for i in sorted(picks)]
        order = rng.permutation(len(planned))
        release = ReleaseSpec(rid, float(ts), [])
        for j in order:
            fn_name, is_fix = planned[j]
            team, author, tenure = world.pick_author(fn_name)
            fn = world.fn_obj[fn_name]
            path = world.fn_file[fn_name]
            record = {"function": fn_name, "file": path, "regression": False, "fix_of": None,
                      "cost_factor": 1.0, "callee": None, "cluster": None, "kind": None}
            if is_fix:
                pend = locked.pop(fn_name)
                new_fn = pend["before"]
                record.update(kind="fix", fix_of=pend["diff_id"], cost_factor=1.0 / pend["factor"])
                release.effects.append((fn_name, 1.0 / pend["factor"]))
            else:
                m = world.team_mult[team] * TENURE_MULT[tenure] / norm
                prob = min(0.5, cfg.regression_rate * m * intensity[r])
                if rng.random() < prob:
                    callee = None
                    cluster = None
                    if clusters:
                        ci = int(np.argmin([abs(c["center"] - r) for c in clusters]))
                        if abs(clusters[ci]["center"] - r) <= 2.5 * cfg.cluster_width and erng.random() < cfg.cluster_name_prob:
                            callee = clusters[ci]["callee"]
                            cluster = ci
                    edit = codegen.regression_edit(erng, fn, callee)
                    factor = float(erng.uniform(*cfg.cost_factor))
                    diff_id = f"D{seq:06d}"
                    locked[fn_name] = {"before": fn, "factor": factor, "diff_id": diff_id}
                    lo, hi = cfg.fix_delay
                    fixes_due.setdefault(r + int(rng.integers(lo, hi + 1)), []).append(fn_name)
                    release.effects.append((fn_name, factor))
                    record.update(regression=True, kind=edit.kind, cost_factor=factor,
                                  callee=edit.callee, cluster=cluster)
                else:
                    edit = codegen.benign_edit(erng, fn, cfg.decoy_rate)
                    record.update(kind=edit.kind, callee=edit.callee)
                new_fn = edit.after
            commit = _make_commit(world, erng, cfg, fn_name, new_fn, path, index, seq, rid, team, author, tenure)
            record["diff_id"] = commit.diff_id
            record["release_id"] = rid
            commits.append(commit)
            truth.append(record)
            release.diffs.append(commit.diff_id)
            seq += 1
        releases.append(release)

    counts, functions, timestamps = _simulate(world, cfg, releases, np.random.default_rng(sample_ss))
    batch = cfg.batch_size
    series = {f: GcpuSeries(f, timestamps, counts[:, i] / batch) for i, f in enumerate(functions)}
    entries = [e for key in sorted(index) for e in index[key]]
    meta = {
        "format": CORPUS_FORMAT,
        "version": 1,
        "config": cfg.to_json(),
        "interval": cfg.interval,
        "batch_size": batch,
        "n_intervals": int(len(timestamps)),
        "start": 0.0,
        "end": float(timestamps[-1] + cfg.interval),
        "release_gap": release_gap,
        "root": ROOT_FUNCTION,
        "dispatchers": world.dispatchers,
        "editable": world.editable,
        "rare": sorted(world.rare),
        "clusters": clusters,
    }
    return Corpus(cfg, releases, commits, truth, series, counts, functions, world.editable,
                  entries, initial, meta)


def _make_commit(world: _World, rng, cfg: CorpusConfig, fn_name, new_fn, path, index, seq, rid,
                 team, author, tenure) -> Commit:
    before_text, before_entries = world.render_file(path)
    src = world.files[path]
    src.functions = [new_fn if f.name == fn_name else f for f in src.functions]
    world.fn_obj[fn_name] = new_fn
    after_text, after_entries = world.render_file(path)
    index.setdefault((after_entries[0].revision, path), after_entries)
    diffs: list[UnifiedDiff] = []
    files = []
    d = make_diff(before_text, after_text, path, width=1)
    if d is not None:
        diffs.append(d)
        files.append({"path": path, "before": before_entries[0].revision, "after": after_entries[0].revision})
    aux = world.aux_for[path]
    for kind, p_kind in (("test", cfg.p_test_file), ("config", cfg.p_config_file), ("doc", cfg.p_doc_file)):
        if rng.random() < p_kind:
            apath = aux[kind]
            old = world.aux_files[apath]
            new = codegen.aux_edit(kind, rng, old)
            world.aux_files[apath] = new
            b, a = _aux_render(old), _aux_render(new)
            ad = make_diff(b, a, apath, width=1)
            if ad is not None:
                diffs.append(ad)
                files.append({"path": apath, "before": revision_id(b), "after": revision_id(a)})
    return Commit(f"D{seq:06d}", rid, author, team, tenure, files, render_diffs(diffs))


def _simulate(world: _World, cfg: CorpusConfig, releases: list[ReleaseSpec], rng):
    paths = enumerate_paths(world.cost)
    functions = list(paths.functions)
    pos = {f: i for i, f in enumerate(functions)}
    n_seg = len(releases) + 1
    factor = np.ones((n_seg, len(functions)))
    cur = np.ones(len(functions))
    for k, rel in enumerate(releases):
        for f, x in rel.effects:
            cur[pos[f]] *= x
        factor[k + 1] = cur
    per = cfg.intervals_per_release
    n_int = n_seg * per
    seg_of = np.arange(n_int) // per
    sig = np.array([world.noise_sigma.get(f, 0.0) for f in functions])
    tips = paths.tips
    counts = np.empty((n_int, len(functions)), dtype=np.int64)
    chunk = 2048
    for lo in range(0, n_int, chunk):
        hi = min(n_int, lo + chunk)
        noise = mean_one_lognormal(rng, sig, (hi - lo, len(functions)))
        mult = factor[seg_of[lo:hi]] * noise
        cpu = paths.cpu[None, :] * mult[:, tips]
        counts[lo:hi] = sample_inclusive_counts(cpu, paths.incidence, cfg.batch_size, rng)
    timestamps = cfg.interval * np.arange(n_int, dtype=np.float64)
    return counts, functions, timestamps


# ------------------------------------------------------------------ disk format


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_corpus(corpus: Corpus, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    (out / "diffs").mkdir(parents=True, exist_ok=True)
    (out / "corpus.json").write_text(json.dumps(corpus.meta, sort_keys=True, indent=1) + "\n")
    with open(out / "releases.jsonl", "w") as fh:
        for r in corpus.releases:
            fh.write(_dump(r.to_json()) + "\n")
    with open(out / "commits.jsonl", "w") as fh:
        for c in corpus.commits:
            fh.write(_dump(c.to_json()) + "\n")
            (out / "diffs" / f"{c.diff_id}.diff").write_text(c.diff_text)
    with open(out / "truth.jsonl", "w") as fh:
        for t in corpus.truth:
            fh.write(_dump(t) + "\n")
    with open(out / "index.jsonl", "w") as fh:
        for e in corpus.index:
            fh.write(_dump(asdict(e)) + "\n")
    with open(out / "sources.jsonl", "w") as fh:
        for path in sorted(corpus.initial_sources):
            rev, text = corpus.initial_sources[path]
            fh.write(_dump({"path": path, "revision": rev, "text": text}) + "\n")
    with open(out / "series.jsonl", "w") as fh:
        for i, f in enumerate(corpus.functions):
            fh.write(_dump({"function": f, "counts": corpus.counts[:, i].tolist()}) + "\n")
    return out


class CorpusError(ValueError):
    pass


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        raise CorpusError(f"missing corpus file {path.name}")
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass
class CorpusReader:
    """Lazy view of a corpus directory."""

    root: Path

    def __post_init__(self):
        self.root = Path(self.root)
        meta_path = self.root / "corpus.json"
        if not meta_path.exists():
            raise CorpusError(f"{self.root} is not a corpus directory (no corpus.json)")
        self.meta = json.loads(meta_path.read_text())
        if self.meta.get("format") != CORPUS_FORMAT:
            raise CorpusError("unrecognized corpus format")

    def releases(self) -> list[ReleaseSpec]:
        return [ReleaseSpec.from_json(o) for o in _read_jsonl(self.root / "releases.jsonl")]

    def commits(self) -> list[dict]:
        return _read_jsonl(self.root / "commits.jsonl")

    def truth(self) -> list[dict]:
        return _read_jsonl(self.root / "truth.jsonl")

    def diff_text(self, diff_id: str) -> str:
        p = self.root / "diffs" / f"{diff_id}.diff"
        if not p.exists():
            raise CorpusError(f"missing diff {diff_id}")
        return p.read_text()

    def index(self) -> dict[tuple[str, str], list[FunctionIndexEntry]]:
        out: dict[tuple[str, str], list[FunctionIndexEntry]] = {}
        for o in _read_jsonl(self.root / "index.jsonl"):
            e = FunctionIndexEntry(**o)
            out.setdefault((e.revision, e.file_path), []).append(e)
        return out

    def series(self) -> dict[str, GcpuSeries]:
        n = self.meta["n_intervals"]
        ts = self.meta["start"] + self.meta["interval"] * np.arange(n, dtype=np.float64)
        batch = self.meta["batch_size"]
        out = {}
        for o in _read_jsonl(self.root / "series.jsonl"):
            c = np.asarray(o["counts"], dtype=np.float64)
            out[o["function"]] = GcpuSeries(o["function"], ts, c / batch)
        return out

    def replay(self) -> Iterator[tuple[dict, list[tuple[UnifiedDiff, str, str]]]]:
        """Yield each commit with (file diff, before text, after text) triples.

        Revisions are rebuilt from the initial snapshots by applying diffs in
        commit order; every rebuilt file is checked against its revision id.
        """
        files = {o["path"]: o["text"] for o in _read_jsonl(self.root / "sources.jsonl")}
        for commit in self.commits():
            diffs = {d.file_path: d for d in parse_unified_diff(self.diff_text(commit["diff_id"]))}
            triples = []
            for f in commit["files"]:
                path = f["path"]
                before = files.get(path, "")
                if revision_id(before) != f["before"]:
                    raise CorpusError(f"{commit['diff_id']}: {path} does not match revision {f['before']}")
                after = apply_diff(diffs[path], before)
                if revision_id(after) != f["after"]:
                    raise CorpusError(f"{commit['diff_id']}: rebuilt {path} != revision {f['after']}")
                files[path] = after
                triples.append((diffs[path], before, after))
            yield commit, triples
