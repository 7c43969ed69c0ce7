"""Cost model and freeze-frame stack sampling with inclusive attribution."""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp


class CostModelError(ValueError):
    pass


@dataclass
class CostModel:
    """Per-function self cost, call edges and top-level invocation rates.

    A function's CPU is its total invocation count times ``base_cost``;
    invocations flow from ``rate`` (direct entry) through ``calls``
    (callee, calls per invocation).
    """

    base_cost: dict[str, float]
    calls: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    rate: dict[str, float] = field(default_factory=dict)

    def functions(self) -> list[str]:
        return list(self.base_cost)

    def validate(self) -> list[str]:
        """Check the model and return functions in caller-before-callee order."""
        names = set(self.base_cost)
        for f, c in self.base_cost.items():
            if c < 0:
                raise CostModelError(f"negative cost for {f}")
        for f, r in self.rate.items():
            if f not in names:
                raise CostModelError(f"rate given for unknown function {f}")
            if r < 0:
                raise CostModelError(f"negative rate for {f}")
        graph: dict[str, set[str]] = {f: set() for f in names}
        for caller, edges in self.calls.items():
            if caller not in names:
                raise CostModelError(f"unknown caller {caller}")
            for callee, k in edges:
                if callee not in names:
                    raise CostModelError(f"unknown callee {callee}")
                if k < 0:
                    raise CostModelError(f"negative call count {caller}->{callee}")
                graph[callee].add(caller)
        try:
            return list(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            raise CostModelError(f"call graph has a cycle: {exc.args[1]}") from None


@dataclass(frozen=True)
class StackPaths:
    """Every root-to-function call path, with the CPU burned at its tip."""

    functions: tuple[str, ...]
    paths: tuple[tuple[str, ...], ...]
    cpu: np.ndarray  # CPU per path
    incidence: sp.csr_matrix  # paths x functions, 1 where function is on the path

    @property
    def tips(self) -> np.ndarray:
        pos = {f: i for i, f in enumerate(self.functions)}
        return np.array([pos[p[-1]] for p in self.paths], dtype=np.int64)


def enumerate_paths(cost: CostModel) -> StackPaths:
    cost.validate()
    functions = tuple(cost.functions())
    pos = {f: i for i, f in enumerate(functions)}
    paths: list[tuple[str, ...]] = []
    cpu: list[float] = []

    def walk(path: tuple[str, ...], inv: float):
        tip = path[-1]
        paths.append(path)
        cpu.append(inv * cost.base_cost[tip])
        for callee, k in cost.calls.get(tip, ()):
            walk(path + (callee,), inv * k)

    for f in functions:
        r = cost.rate.get(f, 0.0)
        if r > 0:
            walk((f,), r)

    rows, cols = [], []
    for i, p in enumerate(paths):
        for f in set(p):
            rows.append(i)
            cols.append(pos[f])
    inc = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(len(paths), len(functions))
    )
    return StackPaths(functions, tuple(paths), np.asarray(cpu, dtype=np.float64), inc)


def true_inclusive_shares(cost: CostModel) -> dict[str, float]:
    """Expected fraction of samples crediting each function."""
    sp_ = enumerate_paths(cost)
    total = sp_.cpu.sum()
    if total <= 0:
        raise CostModelError("model burns no CPU")
    share = sp_.incidence.T @ (sp_.cpu / total)
    return {f: float(share[i]) for i, f in enumerate(sp_.functions)}


@dataclass(frozen=True)
class GcpuSeries:
    function_name: str
    timestamps: np.ndarray
    gcpu: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        g = np.asarray(self.gcpu, dtype=np.float64)
        if ts.shape != g.shape:
            raise ValueError("timestamps and gcpu differ in length")
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if g.size and (g.min() < 0 or g.max() > 1):
            raise ValueError("gcpu outside [0, 1]")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "gcpu", g)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.timestamps.tolist(), self.gcpu.tolist()))

    def between(self, t0: float, t1: float) -> np.ndarray:
        """gcpu values with t0 <= timestamp < t1."""
        lo = np.searchsorted(self.timestamps, t0, side="left")
        hi = np.searchsorted(self.timestamps, t1, side="left")
        return self.gcpu[lo:hi]


def mean_one_lognormal(rng: np.random.Generator, sigma, size) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    return np.exp(sigma * rng.standard_normal(size) - 0.5 * sigma * sigma)


def sample_inclusive_counts(
    path_cpu: np.ndarray,
    incidence: sp.csr_matrix,
    batch_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw ``batch_size`` stacks per interval and credit every frame on them.

    ``path_cpu`` is (intervals x paths); returns (intervals x functions) counts.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    totals = path_cpu.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise CostModelError("an interval burns no CPU")
    p = path_cpu / totals
    counts = rng.multinomial(batch_size, p)
    return np.asarray((sp.csr_matrix(counts) @ incidence).todense(), dtype=np.int64)


def simulate_sampling(
    cost: CostModel,
    duration: float,
    interval: float = 1.0,
    batch_size: int = 1000,
    seed: int = 0,
    noise_sigma: Mapping[str, float] | None = None,
    start: float = 0.0,
) -> dict[str, GcpuSeries]:
    """Sample a static fleet every ``interval`` over ``duration`` time units.

    ``noise_sigma`` adds per-interval mean-one log-normal noise to each
    function's invocation volume (its own CPU, not its callees').
    """
    if interval <= 0:
        raise ValueError("interval must be > 0")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    paths = enumerate_paths(cost)
    n = int(np.floor(duration / interval + 1e-9))
    rng = np.random.default_rng(seed)
    cpu = np.tile(paths.cpu, (n, 1))
    if noise_sigma:
        sig = np.array([noise_sigma.get(f, 0.0) for f in paths.functions])
        noise = mean_one_lognormal(rng, sig, (n, len(sig)))
        cpu = cpu * noise[:, paths.tips]
    counts = sample_inclusive_counts(cpu, paths.incidence, batch_size, rng)
    ts = start + interval * np.arange(n)
    return {
        f: GcpuSeries(f, ts, counts[:, i] / batch_size)
        for i, f in enumerate(paths.functions)
    }


def renormalized_share(share: float, factor: float) -> float:
    """Share of a leaf after scaling its cost by ``factor`` (others unchanged)."""
    return factor * share / (1.0 + (factor - 1.0) * share)


def series_from_counts(names: Sequence[str], counts: np.ndarray, timestamps: np.ndarray,
                       batch_size: int) -> dict[str, GcpuSeries]:
    return {
        f: GcpuSeries(f, timestamps, counts[:, i] / batch_size) for i, f in enumerate(names)
    }
