"""Synthetic fleet: cost model, stack sampling and a generated change history."""

from .corpus import (
    Commit,
    Corpus,
    CorpusConfig,
    CorpusError,
    CorpusReader,
    ReleaseSpec,
    generate_corpus,
    write_corpus,
)
from .sampling import (
    CostModel,
    CostModelError,
    GcpuSeries,
    renormalized_share,
    simulate_sampling,
    true_inclusive_shares,
)

__all__ = [
    "Commit",
    "Corpus",
    "CorpusConfig",
    "CorpusError",
    "CorpusReader",
    "CostModel",
    "CostModelError",
    "GcpuSeries",
    "ReleaseSpec",
    "generate_corpus",
    "renormalized_share",
    "simulate_sampling",
    "true_inclusive_shares",
    "write_corpus",
]
