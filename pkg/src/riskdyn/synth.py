"""Synthetic datasets shaped like the expert survey: grouped risks, block-structured
influence graph, half-step likelihood scores and a simulated monthly history."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import simulate_history
from .errors import ValidationError
from .io import save_catalog, save_graph, save_history, save_params
from .model import HistoricalSeries, InfluenceGraph, ModelParams, RiskCatalog, derive_rates, month_labels
from .netstats import BlockMatrix, sbm_generate

# groups 1-3 (economic, environmental, geopolitical) are the densest; about 520 expected edges for 5 x 10
DEFAULT_BLOCKS = (
    (0.70, 0.50, 0.50, 0.40, 0.30),
    (0.50, 0.60, 0.50, 0.40, 0.30),
    (0.50, 0.50, 0.60, 0.40, 0.30),
    (0.40, 0.40, 0.40, 0.50, 0.30),
    (0.30, 0.30, 0.30, 0.30, 0.50),
)
REFERENCE_PARAMS = ModelParams.decade(0.365, 0.14, 427.0)


@dataclass(frozen=True)
class SynthConfig:
    group_sizes: tuple[int, ...] = (10, 10, 10, 10, 10)
    block_probabilities: tuple[tuple[float, ...], ...] = DEFAULT_BLOCKS
    likelihood_range: tuple[float, float] = (2.5, 4.0)  # sampled on the half-step grid
    stddev_fraction: tuple[float, float] = (0.01, 0.02)  # stddev as a fraction of the score
    params: ModelParams = REFERENCE_PARAMS
    months: int = 156
    burn_in: int = 240
    start_month: str = "2000-01"
    seed: int = 0
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.block_probabilities) != len(self.group_sizes):
            raise ValidationError("block matrix must have one row per group")
        if self.months < 24:
            raise ValidationError("synthetic history needs at least 24 months")
        lo, hi = self.likelihood_range
        if not 1.0 <= lo <= hi <= 5.0:
            raise ValidationError("likelihood range must lie within [1, 5]")
        if self.names is not None and len(self.names) != self.N:
            raise ValidationError("need one name per risk")

    @property
    def N(self) -> int:
        return int(sum(self.group_sizes))

    def blocks(self) -> BlockMatrix:
        return BlockMatrix(np.array(self.group_sizes), np.array(self.block_probabilities))

    def as_dict(self) -> dict:
        return {
            "group_sizes": list(self.group_sizes),
            "block_probabilities": [list(r) for r in self.block_probabilities],
            "likelihood_range": list(self.likelihood_range),
            "stddev_fraction": list(self.stddev_fraction),
            "params": self.params.as_dict(),
            "months": self.months,
            "burn_in": self.burn_in,
            "start_month": self.start_month,
            "seed": self.seed,
        }


@dataclass
class SynthDataset:
    catalog: RiskCatalog
    graph: InfluenceGraph
    history: HistoricalSeries
    params: ModelParams
    config: SynthConfig = field(repr=False, default=None)


def synth_dataset(config: SynthConfig | None = None) -> SynthDataset:
    config = config or SynthConfig()
    cat_seed, graph_seed, sim_seed = (
        int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(config.seed).spawn(3)
    )
    rng = np.random.default_rng(cat_seed)
    lo, hi = config.likelihood_range
    grid = np.arange(lo, hi + 0.25, 0.5)
    L = rng.choice(grid, size=config.N)
    sd = np.round(L * rng.uniform(*config.stddev_fraction, size=config.N), 4)
    blocks = config.blocks()
    catalog = RiskCatalog.from_likelihoods(L, sd, blocks.labels(), config.names)
    graph = sbm_generate(blocks, graph_seed)
    rates = derive_rates(catalog, graph, config.params)
    steps = config.burn_in + config.months - 1
    states = simulate_history(rates, np.zeros(config.N, np.int8), steps, sim_seed)[config.burn_in:]
    history = HistoricalSeries(month_labels(config.start_month, config.months), states)
    return SynthDataset(catalog, graph, history, config.params, config)


def write_dataset(ds: SynthDataset, outdir) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "risks": outdir / "risks.csv",
        "edges": outdir / "edges.csv",
        "history": outdir / "history.csv",
        "params": outdir / "params.json",
    }
    save_catalog(ds.catalog, paths["risks"])
    save_graph(ds.graph, paths["edges"])
    save_history(ds.history, paths["history"])
    save_params(ds.params, paths["params"])
    return paths
