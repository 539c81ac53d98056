"""Network-level analytics: contagion potentials, pairwise infection, block structure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import DerivedRates, InfluenceGraph


def pairwise_infection_probability(q, e, convention: str = "synchronous"):
    """Probability that an active source eventually activates one susceptible neighbour.

    ``q`` is the source's monthly continuation probability and ``e`` the
    per-month influence probability, with no other activation channel.
    ``"synchronous"`` follows the simulated dynamics (the source already acts
    in the first step): e / (1 - q + q e). ``"lagged"`` is the standard
    contagion-potential term q e / (1 - q + q e), which only counts influence
    after the source has survived a step.
    """
    q = np.asarray(q, dtype=float)
    e = np.asarray(e, dtype=float)
    if np.any((q < 0) | (q > 1) | (e < 0) | (e > 1)):
        raise ValidationError("q and e must lie in [0, 1]")
    if convention not in ("synchronous", "lagged"):
        raise ValidationError(f"unknown convention {convention!r}")
    den = 1.0 - q + q * e
    num = e if convention == "synchronous" else q * e
    # q = 1, e = 0: the source never recovers and never infects
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class ContagionReport:
    potentials: np.ndarray
    ranking: np.ndarray  # risk indices, most contagious first
    pair_terms: np.ndarray  # [i, j]: contribution of target j to C_i
    convention: str

    def rank_of(self) -> np.ndarray:
        """1-based rank of each risk."""
        ranks = np.empty_like(self.ranking)
        ranks[self.ranking] = np.arange(1, self.ranking.size + 1)
        return ranks


def contagion_potential(rates: DerivedRates, graph: InfluenceGraph | None = None,
                        convention: str = "lagged") -> ContagionReport:
    """Mean number of risks that risk i activates when it alone has materialized.

    ``C_i = sum_j q_i e_ij / (1 - q_i + q_i e_ij)`` with ``e_ij = p_ext[i, j]``.
    ``graph`` is only used to cross-check dimensions; the edge structure is
    already carried by ``p_ext``.
    """
    if graph is not None and graph.N != rates.N:
        raise ValidationError("graph and rates disagree on N")
    q = rates.p_con[:, None]
    terms = pairwise_infection_probability(np.broadcast_to(q, rates.p_ext.shape), rates.p_ext,
                                           convention)
    np.fill_diagonal(terms, 0.0)
    pot = terms.sum(axis=1)
    # stable sort: ties keep index order
    ranking = np.argsort(-pot, kind="stable")
    return ContagionReport(pot, ranking, terms, convention)


@dataclass(frozen=True, eq=False)
class BlockMatrix:
    sizes: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=int)
        P = np.asarray(self.probabilities, dtype=float)
        g = sizes.size
        if P.shape != (g, g):
            raise ValidationError("block matrix must be G x G for G groups")
        if np.any(sizes < 0):
            raise ValidationError("group sizes must be non-negative")
        finite = ~np.isnan(P)
        if np.any((P[finite] < 0) | (P[finite] > 1)):
            raise ValidationError("block probabilities must lie in [0, 1]")
        if not np.array_equal(np.nan_to_num(P, nan=-1), np.nan_to_num(P.T, nan=-1)):
            raise ValidationError("block matrix must be symmetric")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "probabilities", P)

    @property
    def G(self) -> int:
        return self.sizes.size

    @property
    def N(self) -> int:
        return int(self.sizes.sum())

    def labels(self) -> np.ndarray:
        """1-based group label per node, groups laid out contiguously."""
        return np.repeat(np.arange(1, self.G + 1), self.sizes)


def sbm_generate(blocks: BlockMatrix, seed: int) -> InfluenceGraph:
    """Sample each unordered pair independently with its block probability."""
    if np.isnan(blocks.probabilities).any():
        raise ValidationError("block probabilities must all be defined")
    rng = np.random.default_rng(seed)
    n = blocks.N
    lab = blocks.labels() - 1
    P = blocks.probabilities[lab[:, None], lab[None, :]]
    iu, ju = np.triu_indices(n, 1)
    u = rng.random(iu.size)
    a = np.zeros((n, n), dtype=np.int8)
    hit = u < P[iu, ju]
    a[iu[hit], ju[hit]] = 1
    a = a + a.T
    return InfluenceGraph(a, a.astype(np.int64))


def estimate_block_probabilities(graph: InfluenceGraph, labels) -> BlockMatrix:
    """Observed edge density for every pair of groups.

    ``labels`` are 1-based group ids per node. Intra-group densities of
    groups with fewer than two members are undefined and reported as NaN.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (graph.N,):
        raise ValidationError("need one label per node")
    groups = np.unique(labels)
    if groups.min() < 1:
        raise ValidationError("group labels are 1-based")
    G = int(groups.max())
    sizes = np.bincount(labels, minlength=G + 1)[1:]
    onehot = np.zeros((graph.N, G))
    onehot[np.arange(graph.N), labels - 1] = 1
    edges = onehot.T @ graph.adjacency.astype(float) @ onehot
    pairs = np.outer(sizes, sizes).astype(float)
    np.fill_diagonal(edges, np.diag(edges) / 2)
    np.fill_diagonal(pairs, sizes * (sizes - 1) / 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        dens = np.where(pairs > 0, edges / np.where(pairs > 0, pairs, 1), np.nan)
    return BlockMatrix(sizes, dens)


@dataclass
class DegreeStats:
    edges: int
    mean_degree: float
    degrees: np.ndarray
    group_mean_degree: dict


def degree_stats(graph: InfluenceGraph, labels=None) -> DegreeStats:
    deg = graph.degrees()
    E = graph.n_edges
    per_group = {}
    if labels is not None:
        labels = np.asarray(labels, dtype=int)
        for g in np.unique(labels):
            per_group[int(g)] = float(deg[labels == g].mean())
    mean = 2.0 * E / graph.N if graph.N else 0.0
    return DegreeStats(E, mean, deg, per_group)
