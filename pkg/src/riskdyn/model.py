"""Domain types and the mappings from expert assessments to monthly transition probabilities.

All probabilities live on the canonical one-month step. Expert likelihoods
``L`` on the 1..5 scale become vulnerabilities ``p = (L - 1) / 4``; the three
model exponents then give

* internal materialization  ``p_int  = 1 - (1 - p_i) ** alpha``
* continuation              ``p_con  = 1 - (1 - p_i) ** gamma``
* influence of j on i       ``p_ext  = 1 - (1 - p_i) ** (beta * a_ji)``

Risks are addressed by 0-based index inside the library; the 1-based ids
only appear in files and on the command line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

MONTHS_PER_DECADE = 120.0

GROUPS = ("economic", "environmental", "geopolitical", "societal", "technological")


def parse_group(label) -> int:
    """Map a group name or an integer label onto 1..5 (1=economic ... 5=technological)."""
    if isinstance(label, (int, np.integer)):
        g = int(label)
    else:
        text = str(label).strip().lower()
        if text.isdigit():
            g = int(text)
        elif text in GROUPS:
            return GROUPS.index(text) + 1
        else:
            raise ValidationError(f"unknown risk group {label!r}")
    if not 1 <= g <= len(GROUPS):
        raise ValidationError(f"group index {g} outside 1..{len(GROUPS)}")
    return g


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskRecord:
    id: int
    name: str
    group: int
    likelihood: float
    stddev: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "group", parse_group(self.group))
        if not (math.isfinite(self.likelihood) and 1.0 <= self.likelihood <= 5.0):
            raise ValidationError(
                f"risk {self.id} ({self.name}): likelihood {self.likelihood} outside [1, 5]"
            )
        if not (math.isfinite(self.stddev) and self.stddev >= 0.0):
            raise ValidationError(f"risk {self.id} ({self.name}): negative or non-finite stddev")


@dataclass(frozen=True)
class RiskCatalog:
    entries: tuple[RiskRecord, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        ids = [r.id for r in entries]
        if ids != list(range(1, len(entries) + 1)):
            raise ValidationError("risk ids must be unique and contiguous 1..N in order")

    @classmethod
    def from_likelihoods(cls, likelihoods, stddevs=None, groups=None, names=None) -> "RiskCatalog":
        n = len(likelihoods)
        stddevs = [0.0] * n if stddevs is None else stddevs
        groups = [1] * n if groups is None else groups
        names = [f"risk {i + 1}" for i in range(n)] if names is None else names
        return cls(
            tuple(
                RiskRecord(i + 1, names[i], groups[i], float(likelihoods[i]), float(stddevs[i]))
                for i in range(n)
            )
        )

    @property
    def N(self) -> int:
        return len(self.entries)

    @property
    def likelihoods(self) -> np.ndarray:
        return np.array([r.likelihood for r in self.entries], dtype=float)

    @property
    def stddevs(self) -> np.ndarray:
        return np.array([r.stddev for r in self.entries], dtype=float)

    @property
    def groups(self) -> np.ndarray:
        return np.array([r.group for r in self.entries], dtype=int)

    def vulnerabilities(self) -> np.ndarray:
        return normalize_likelihood(self.likelihoods)

    def with_likelihoods(self, likelihoods) -> "RiskCatalog":
        return RiskCatalog(
            tuple(
                RiskRecord(r.id, r.name, r.group, float(L), r.stddev)
                for r, L in zip(self.entries, likelihoods)
            )
        )


@dataclass(frozen=True, eq=False)
class InfluenceGraph:
    """Undirected binary influence graph; optional expert-count weights are kept but unused."""

    adjacency: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError("adjacency must be a square matrix")
        if not np.isin(a, (0, 1)).all():
            raise ValidationError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a)):
            raise ValidationError("self-loops are not allowed")
        if not np.array_equal(a, a.T):
            raise ValidationError("adjacency must be symmetric")
        object.__setattr__(self, "adjacency", _frozen(a, np.int8))
        if self.weights is not None:
            w = np.asarray(self.weights)
            if w.shape != a.shape or np.any(w < 0) or not np.array_equal(w, w.T):
                raise ValidationError("weights must be a symmetric non-negative matrix")
            if not np.array_equal(w > 0, a > 0):
                raise ValidationError("weights must be positive exactly on edges")
            object.__setattr__(self, "weights", _frozen(w, np.int64))

    @classmethod
    def empty(cls, n: int) -> "InfluenceGraph":
        return cls(np.zeros((n, n), dtype=np.int8))

    @classmethod
    def complete(cls, n: int) -> "InfluenceGraph":
        return cls(np.ones((n, n), dtype=np.int8) - np.eye(n, dtype=np.int8))

    @classmethod
    def from_edges(cls, n: int, edges: Sequence[tuple], weighted: bool = True) -> "InfluenceGraph":
        """Build from ``(i, j)`` or ``(i, j, weight)`` tuples with 0-based indices."""
        a = np.zeros((n, n), dtype=np.int8)
        w = np.zeros((n, n), dtype=np.int64)
        for e in edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise ValidationError(f"self-loop on node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"edge ({i}, {j}) outside 0..{n - 1}")
            if a[i, j]:
                raise ValidationError(f"duplicate edge ({i}, {j})")
            weight = int(e[2]) if len(e) > 2 else 1
            if weight <= 0:
                raise ValidationError(f"edge ({i}, {j}) has non-positive weight {weight}")
            a[i, j] = a[j, i] = 1
            w[i, j] = w[j, i] = weight
        return cls(a, w if weighted else None)

    @property
    def N(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def edges(self) -> list[tuple[int, int, int]]:
        """Upper-triangle edge list ``(i, j, weight)`` with i < j, 0-based."""
        iu, ju = np.nonzero(np.triu(self.adjacency, 1))
        if self.weights is None:
            return [(int(i), int(j), 1) for i, j in zip(iu, ju)]
        return [(int(i), int(j), int(self.weights[i, j])) for i, j in zip(iu, ju)]

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)


@dataclass(frozen=True)
class ModelParams:
    """The exponents (alpha, beta, gamma) expressed per time unit of ``unit_months`` months."""

    alpha: float
    beta: float
    gamma: float
    unit_months: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "unit_months"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v}")
        if self.alpha <= 0 or self.gamma <= 0:
            raise ValidationError("alpha and gamma must be positive")
        if self.beta < 0:
            raise ValidationError("beta must be non-negative")
        if self.unit_months <= 0:
            raise ValidationError("time unit must be positive")

    @classmethod
    def monthly(cls, alpha, beta, gamma) -> "ModelParams":
        return cls(float(alpha), float(beta), float(gamma), 1.0)

    @classmethod
    def decade(cls, alpha, beta, gamma) -> "ModelParams":
        return cls(float(alpha), float(beta), float(gamma), MONTHS_PER_DECADE)

    @classmethod
    def from_unit(cls, alpha, beta, gamma, time_unit: str) -> "ModelParams":
        units = {"month": 1.0, "decade": MONTHS_PER_DECADE}
        if time_unit not in units:
            raise ValidationError(f"time_unit must be 'month' or 'decade', got {time_unit!r}")
        return cls(float(alpha), float(beta), float(gamma), units[time_unit])

    @property
    def time_unit(self) -> str:
        if self.unit_months == 1.0:
            return "month"
        if self.unit_months == MONTHS_PER_DECADE:
            return "decade"
        return f"{self.unit_months:g} months"

    def to_monthly(self) -> "ModelParams":
        if self.unit_months == 1.0:
            return self
        u = self.unit_months
        return ModelParams(self.alpha / u, self.beta / u, self.gamma / u, 1.0)

    def to_decade(self) -> "ModelParams":
        m = self.to_monthly()
        f = MONTHS_PER_DECADE
        return ModelParams(m.alpha * f, m.beta * f, m.gamma * f, f)

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma, "time_unit": self.time_unit}


def rescale_params(params: ModelParams, factor: float) -> ModelParams:
    """Change the time unit by ``factor``; every exponent scales by the same factor.

    ``factor=1/120`` takes decade-scale parameters to monthly ones.
    """
    if not (math.isfinite(factor) and factor > 0):
        raise ValidationError(f"rescale factor must be positive, got {factor}")
    if factor == 1.0:
        return params
    return ModelParams(
        params.alpha * factor,
        params.beta * factor,
        params.gamma * factor,
        params.unit_months * factor,
    )


# --------------------------------------------------------------------------
# scalar / vectorized mappings
# --------------------------------------------------------------------------


def normalize_likelihood(L, risk=None):
    """Expert likelihood in [1, 5] -> vulnerability (L - 1) / 4."""
    arr = np.asarray(L, dtype=float)
    bad = ~((arr >= 1.0) & (arr <= 5.0))
    if np.any(bad):
        if arr.ndim == 0:
            where = f"risk {risk}" if risk is not None else "likelihood"
        else:
            where = f"risk index {int(np.flatnonzero(bad)[0])}"
        raise ValidationError(f"{where}: likelihood outside [1, 5]")
    p = (arr - 1.0) / 4.0
    return float(p) if arr.ndim == 0 else p


def _power_probability(p, exponent):
    """1 - (1 - p) ** exponent, exact at the endpoints and accurate for small exponents."""
    p = np.asarray(p, dtype=float)
    exponent = np.asarray(exponent, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValidationError("vulnerability outside [0, 1]")
    if np.any(exponent < 0):
        raise ValidationError("negative exponent")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(exponent * np.log1p(-p))
    # 0 ** 0 convention: a zero exponent never fires, even for p = 1
    out = np.where(exponent == 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def internal_probability(p, alpha_m):
    """Monthly probability of spontaneous materialization."""
    return _power_probability(p, alpha_m)


def continuation_probability(p, gamma_m):
    """Monthly probability that an active risk stays active."""
    return _power_probability(p, gamma_m)


def external_probability(p_target, beta_m, connected=1):
    """Monthly probability that one active neighbour activates the target.

    Depends only on the target's vulnerability; zero when not connected.
    """
    return _power_probability(p_target, np.asarray(beta_m, dtype=float) * np.asarray(connected))


@dataclass(frozen=True, eq=False)
class DerivedRates:
    """Monthly transition probabilities.

    ``p_ext[j, i]`` is the probability that an active ``j`` activates an
    inactive ``i`` in one step. ``vulnerability`` is kept when the rates were
    derived from expert data, ``None`` for hand-set rates.
    """

    p_int: np.ndarray
    p_con: np.ndarray
    p_ext: np.ndarray
    vulnerability: np.ndarray | None = None

    def __post_init__(self):
        p_int = np.asarray(self.p_int, dtype=float)
        p_con = np.asarray(self.p_con, dtype=float)
        p_ext = np.asarray(self.p_ext, dtype=float)
        n = p_int.shape[0]
        if p_int.shape != (n,) or p_con.shape != (n,) or p_ext.shape != (n, n):
            raise ValidationError("inconsistent rate dimensions")
        for name, arr in (("p_int", p_int), ("p_con", p_con), ("p_ext", p_ext)):
            if not np.all((arr >= 0.0) & (arr <= 1.0)):
                raise ValidationError(f"{name} must lie in [0, 1]")
        if np.any(np.diag(p_ext) != 0):
            raise ValidationError("p_ext must have a zero diagonal")
        object.__setattr__(self, "p_int", _frozen(p_int, float))
        object.__setattr__(self, "p_con", _frozen(p_con, float))
        object.__setattr__(self, "p_ext", _frozen(p_ext, float))
        if self.vulnerability is not None:
            object.__setattr__(self, "vulnerability", _frozen(self.vulnerability, float))

    @property
    def N(self) -> int:
        return self.p_int.shape[0]

    @property
    def p_rec(self) -> np.ndarray:
        return 1.0 - self.p_con

    @property
    def lambda_int(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return -np.log1p(-self.p_int)

    @property
    def lambda_rec(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return -np.log(self.p_con)

    @property
    def lambda_ext(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return -np.log1p(-self.p_ext)

    def with_internal(self, p_int) -> "DerivedRates":
        p_int = np.broadcast_to(np.asarray(p_int, dtype=float), (self.N,))
        return DerivedRates(p_int, self.p_con, self.p_ext, self.vulnerability)

    def activation_probabilities(self, prev) -> np.ndarray:
        """Probability that each risk is active next step given it is inactive now."""
        active = np.asarray(prev, dtype=bool)
        stay = (1.0 - self.p_int) * np.prod(1.0 - self.p_ext[active, :], axis=0)
        return 1.0 - stay

    def transition_probabilities(self, prev, i: int) -> tuple[float, float]:
        """(activation probability if inactive, continuation probability if active) for risk ``i``."""
        prev = check_state(prev, self.N)
        if not 0 <= i < self.N:
            raise ValidationError(f"risk index {i} outside 0..{self.N - 1}")
        active = prev.astype(bool)
        active[i] = False
        stay = (1.0 - self.p_int[i]) * np.prod(1.0 - self.p_ext[active, i])
        return float(1.0 - stay), float(self.p_con[i])


def check_state(state, n: int) -> np.ndarray:
    s = np.asarray(state)
    if s.shape != (n,):
        raise ValidationError(f"state vector must have length {n}")
    if not np.isin(s, (0, 1)).all():
        raise ValidationError("state entries must be 0 or 1")
    return s.astype(np.int8)


def derive_rates(catalog: RiskCatalog, graph: InfluenceGraph, params: ModelParams) -> DerivedRates:
    """Per-risk monthly probabilities from expert data and model exponents."""
    if catalog.N != graph.N:
        raise ValidationError(f"catalog has {catalog.N} risks but graph has {graph.N} nodes")
    return rates_from_vulnerability(catalog.vulnerabilities(), graph.adjacency, params)


def rates_from_vulnerability(p, adjacency, params: ModelParams) -> DerivedRates:
    m = params.to_monthly()
    p = np.asarray(p, dtype=float)
    a = np.asarray(adjacency) > 0
    p_int = internal_probability(p, m.alpha)
    p_con = continuation_probability(p, m.gamma)
    p_ext = np.where(a, external_probability(p, m.beta)[None, :], 0.0)
    return DerivedRates(np.atleast_1d(p_int), np.atleast_1d(p_con), p_ext, p)


def _parse_month(label: str) -> tuple[int, int]:
    try:
        y, m = label.split("-")
        if len(y) != 4 or len(m) != 2:
            raise ValueError
        y, m = int(y), int(m)
    except ValueError:
        raise ValidationError(f"bad month label {label!r}, expected YYYY-MM") from None
    if not 1 <= m <= 12:
        raise ValidationError(f"bad month label {label!r}")
    return y, m


def month_labels(start: str, count: int) -> tuple[str, ...]:
    """``count`` consecutive YYYY-MM labels beginning at ``start``."""
    y, m = _parse_month(start)
    base = y * 12 + (m - 1)
    return tuple(f"{(base + k) // 12:04d}-{(base + k) % 12 + 1:02d}" for k in range(count))


@dataclass(frozen=True, eq=False)
class HistoricalSeries:
    """Monthly binary activity: ``states[t, i]`` is 1 when risk i was active in ``months[t]``."""

    months: tuple[str, ...]
    states: np.ndarray

    def __post_init__(self):
        months = tuple(self.months)
        s = np.asarray(self.states)
        if s.ndim != 2 or s.shape[0] != len(months):
            raise ValidationError("states must be a T x N matrix with one row per month")
        if not np.isin(s, (0, 1)).all():
            raise ValidationError("state values must be 0 or 1")
        if months:
            expected = month_labels(months[0], len(months))
            for got, want in zip(months, expected):
                if got != want:
                    raise ValidationError(f"non-consecutive month {got!r} (expected {want!r})")
        object.__setattr__(self, "months", months)
        object.__setattr__(self, "states", _frozen(s, np.int8))

    @classmethod
    def from_states(cls, states, start: str = "2000-01") -> "HistoricalSeries":
        states = np.asarray(states)
        return cls(month_labels(start, states.shape[0]), states)

    @property
    def T(self) -> int:
        return self.states.shape[0]

    @property
    def N(self) -> int:
        return self.states.shape[1]
