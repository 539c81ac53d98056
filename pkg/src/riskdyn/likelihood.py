"""Log-likelihood of observed monthly activity, grid-scan fitting and model comparison.

The likelihood conditions on the first month and scores every later
transition with the one-step kernel. For the exponent-mapped models it splits
into an activation part that depends on (alpha, beta) and a continuation part
that depends on gamma alone; both only need counts per (risk, number of active
neighbours), so a whole 3-D grid costs little more than one evaluation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaincc

from .engine import simulate_activity
from .errors import ImpossibleTransitionError, NonNestedError, ValidationError
from .model import (
    MONTHS_PER_DECADE,
    DerivedRates,
    HistoricalSeries,
    InfluenceGraph,
    ModelParams,
    RiskCatalog,
    derive_rates,
    normalize_likelihood,
    rates_from_vulnerability,
)

VARIANTS = ("network", "disconnected", "expert_based", "uniform")
FREE_PARAMS = {
    "network": ("alpha", "beta", "gamma"),
    "disconnected": ("alpha", "gamma"),
    "expert_based": ("gamma",),
    "uniform": ("alpha", "beta", "gamma"),
}
# (full, restricted) pairs where the restricted model is a special case of the full one
NESTED = {
    ("network", "disconnected"),
    ("network", "expert_based"),
    ("disconnected", "expert_based"),
}
EXPERT_ALPHA_MONTHLY = 1.0 / MONTHS_PER_DECADE
# uniform variant: -ln(1 - p) == 1 for every risk, so exponents are the intensities
UNIFORM_VULNERABILITY = -math.expm1(-1.0)


def _log1mexp(x):
    """log(1 - exp(x)) for x <= 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > -math.log(2.0), np.log(-np.expm1(x)), np.log1p(-np.exp(x)))


def _check_history(history: HistoricalSeries, n: int):
    if history.N != n:
        raise ValidationError(f"history has {history.N} risks, model has {n}")
    if history.T < 2:
        raise ValidationError("history needs at least two months")


def log_likelihood(rates: DerivedRates, history: HistoricalSeries, strict: bool = False) -> float:
    """Sum over t >= 2 and all risks of ln P(S_i(t-1) -> S_i(t)).

    Returns ``-inf`` when some observed transition has probability zero;
    with ``strict=True`` raises :class:`ImpossibleTransitionError` naming it.
    """
    _check_history(history, rates.N)
    X = history.states.astype(np.float64)
    prev, nxt = X[:-1], X[1:]
    with np.errstate(divide="ignore"):
        log_ext = np.log1p(-rates.p_ext)
        log_int = np.log1p(-rates.p_int)
        log_con = np.log(rates.p_con)
        log_rec = np.log1p(-rates.p_con)
    certain = np.isneginf(log_ext)
    log_ext = np.where(certain, 0.0, log_ext)
    log_stay = prev @ log_ext + log_int[None, :]
    blocked = (prev @ certain.astype(np.float64)) > 0
    log_stay = np.where(blocked, -np.inf, log_stay)
    log_act = _log1mexp(log_stay)

    was_active = prev > 0
    now_active = nxt > 0
    terms = np.where(
        was_active,
        np.where(now_active, log_con[None, :], log_rec[None, :]),
        np.where(now_active, log_act, log_stay),
    )
    bad = np.isneginf(terms)
    if bad.any():
        if strict:
            t, i = np.argwhere(bad)[0]
            raise ImpossibleTransitionError(int(t) + 1, int(i))
        return -math.inf
    return float(terms.sum())


# --------------------------------------------------------------------------
# sufficient statistics
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TransitionCounts:
    """Transition counts of a history against a vulnerability vector and a graph.

    Activation cells are flattened over the observed (risk, k) pairs, k being
    the number of active neighbours in the previous month.
    """

    ell: np.ndarray  # ln(1 - p_i) per cell
    k: np.ndarray
    n_stay: np.ndarray
    n_act: np.ndarray
    ell_risk: np.ndarray  # ln(1 - p_i) per risk
    n_cont: np.ndarray
    n_rec: np.ndarray

    @property
    def activations(self) -> int:
        return int(self.n_act.sum())

    @property
    def active_months(self) -> int:
        return int(self.n_cont.sum() + self.n_rec.sum())


def transition_counts(vulnerability, adjacency, history: HistoricalSeries) -> TransitionCounts:
    p = np.asarray(vulnerability, dtype=float)
    n = p.shape[0]
    _check_history(history, n)
    X = history.states.astype(np.int64)
    prev, nxt = X[:-1], X[1:]
    k = prev @ (np.asarray(adjacency) > 0).astype(np.int64)
    inactive = prev == 0
    risk_idx = np.broadcast_to(np.arange(n), prev.shape)
    cell = risk_idx * n + k  # k <= n - 1
    stay_counts = np.bincount(cell[inactive & (nxt == 0)], minlength=n * n)
    act_counts = np.bincount(cell[inactive & (nxt == 1)], minlength=n * n)
    used = np.flatnonzero(stay_counts + act_counts)
    with np.errstate(divide="ignore"):
        ell_risk = np.log1p(-p)
    active = prev == 1
    return TransitionCounts(
        ell=ell_risk[used // n],
        k=(used % n).astype(float),
        n_stay=stay_counts[used].astype(float),
        n_act=act_counts[used].astype(float),
        ell_risk=ell_risk,
        n_cont=(active & (nxt == 1)).sum(axis=0).astype(float),
        n_rec=(active & (nxt == 0)).sum(axis=0).astype(float),
    )


def _weighted(counts, values):
    # 0 * -inf must count as 0: unobserved transitions carry no weight
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, counts * values, 0.0)


def activation_log_likelihood(stats: TransitionCounts, alphas, betas) -> np.ndarray:
    """Activation part of the log-likelihood on the (alpha, beta) grid, monthly exponents."""
    a = np.atleast_1d(np.asarray(alphas, dtype=float))[:, None, None]
    b = np.atleast_1d(np.asarray(betas, dtype=float))[None, :, None]
    expo = a + b * stats.k
    with np.errstate(invalid="ignore"):
        x = np.where(expo == 0, 0.0, expo * stats.ell)
    stay = _weighted(stats.n_stay, x)
    act = _weighted(stats.n_act, _log1mexp(x))
    return (stay + act).sum(axis=-1)


def continuation_log_likelihood(stats: TransitionCounts, gammas) -> np.ndarray:
    g = np.atleast_1d(np.asarray(gammas, dtype=float))[:, None]
    with np.errstate(invalid="ignore"):
        x = np.where(g == 0, 0.0, g * stats.ell_risk)
    return (_weighted(stats.n_cont, _log1mexp(x)) + _weighted(stats.n_rec, x)).sum(axis=-1)


def grid_log_likelihood(stats: TransitionCounts, alphas, betas, gammas) -> np.ndarray:
    """Full log-likelihood on the alpha x beta x gamma grid (monthly exponents)."""
    act = activation_log_likelihood(stats, alphas, betas)
    con = continuation_log_likelihood(stats, gammas)
    out = act[:, :, None] + con[None, None, :]
    return np.where(np.isnan(out), -np.inf, out)


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchConfig:
    """Feasible box (monthly scale) and scan schedule."""

    alpha_bounds: tuple[float, float] = (1e-5, 1.0)
    beta_bounds: tuple[float, float] = (0.0, 1.0)
    gamma_bounds: tuple[float, float] = (1e-3, 100.0)
    beta_floor: float = 1e-6  # smallest positive beta on the log axis; beta = 0 is always scanned
    coarse_points: int = 25
    refine_points: int = 9
    shrink: float = 4.0
    rtol: float = 1e-3
    max_refinements: int = 60
    keep_trace: bool = False

    def __post_init__(self):
        lo, hi = self.alpha_bounds
        if not 0 < lo < hi:
            raise ValidationError("alpha box must satisfy 0 < lo < hi")
        lo, hi = self.gamma_bounds
        if not 0 < lo < hi:
            raise ValidationError("gamma box must satisfy 0 < lo < hi")
        lo, hi = self.beta_bounds
        if not 0 <= lo < hi or not 0 < self.beta_floor < hi:
            raise ValidationError("beta box must satisfy 0 <= lo < hi and 0 < floor < hi")
        if self.coarse_points < 2 or self.refine_points < 3 or self.shrink <= 1:
            raise ValidationError("bad scan schedule")


@dataclass
class FitResult:
    variant: str
    params: ModelParams  # monthly
    log_likelihood: float
    boundary_hit: tuple[str, ...] = ()
    degenerate: str | None = None
    refinements: int = 0
    history_trace: list = field(default_factory=list)  # best LL after each pass
    trace: list | None = None  # (alpha, beta, gamma, LL) of every coarse cell

    @property
    def n_free(self) -> int:
        return len(FREE_PARAMS[self.variant])

    @property
    def decade_params(self) -> ModelParams:
        return self.params.to_decade()

    def as_dict(self) -> dict:
        d = self.decade_params
        return {
            "variant": self.variant,
            "free_parameters": list(FREE_PARAMS[self.variant]),
            "params_monthly": self.params.as_dict(),
            "params_decade": d.as_dict(),
            "log_likelihood": self.log_likelihood,
            "boundary_hit": list(self.boundary_hit),
            "degenerate": self.degenerate,
            "refinements": self.refinements,
        }


class _Axis:
    """One parameter axis scanned in log space; optionally also scans the value 0."""

    def __init__(self, name, lo, hi, fixed=None, with_zero=False):
        self.name = name
        self.fixed = fixed
        self.with_zero = with_zero
        self.lo = math.log(lo) if fixed is None else 0.0
        self.hi = math.log(hi) if fixed is None else 0.0
        self.center = None  # log coordinate of the best positive value
        self.half = None

    @property
    def free(self):
        return self.fixed is None

    def coarse(self, n):
        if not self.free:
            return np.array([self.fixed])
        m = n - 1 if self.with_zero else n
        vals = np.exp(np.linspace(self.lo, self.hi, m))
        self.half = (self.hi - self.lo) / (m - 1)
        return np.concatenate(([0.0], vals)) if self.with_zero else vals

    def refine(self, n, best_value):
        if not self.free:
            return np.array([self.fixed])
        # a zero optimum keeps refining next to the smallest positive value
        self.center = math.log(best_value) if best_value > 0 else self.lo
        u = np.linspace(self.center - self.half, self.center + self.half, n)
        u = np.unique(np.clip(u, self.lo, self.hi))
        vals = np.exp(u)
        if best_value > 0:
            vals = np.union1d(vals, [best_value])
        if self.with_zero:
            vals = np.concatenate(([0.0], vals))
        return vals

    def converged(self, rtol):
        return not self.free or self.half <= math.log1p(rtol)

    def at_boundary(self, value):
        if not self.free:
            return False
        if value == 0.0:
            return True
        u = math.log(value)
        tol = 1e-9 * max(1.0, abs(u))
        if self.with_zero:
            return u >= self.hi - tol
        return u <= self.lo + tol or u >= self.hi - tol


def _variant_setup(variant, catalog, graph):
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == "uniform":
        n = catalog.N
        return np.full(n, UNIFORM_VULNERABILITY), InfluenceGraph.complete(n).adjacency
    if catalog.N != graph.N:
        raise ValidationError(f"catalog has {catalog.N} risks but graph has {graph.N} nodes")
    return catalog.vulnerabilities(), graph.adjacency


def _axes(variant, search: SearchConfig):
    fixed_beta = 0.0 if variant in ("disconnected", "expert_based") else None
    fixed_alpha = EXPERT_ALPHA_MONTHLY if variant == "expert_based" else None
    beta_hi = search.beta_bounds[1]
    return (
        _Axis("alpha", *search.alpha_bounds, fixed=fixed_alpha),
        _Axis("beta", search.beta_floor, beta_hi, fixed=fixed_beta,
              with_zero=search.beta_bounds[0] == 0.0),
        _Axis("gamma", *search.gamma_bounds),
    )


def fit_counts(stats: TransitionCounts, variant: str = "network",
               search: SearchConfig | None = None) -> FitResult:
    """Grid scan with iterated refinement on precomputed transition counts."""
    search = search or SearchConfig()
    axes = _axes(variant, search)
    grids = [ax.coarse(search.coarse_points) for ax in axes]
    ll = grid_log_likelihood(stats, *grids)
    trace = None
    if search.keep_trace:
        A, B, G = np.meshgrid(*grids, indexing="ij")
        trace = list(zip(A.ravel().tolist(), B.ravel().tolist(), G.ravel().tolist(), ll.ravel().tolist()))
    idx = np.unravel_index(int(np.argmax(ll)), ll.shape)
    best = [float(g[i]) for g, i in zip(grids, idx)]
    best_ll = float(ll[idx])
    progress = [best_ll]
    passes = 0
    while not all(ax.converged(search.rtol) for ax in axes) and passes < search.max_refinements:
        grids = [ax.refine(search.refine_points, b) for ax, b in zip(axes, best)]
        ll = grid_log_likelihood(stats, *grids)
        idx = np.unravel_index(int(np.argmax(ll)), ll.shape)
        if ll[idx] > best_ll:
            best = [float(g[i]) for g, i in zip(grids, idx)]
            best_ll = float(ll[idx])
        for ax in axes:
            if ax.free:
                ax.half /= search.shrink
        progress.append(best_ll)
        passes += 1

    degenerate = None
    if stats.activations == 0:
        degenerate = "no activations observed"
    elif stats.active_months == 0:
        degenerate = "no active months observed"
    boundary = tuple(ax.name for ax, b in zip(axes, best) if ax.at_boundary(b))
    if boundary:
        warnings.warn(f"{variant} fit on search-box boundary for {', '.join(boundary)}")
    return FitResult(
        variant=variant,
        params=ModelParams.monthly(*best),
        log_likelihood=best_ll,
        boundary_hit=boundary,
        degenerate=degenerate,
        refinements=passes,
        history_trace=progress,
        trace=trace,
    )


def fit(catalog: RiskCatalog, graph: InfluenceGraph, history: HistoricalSeries,
        variant: str = "network", search: SearchConfig | None = None) -> FitResult:
    """Maximum-likelihood parameters of ``variant`` for ``history``.

    For the uniform variant the fitted ``alpha``, ``beta``, ``gamma`` are the
    shared monthly intensities of internal activation, influence and
    continuation; the expert likelihoods are ignored and every pair of risks
    is treated as connected.
    """
    p, adjacency = _variant_setup(variant, catalog, graph)
    stats = transition_counts(p, adjacency, history)
    return fit_counts(stats, variant, search)


def variant_rates(catalog: RiskCatalog, graph: InfluenceGraph, result: FitResult) -> DerivedRates:
    """Transition probabilities implied by a fitted variant."""
    p, adjacency = _variant_setup(result.variant, catalog, graph)
    return rates_from_vulnerability(p, adjacency, result.params)


def likelihood_surface(catalog, graph, history, fixed: dict, x_values, y_values,
                       variant: str = "network", time_unit: str = "month"):
    """Log-likelihood over a 2-D grid of the two parameters not pinned in ``fixed``.

    ``fixed`` holds exactly one of alpha/beta/gamma. Values are in
    ``time_unit`` units. Returns ``(x_name, y_name, rows)`` with rows
    ``(x, y, ll)`` in x-major order.
    """
    if len(fixed) != 1:
        raise ValidationError("pin exactly one parameter")
    (pinned, value), = fixed.items()
    names = ["alpha", "beta", "gamma"]
    if pinned not in names:
        raise ValidationError(f"unknown parameter {pinned!r}")
    free = [n for n in names if n != pinned]
    scale = {"month": 1.0, "decade": MONTHS_PER_DECADE}[time_unit]
    p, adjacency = _variant_setup(variant, catalog, graph)
    stats = transition_counts(p, adjacency, history)
    xs = np.asarray(x_values, dtype=float)
    ys = np.asarray(y_values, dtype=float)
    grids = {pinned: np.array([float(value)]) / scale, free[0]: xs / scale, free[1]: ys / scale}
    ll = grid_log_likelihood(stats, grids["alpha"], grids["beta"], grids["gamma"])
    order = [names.index(free[0]), names.index(free[1]), names.index(pinned)]
    table = np.transpose(ll, order)[:, :, 0]
    rows = [(float(x), float(y), float(table[a, b])) for a, x in enumerate(xs) for b, y in enumerate(ys)]
    return free[0], free[1], rows


# --------------------------------------------------------------------------
# model comparison
# --------------------------------------------------------------------------


@dataclass
class LRTestResult:
    statistic: float
    degrees_of_freedom: int
    p_value: float


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution via the regularized incomplete gamma function."""
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def lr_statistic(ll_full: float, ll_restricted: float, df: int) -> LRTestResult:
    if df < 1:
        raise ValidationError("degrees of freedom must be >= 1")
    d = 2.0 * (ll_full - ll_restricted)
    if d < 0:
        warnings.warn(
            f"restricted model fits better (D={d:.3g}); reporting D=0, p=1", RuntimeWarning
        )
        d = 0.0
    return LRTestResult(d, int(df), chi2_sf(d, df))


def lr_test(full: FitResult, restricted: FitResult) -> LRTestResult:
    if (full.variant, restricted.variant) not in NESTED:
        raise NonNestedError(f"{restricted.variant} is not nested in {full.variant}")
    return lr_statistic(full.log_likelihood, restricted.log_likelihood,
                        full.n_free - restricted.n_free)


def compare(catalog, graph, history, variants=VARIANTS, search: SearchConfig | None = None):
    """Fit each variant and test every pair.

    Returns ``(fits, rows)``; each row is a dict with the pair, D, df and the
    p-value (``None`` for non-nested pairs, which are reported descriptively).
    """
    fits = {v: fit(catalog, graph, history, v, search) for v in variants}
    rows = []
    for i, a in enumerate(variants):
        for b in variants[i + 1:]:
            full, restricted = (a, b) if fits[a].n_free >= fits[b].n_free else (b, a)
            if (full, restricted) in NESTED:
                res = lr_test(fits[full], fits[restricted])
                rows.append({"full": full, "restricted": restricted, "nested": True,
                             "D": res.statistic, "df": res.degrees_of_freedom, "p_value": res.p_value})
            else:
                d = 2.0 * (fits[full].log_likelihood - fits[restricted].log_likelihood)
                rows.append({"full": full, "restricted": restricted, "nested": False, "D": d,
                             "df": abs(fits[full].n_free - fits[restricted].n_free), "p_value": None})
    return fits, rows


# --------------------------------------------------------------------------
# robustness to noisy expert likelihoods
# --------------------------------------------------------------------------


@dataclass
class PerturbationReport:
    K: int
    seed: int
    base: FitResult
    fits: list
    perturbed_likelihoods: list
    base_activity: np.ndarray
    activities: list
    param_deviation: dict
    activity_deviation: float
    monthly_activity_deviation: float
    log_likelihood_deviation: float

    def as_dict(self) -> dict:
        return {
            "K": self.K,
            "seed": self.seed,
            "base": self.base.as_dict(),
            "sets": [
                {"likelihoods": list(map(float, L)), "fit": f.as_dict(),
                 "mean_activity": float(a[1:].mean())}
                for L, f, a in zip(self.perturbed_likelihoods, self.fits, self.activities)
            ],
            "base_mean_activity": float(self.base_activity[1:].mean()),
            "max_relative_deviation": {
                **{k: v for k, v in self.param_deviation.items()},
                "mean_activity": self.activity_deviation,
                "monthly_activity": self.monthly_activity_deviation,
                "log_likelihood": self.log_likelihood_deviation,
            },
        }


def _rel(a, b):
    if b == 0:
        return abs(a - b)
    return abs(a - b) / abs(b)


def perturbation_study(catalog: RiskCatalog, graph: InfluenceGraph, history: HistoricalSeries,
                       K: int, seed: int, search: SearchConfig | None = None,
                       replicas: int = 1000, workers=None) -> PerturbationReport:
    """Refit the network model on K noisy copies of the expert likelihoods.

    Each likelihood is redrawn uniformly within one standard deviation of its
    mean (clamped to [1, 5]). Every model's monthly activity is simulated from
    the first observed month with the same replica streams, so differences
    reflect the parameters only.
    """
    if K < 1:
        raise ValidationError("K must be >= 1")
    rng = np.random.default_rng(seed)
    base = fit(catalog, graph, history, "network", search)
    init = history.states[0]
    steps = history.T - 1

    def activity(cat, res):
        return simulate_activity(derive_rates(cat, graph, res.params), init, steps, replicas,
                                 seed, workers=workers)

    base_act = activity(catalog, base)
    L, sd = catalog.likelihoods, catalog.stddevs
    fits, likes, acts = [], [], []
    for _ in range(K):
        u = rng.uniform(-1.0, 1.0, size=L.shape)
        Lp = np.clip(L + sd * u, 1.0, 5.0)
        cat = catalog.with_likelihoods(Lp)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fit(cat, graph, history, "network", search)
        fits.append(res)
        likes.append(Lp)
        acts.append(activity(cat, res))

    names = ("alpha", "beta", "gamma")
    param_dev = {n: max(_rel(getattr(f.params, n), getattr(base.params, n)) for f in fits) for n in names}
    base_mean = base_act[1:].mean()
    act_dev = max(_rel(a[1:].mean(), base_mean) for a in acts)
    pos = base_act > 0
    monthly_dev = max(float(np.max(np.abs(a[pos] - base_act[pos]) / base_act[pos])) if pos.any() else 0.0
                      for a in acts)
    ll_dev = max(_rel(f.log_likelihood, base.log_likelihood) for f in fits)
    return PerturbationReport(K, seed, base, fits, likes, base_act, acts, param_dev, float(act_dev),
                              float(monthly_dev), float(ll_dev))
