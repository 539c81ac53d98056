"""Monte-Carlo simulation of the monthly Bernoulli dynamics.

Every replica owns one counter-based stream (see :mod:`riskdyn.rng`) and is
advanced fully synchronously: all next states are drawn from the previous
state vector, N uniforms per step in ascending risk order. Replicas are split
into contiguous chunks that run on a thread pool (the kernels release the GIL);
each chunk writes only its own rows and aggregation happens afterwards in
replica order, so results do not depend on the number of workers.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import InsufficientDataError, ValidationError
from .model import DerivedRates, InfluenceGraph, ModelParams, RiskCatalog, check_state, derive_rates
from .rng import seed_to_uint64, stream_key, uniform_at


def resolve_workers(workers=None) -> int:
    if workers is None:
        env = os.environ.get("RISKDYN_WORKERS")
        workers = int(env) if env else (os.cpu_count() or 1)
    workers = int(workers)
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    return workers


def _edge_lists(rates: DerivedRates):
    """CSR lists of outgoing influence: for source j, targets i with p_ext[j, i] > 0."""
    p_ext = rates.p_ext
    src, dst = np.nonzero(p_ext > 0)
    indptr = np.zeros(rates.N + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=rates.N), out=indptr[1:])
    comp = 1.0 - p_ext[src, dst]
    return indptr, dst.astype(np.int64), comp.astype(np.float64)


def _run_chunks(fn, replicas: int, workers: int):
    workers = min(workers, replicas)
    if workers <= 1:
        fn(0, replicas)
        return
    n_chunks = workers * 4
    bounds = np.linspace(0, replicas, n_chunks + 1).astype(np.int64)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(fn, int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
        ]
        for f in futures:
            f.result()


# --------------------------------------------------------------------------
# compiled kernels
# --------------------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _advance(prev, nxt, stay, p_int, p_con, indptr, indices, comp, key, counter):
    n = prev.shape[0]
    for i in range(n):
        stay[i] = 1.0 - p_int[i]
    for j in range(n):
        if prev[j]:
            for idx in range(indptr[j], indptr[j + 1]):
                stay[indices[idx]] *= comp[idx]
    n_active = 0
    for i in range(n):
        u = uniform_at(key, counter + np.uint64(i))
        if prev[i]:
            s = u < p_con[i]
        else:
            s = u < 1.0 - stay[i]
        nxt[i] = 1 if s else 0
        if s:
            n_active += 1
    return n_active


@nb.njit(cache=True, nogil=True)
def _persistence_kernel(p_int, p_con, indptr, indices, comp, init, steps, burn_in, seed,
                        r0, r1, active_counts, hist):
    n = p_int.shape[0]
    nn = np.uint64(n)
    prev = np.empty(n, np.int8)
    nxt = np.empty(n, np.int8)
    stay = np.empty(n, np.float64)
    for r in range(r0, r1):
        key = stream_key(seed, np.uint64(r))
        for i in range(n):
            prev[i] = init[i]
        for t in range(1, steps + 1):
            k = _advance(prev, nxt, stay, p_int, p_con, indptr, indices, comp, key,
                         np.uint64(t - 1) * nn)
            if t > burn_in:
                hist[r, k] += 1
                for i in range(n):
                    active_counts[r, i] += nxt[i]
            prev, nxt = nxt, prev


@nb.njit(cache=True, nogil=True)
def _activity_kernel(p_int, p_con, indptr, indices, comp, init, steps, seed, r0, r1, activity):
    n = p_int.shape[0]
    nn = np.uint64(n)
    prev = np.empty(n, np.int8)
    nxt = np.empty(n, np.int8)
    stay = np.empty(n, np.float64)
    n0 = 0
    for i in range(n):
        n0 += init[i]
    for r in range(r0, r1):
        key = stream_key(seed, np.uint64(r))
        for i in range(n):
            prev[i] = init[i]
        activity[r, 0] = n0
        for t in range(1, steps + 1):
            activity[r, t] = _advance(prev, nxt, stay, p_int, p_con, indptr, indices, comp, key,
                                      np.uint64(t - 1) * nn)
            prev, nxt = nxt, prev


@nb.njit(cache=True, nogil=True)
def _record_kernel(p_int, p_con, indptr, indices, comp, init, steps, seed, replica, out):
    n = p_int.shape[0]
    nn = np.uint64(n)
    stay = np.empty(n, np.float64)
    key = stream_key(seed, np.uint64(replica))
    for i in range(n):
        out[0, i] = init[i]
    for t in range(1, steps + 1):
        _advance(out[t - 1], out[t], stay, p_int, p_con, indptr, indices, comp, key,
                 np.uint64(t - 1) * nn)


@nb.njit(cache=True, nogil=True)
def _cascade_kernel(p_int, p_con, indptr, indices, comp, initiator, max_steps, seed,
                    r0, r1, ext_time, active_steps):
    n = p_int.shape[0]
    nn = np.uint64(n)
    prev = np.empty(n, np.int8)
    nxt = np.empty(n, np.int8)
    stay = np.empty(n, np.float64)
    for r in range(r0, r1):
        key = stream_key(seed, np.uint64(r))
        for i in range(n):
            prev[i] = 0
        prev[initiator] = 1
        active_steps[r, initiator] += 1
        ext_time[r] = max_steps + 1
        for t in range(1, max_steps + 1):
            k = _advance(prev, nxt, stay, p_int, p_con, indptr, indices, comp, key,
                         np.uint64(t - 1) * nn)
            if k == 0:
                ext_time[r] = t
                break
            for i in range(n):
                active_steps[r, i] += nxt[i]
            prev, nxt = nxt, prev


@nb.njit(cache=True, nogil=True)
def _target_kernel(p_int, p_con, indptr, indices, comp, initiator, target, max_steps, seed,
                   r0, r1, outcome, stop_time):
    n = p_int.shape[0]
    nn = np.uint64(n)
    prev = np.empty(n, np.int8)
    nxt = np.empty(n, np.int8)
    stay = np.empty(n, np.float64)
    for r in range(r0, r1):
        key = stream_key(seed, np.uint64(r))
        for i in range(n):
            prev[i] = 0
        prev[initiator] = 1
        outcome[r] = -1
        stop_time[r] = max_steps
        for t in range(1, max_steps + 1):
            k = _advance(prev, nxt, stay, p_int, p_con, indptr, indices, comp, key,
                         np.uint64(t - 1) * nn)
            if nxt[target]:
                outcome[r] = 1
                stop_time[r] = t
                break
            if k == 0:
                outcome[r] = 0
                stop_time[r] = t
                break
            prev, nxt = nxt, prev


# --------------------------------------------------------------------------
# single-step API
# --------------------------------------------------------------------------


class ReplicaStream:
    """Counter-based stream of one replica; ``counter`` advances by N per step."""

    def __init__(self, master_seed: int, replica: int = 0):
        self.master_seed = int(master_seed)
        self.replica = int(replica)
        self.key = stream_key(seed_to_uint64(master_seed), np.uint64(replica))
        self.counter = 0


def step(state, rates: DerivedRates, stream: ReplicaStream) -> np.ndarray:
    """Draw the next state vector synchronously from ``state``."""
    prev = check_state(state, rates.N)
    indptr, indices, comp = _edge_lists(rates)
    nxt = np.empty(rates.N, np.int8)
    stay = np.empty(rates.N, np.float64)
    _advance(prev, nxt, stay, rates.p_int, rates.p_con, indptr, indices, comp,
             stream.key, np.uint64(stream.counter))
    stream.counter += rates.N
    return nxt


def simulate_history(rates: DerivedRates, initial_state, steps: int, seed: int,
                     replica: int = 0) -> np.ndarray:
    """One trajectory as a (steps + 1) x N int8 matrix; row 0 is ``initial_state``."""
    init = check_state(initial_state, rates.N)
    indptr, indices, comp = _edge_lists(rates)
    out = np.zeros((steps + 1, rates.N), np.int8)
    _record_kernel(rates.p_int, rates.p_con, indptr, indices, comp, init, int(steps),
                   seed_to_uint64(seed), int(replica), out)
    return out


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    steps: int = 2200
    burn_in: int = 200
    replicas: int = 10_000
    master_seed: int = 0
    initial_state: np.ndarray | None = None

    def __post_init__(self):
        if self.replicas < 1:
            raise ValidationError("replicas must be >= 1")
        if not 0 <= self.burn_in < self.steps:
            raise ValidationError("need 0 <= burn_in < steps")

    def initial(self, n: int) -> np.ndarray:
        if self.initial_state is None:
            return np.zeros(n, np.int8)
        return check_state(self.initial_state, n)


@dataclass
class PersistenceReport:
    fractions: np.ndarray
    fraction_se: np.ndarray
    mean_activity: float
    mean_activity_se: float
    activity_std: float
    activity_histogram: np.ndarray
    percentiles: dict
    replicas: int
    measured_steps: int

    def percentile(self, q: float) -> int:
        return histogram_percentile(self.activity_histogram, q)


def histogram_percentile(hist, q: float) -> int:
    """Smallest activity level k whose cumulative pooled frequency reaches q percent."""
    hist = np.asarray(hist, dtype=float)
    cdf = np.cumsum(hist) / hist.sum()
    return int(np.searchsorted(cdf, q / 100.0 - 1e-12))


def simulate_persistence(rates: DerivedRates, config: SimConfig, percentiles=(5, 25, 50, 75, 95),
                         workers=None) -> PersistenceReport:
    n = rates.N
    init = config.initial(n)
    indptr, indices, comp = _edge_lists(rates)
    R = config.replicas
    counts = np.zeros((R, n), np.int64)
    hist = np.zeros((R, n + 1), np.int64)
    seed = seed_to_uint64(config.master_seed)

    def run(lo, hi):
        _persistence_kernel(rates.p_int, rates.p_con, indptr, indices, comp, init,
                            config.steps, config.burn_in, seed, lo, hi, counts, hist)

    _run_chunks(run, R, resolve_workers(workers))
    measured = config.steps - config.burn_in
    per_rep = counts / measured
    fractions = per_rep.mean(axis=0)
    se = per_rep.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.full(n, np.nan)
    rep_activity = per_rep.sum(axis=1)
    pooled = hist.sum(axis=0)
    levels = np.arange(n + 1)
    mean = float(fractions.sum())
    var = float((pooled * (levels - mean) ** 2).sum() / pooled.sum())
    return PersistenceReport(
        fractions=fractions,
        fraction_se=se,
        mean_activity=mean,
        mean_activity_se=float(rep_activity.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan"),
        activity_std=math.sqrt(var),
        activity_histogram=pooled,
        percentiles={q: histogram_percentile(pooled, q) for q in percentiles},
        replicas=R,
        measured_steps=measured,
    )


def run_persistence(catalog: RiskCatalog, graph: InfluenceGraph, params: ModelParams,
                    config: SimConfig, workers=None, **kw) -> PersistenceReport:
    return simulate_persistence(derive_rates(catalog, graph, params), config, workers=workers, **kw)


def simulate_activity(rates: DerivedRates, initial_state, steps: int, replicas: int, seed: int,
                      workers=None) -> np.ndarray:
    """Mean number of active risks at each step 0..steps, averaged over replicas."""
    init = check_state(initial_state, rates.N)
    indptr, indices, comp = _edge_lists(rates)
    activity = np.zeros((replicas, steps + 1), np.int32)
    s = seed_to_uint64(seed)

    def run(lo, hi):
        _activity_kernel(rates.p_int, rates.p_con, indptr, indices, comp, init, int(steps), s,
                         lo, hi, activity)

    _run_chunks(run, replicas, resolve_workers(workers))
    return activity.mean(axis=0)


# --------------------------------------------------------------------------
# cascades
# --------------------------------------------------------------------------


@dataclass
class SurvivalCurve:
    times: np.ndarray
    survival: np.ndarray
    survivors: np.ndarray
    replicas: int


@dataclass
class DecayFit:
    rate: float
    r_squared: float
    window: tuple[int, int]
    flag: str | None = None


@dataclass
class CascadeReport:
    initiator: int
    curve: SurvivalCurve
    lifetime_fraction: np.ndarray
    lifetime_fraction_se: np.ndarray
    mean_lifetime: float
    censored: int
    decay: DecayFit | None


def fit_exponential_decay(curve: SurvivalCurve, window=None, min_survivors: int = 30) -> DecayFit:
    """Least-squares line through (t, ln survival) over a tail window.

    Without an explicit ``window`` the fit runs from the first time the
    survival drops to 1/2 up to the last time at least ``min_survivors``
    replicas are still alive.
    """
    t = np.asarray(curve.times)
    s = np.asarray(curve.survival, dtype=float)
    if window is None:
        alive = np.flatnonzero(np.asarray(curve.survivors) >= min_survivors)
        hi = int(t[alive[-1]]) if alive.size else int(t[-1])
        half = np.flatnonzero(s <= 0.5)
        lo = int(t[half[0]]) if half.size and t[half[0]] < hi else int(t[0])
        window = (lo, hi)
    lo, hi = window
    sel = (t >= lo) & (t <= hi) & (s > 0)
    if sel.sum() < 3:
        raise InsufficientDataError(f"need >= 3 positive survival points in window {window}")
    x = t[sel].astype(float)
    y = np.log(s[sel])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return DecayFit(0.0, float("nan"), (int(lo), int(hi)), flag="no_decay")
    r2 = 1.0 - float((resid**2).sum()) / ss_tot
    return DecayFit(float(-slope), r2, (int(lo), int(hi)))


def _check_index(i, n, what):
    if not 0 <= int(i) < n:
        raise ValidationError(f"{what} index {i} outside 0..{n - 1}")
    return int(i)


def simulate_cascade(rates: DerivedRates, initiator: int, max_steps: int, replicas: int,
                     seed: int, workers=None, window=None) -> CascadeReport:
    """Cascades from a single active risk with internal activation switched off."""
    n = rates.N
    initiator = _check_index(initiator, n, "initiator")
    r = rates.with_internal(0.0)
    indptr, indices, comp = _edge_lists(r)
    ext_time = np.zeros(replicas, np.int64)
    active_steps = np.zeros((replicas, n), np.int64)
    s = seed_to_uint64(seed)

    def run(lo, hi):
        _cascade_kernel(r.p_int, r.p_con, indptr, indices, comp, initiator, int(max_steps), s,
                        lo, hi, ext_time, active_steps)

    _run_chunks(run, replicas, resolve_workers(workers))
    times = np.arange(max_steps + 1)
    died = np.bincount(np.minimum(ext_time, max_steps + 1), minlength=max_steps + 2)
    survivors = replicas - np.cumsum(died)[: max_steps + 1]
    curve = SurvivalCurve(times, survivors / replicas, survivors, replicas)
    lifetime = ext_time.astype(float)  # number of states with at least one active risk
    per_rep = active_steps / lifetime[:, None]
    try:
        decay = fit_exponential_decay(curve, window)
    except InsufficientDataError:
        decay = None
    censored = int((ext_time > max_steps).sum())
    if censored:
        warnings.warn(f"{censored} of {replicas} cascades still alive after {max_steps} steps")
    return CascadeReport(
        initiator=initiator,
        curve=curve,
        lifetime_fraction=per_rep.mean(axis=0),
        lifetime_fraction_se=per_rep.std(axis=0, ddof=1) / math.sqrt(replicas)
        if replicas > 1 else np.full(n, np.nan),
        mean_lifetime=float(lifetime.mean()),
        censored=censored,
        decay=decay,
    )


def run_cascade(catalog, graph, params, initiator, max_steps, replicas, seed, workers=None,
                window=None) -> CascadeReport:
    return simulate_cascade(derive_rates(catalog, graph, params), initiator, max_steps, replicas,
                            seed, workers=workers, window=window)


@dataclass
class TargetHitReport:
    initiator: int
    target: int
    probability: float
    replicas: int
    standard_error: float
    censored: int = 0


def simulate_target_hit(rates: DerivedRates, initiator: int, target: int, replicas: int, seed: int,
                        max_steps: int = 100_000, workers=None) -> TargetHitReport:
    """Probability that a cascade from ``initiator`` ever activates ``target``."""
    n = rates.N
    initiator = _check_index(initiator, n, "initiator")
    target = _check_index(target, n, "target")
    if initiator == target:
        raise ValidationError("initiator and target must differ")
    r = rates.with_internal(0.0)
    indptr, indices, comp = _edge_lists(r)
    outcome = np.zeros(replicas, np.int8)
    stop = np.zeros(replicas, np.int64)
    s = seed_to_uint64(seed)

    def run(lo, hi):
        _target_kernel(r.p_int, r.p_con, indptr, indices, comp, initiator, target, int(max_steps),
                       s, lo, hi, outcome, stop)

    _run_chunks(run, replicas, resolve_workers(workers))
    hits = int((outcome == 1).sum())
    censored = int((outcome == -1).sum())
    if censored:
        warnings.warn(f"{censored} of {replicas} replicas undecided after {max_steps} steps")
    p = hits / replicas
    return TargetHitReport(initiator, target, p, replicas, math.sqrt(p * (1 - p) / replicas), censored)


def run_target_hit(catalog, graph, params, initiator, target, replicas, seed, workers=None,
                   max_steps: int = 100_000) -> TargetHitReport:
    return simulate_target_hit(derive_rates(catalog, graph, params), initiator, target, replicas,
                               seed, max_steps=max_steps, workers=workers)
