"""Continuous-time mean-field picture of the network dynamics.

``s_i(t)`` is the probability that risk i is active, driven by

    ds_i/dt = lam_int_i (1 - s_i) - lam_rec_i s_i + (1 - s_i) sum_j lam_ext_ji s_j

with intensities taken from the monthly probabilities as
``lam = -ln(1 - p)`` and ``lam_rec = -ln(p_con)``. Time is in months.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ParameterizationError, StepSizeError, ValidationError
from .model import DerivedRates

EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Intensities:
    lam_int: np.ndarray
    lam_rec: np.ndarray
    lam_ext: np.ndarray  # [source, target]

    def __post_init__(self):
        for name in ("lam_int", "lam_rec", "lam_ext"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValidationError(
                    f"{name} must be finite and non-negative (a probability of exactly 1 has no intensity)"
                )
            object.__setattr__(self, name, v)

    @classmethod
    def from_rates(cls, rates: DerivedRates) -> "Intensities":
        return cls(rates.lambda_int, rates.lambda_rec, rates.lambda_ext)

    @property
    def N(self) -> int:
        return self.lam_int.shape[0]

    def rhs(self, s: np.ndarray) -> np.ndarray:
        pressure = s @ self.lam_ext
        return self.lam_int * (1.0 - s) - self.lam_rec * s + (1.0 - s) * pressure


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # len(times) x N
    dt: float

    @property
    def activity(self) -> np.ndarray:
        return self.states.sum(axis=1)


def _rk4(f, s0, dt, n_steps):
    out = np.empty((n_steps + 1, s0.shape[0]))
    out[0] = s = s0
    for k in range(n_steps):
        k1 = f(s)
        k2 = f(s + 0.5 * dt * k1)
        k3 = f(s + 0.5 * dt * k2)
        k4 = f(s + dt * k3)
        s = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = s
    return out


def integrate_ode(intensities: Intensities, s0, dt: float = 0.1, T: float = 200.0,
                  max_halvings: int = 8) -> Trajectory:
    """Classical RK4 on a uniform grid of step ``dt`` up to time ``T``.

    The step is halved whenever the trajectory leaves [-1e-9, 1 + 1e-9];
    the returned grid keeps the requested ``dt`` spacing.
    """
    if dt <= 0 or T < 0:
        raise ValidationError("need dt > 0 and T >= 0")
    s0 = np.asarray(s0, dtype=float)
    if s0.shape != (intensities.N,) or np.any((s0 < 0) | (s0 > 1)):
        raise ValidationError("initial state must be a length-N vector in [0, 1]")
    n_steps = int(round(T / dt))
    for h in range(max_halvings + 1):
        sub = 2**h
        states = _rk4(intensities.rhs, s0, dt / sub, n_steps * sub)[::sub]
        if np.all(np.isfinite(states)) and states.min() >= -EPS and states.max() <= 1 + EPS:
            return Trajectory(np.arange(n_steps + 1) * dt, states, dt / sub)
    raise StepSizeError(f"trajectory left [0, 1] even with dt={dt / sub:g}")


def stationary_point(intensities: Intensities, tol: float = 1e-12, start=None,
                     damping: float = 0.5, max_iter: int = 10_000) -> np.ndarray:
    """The fixed point of the mean-field equations inside [0, 1]^N.

    Damped iteration of ``s = (lam_int + P) / (lam_int + lam_rec + P)`` with
    ``P_i = sum_j lam_ext_ji s_j``.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    n = intensities.N
    s = np.zeros(n) if start is None else np.asarray(start, dtype=float).copy()
    lam_int, lam_rec = intensities.lam_int, intensities.lam_rec
    for _ in range(max_iter):
        pressure = s @ intensities.lam_ext
        num = lam_int + pressure
        den = num + lam_rec
        target = np.divide(num, den, out=np.zeros(n), where=den > 0)
        # a risk with no inflow and no recovery keeps its value
        target = np.where(den > 0, target, s)
        new = (1.0 - damping) * s + damping * target
        if np.max(np.abs(new - s)) < tol:
            s = new
            break
        s = new
    else:
        raise NumericalError(
            f"fixed point not reached in {max_iter} iterations (residual {np.abs(intensities.rhs(s)).max():.3g})"
        )
    residual = np.abs(intensities.rhs(s)).max()
    scale = 1.0 + float(np.max(lam_int + lam_rec + intensities.lam_ext.sum(axis=0)))
    if residual > 10 * tol * scale:
        raise NumericalError(f"fixed point residual {residual:.3g} exceeds tolerance")
    return s


@dataclass(frozen=True)
class HomogeneousConfig:
    """Identical intensities on a complete graph of ``n`` nodes."""

    lambda_s: float
    lambda_r: float
    lambda_e: float
    n: int
    s0: float = 0.0

    def __post_init__(self):
        if min(self.lambda_s, self.lambda_r, self.lambda_e) < 0 or self.n < 1:
            raise ValidationError("intensities must be non-negative and n >= 1")
        if not 0.0 <= self.s0 <= 1.0:
            raise ValidationError("s0 must lie in [0, 1]")

    @property
    def lambda_E(self) -> float:
        return (self.n - 1) * self.lambda_e

    @property
    def a(self) -> float:
        return self.lambda_s + self.lambda_r - self.lambda_E

    @property
    def b(self) -> float:
        return math.sqrt(self.a**2 + 4.0 * self.lambda_s * self.lambda_E)

    def intensities(self) -> Intensities:
        n = self.n
        return Intensities(
            np.full(n, self.lambda_s),
            np.full(n, self.lambda_r),
            self.lambda_e * (np.ones((n, n)) - np.eye(n)),
        )


def homogeneous_asymptote(cfg: HomogeneousConfig) -> float:
    """Limit of s(t) from ``cfg.s0``: the stable root in [0, 1] of
    lambda_s (1 - s) - lambda_r s + lambda_E s (1 - s) = 0.

    Without a source term the empty state s = 0 is an equilibrium, so a
    trajectory that starts there stays at 0 even above threshold.
    """
    if cfg.lambda_s == 0 and cfg.s0 == 0:
        return 0.0
    lE = cfg.lambda_E
    if lE == 0:
        tot = cfg.lambda_s + cfg.lambda_r
        return cfg.lambda_s / tot if tot > 0 else cfg.s0
    a, b = cfg.a, cfg.b
    # 2 lambda_s / (a + b) equals (b - a) / (2 lambda_E) without cancellation when a > 0
    if a > 0:
        return 2.0 * cfg.lambda_s / (a + b)
    return (b - a) / (2.0 * lE)


def homogeneous_closed_form(cfg: HomogeneousConfig, t):
    """Exact s(t) for the homogeneous complete-graph system.

    With u = 2 lambda_E s + a the equation becomes du/dt = (b^2 - u^2) / 2, hence
    s(t) = (b tanh(b t / 2 + artanh(u0 / b)) - a) / (2 lambda_E).
    """
    t = np.asarray(t, dtype=float)
    lE = cfg.lambda_E
    if lE == 0:
        tot = cfg.lambda_s + cfg.lambda_r
        if tot == 0:
            return np.full_like(t, cfg.s0) if t.ndim else cfg.s0
        s_inf = cfg.lambda_s / tot
        out = s_inf + (cfg.s0 - s_inf) * np.exp(-tot * t)
        return out if t.ndim else float(out)
    if cfg.lambda_s == 0 and cfg.s0 == 0:
        return np.zeros_like(t) if t.ndim else 0.0
    a, b = cfg.a, cfg.b
    z = (2.0 * lE * cfg.s0 + a) / b
    if z >= 1.0:
        if math.isclose(z, 1.0, rel_tol=0, abs_tol=1e-15):
            s = homogeneous_asymptote(cfg)
            return np.full_like(t, s) if t.ndim else s
        raise ParameterizationError(
            f"artanh argument {z:.6g} outside (-1, 1): s0 lies above the stable level"
        )
    if z <= -1.0:
        raise ParameterizationError(f"artanh argument {z:.6g} outside (-1, 1)")
    out = (b * np.tanh(b * t / 2.0 + math.atanh(z)) - a) / (2.0 * lE)
    return out if t.ndim else float(out)


def linear_ode_solution(lambda_int, lambda_rec, t, s0: float = 0.0):
    """Closed form of the uncoupled equation ds/dt = lam_int (1 - s) - lam_rec s.

    Returns ``(s(t), flag)``; ``flag`` is ``"static"`` when both intensities
    vanish (then s stays at ``s0``), otherwise ``None``.
    """
    lam_int = np.asarray(lambda_int, dtype=float)
    lam_rec = np.asarray(lambda_rec, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(lam_int < 0) or np.any(lam_rec < 0):
        raise ValidationError("intensities must be non-negative")
    tot = lam_int + lam_rec
    static = tot == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        level = np.where(static, s0, lam_int / np.where(static, 1.0, tot))
        out = level + (s0 - level) * np.exp(-tot * t)
    out = np.where(static, s0, out)
    flag = "static" if np.any(static) else None
    return (float(out) if out.ndim == 0 else out), flag


def disconnected_stationary(p_int, p_con):
    """Long-run active probability of the two-state chain p_int / (p_int + 1 - p_con).

    Returns ``(a, flag)``; the absorbing pair (p_int=0, p_con=1) has no unique
    stationary law and gives ``nan`` with flag ``"absorbing"``.
    """
    p_int = np.asarray(p_int, dtype=float)
    p_con = np.asarray(p_con, dtype=float)
    if np.any((p_int < 0) | (p_int > 1) | (p_con < 0) | (p_con > 1)):
        raise ValidationError("probabilities must lie in [0, 1]")
    den = p_int + 1.0 - p_con
    degenerate = den == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(degenerate, np.nan, p_int / np.where(degenerate, 1.0, den))
    flag = "absorbing" if np.any(degenerate) else None
    return (float(a) if a.ndim == 0 else a), flag
