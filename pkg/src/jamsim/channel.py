"""SINR failure probability, its concave envelope, and attack-budget checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erfc

from .model import AttackStrategy, BudgetKind, ChannelParams


class EnvelopeError(ValueError):
    """The candidate envelope is not a concave nondecreasing upper bound of p."""


def q_function(y):
    """Gaussian tail probability Q(y) = P[N(0, 1) > y]."""
    y_arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y_arr)):
        raise ValueError("q_function requires finite input")
    out = 0.5 * erfc(y_arr / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def failure_probability(v, params: ChannelParams):
    """Packet failure probability ``2 Q(sqrt(c xi / (v + sigma)))``.

    Accepts a scalar or an array of interference powers.
    """
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr < 0) or np.any(np.isnan(v_arr)):
        raise ValueError("interference power must be nonnegative")
    # v = inf gives sqrt(0) = 0 and p = 1, which is the right limit
    p = 2.0 * q_function(np.sqrt(params.c * params.xi / (v_arr + params.sigma)))
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def default_validation_grid(vmax: float = 1e4, points: int = 1000) -> np.ndarray:
    """0 followed by log-spaced points up to ``vmax``; ``points`` values total."""
    return np.concatenate(([0.0], np.logspace(-6, math.log10(vmax), points - 1)))


def _validate(env, grid: np.ndarray, tol: float = 1e-12) -> None:
    p = failure_probability(grid, env.base)
    ph = np.asarray(env(grid), dtype=float)
    if np.any(ph < p - tol):
        i = int(np.argmax(p - ph))
        raise EnvelopeError(f"envelope falls below p at v={grid[i]:.6g} "
                            f"({ph[i]:.6g} < {p[i]:.6g})")
    if np.any(ph > 1 + tol) or np.any(np.diff(ph) < -tol):
        raise EnvelopeError("envelope must be nondecreasing with values in [0, 1]")
    mid = np.asarray(env(0.5 * (grid[:-1] + grid[1:])), dtype=float)
    gap = 0.5 * (ph[:-1] + ph[1:]) - mid
    if np.any(gap > tol):
        i = int(np.argmax(gap))
        raise EnvelopeError(f"envelope is not midpoint-concave between v={grid[i]:.6g} and v={grid[i + 1]:.6g}")


@dataclass(frozen=True)
class PHatEnvelope:
    """Shifted envelope ``phat(v) = p(v + psi)``.

    With ``psi = (c xi - 3 sigma) / 3`` the shift moves the inflection point of
    ``p`` to ``v = 0``, so the shifted curve is concave on ``[0, inf)``. The
    envelope is checked on a validation grid when constructed.
    """

    base: ChannelParams
    psi: float

    def __post_init__(self):
        if not (np.isfinite(self.psi) and self.psi >= 0):
            raise EnvelopeError(f"shift psi must be a nonnegative finite number, got {self.psi!r}")
        object.__setattr__(self, "psi", float(self.psi))
        _validate(self, default_validation_grid())

    @classmethod
    def shifted(cls, base: ChannelParams) -> "PHatEnvelope":
        psi = (base.c * base.xi - 3.0 * base.sigma) / 3.0
        if psi < 0:
            raise EnvelopeError(
                f"shifted envelope unavailable: c*xi - 3*sigma = {3 * psi:.6g} < 0; "
                "supply a TabulatedEnvelope instead")
        return cls(base, psi)

    def __call__(self, v):
        return failure_probability(np.asarray(v, dtype=float) + self.psi, self.base)


@dataclass(frozen=True, eq=False)
class TabulatedEnvelope:
    """Piecewise-linear envelope through user-supplied knots.

    Held constant beyond the last knot, so the last value should be 1 unless
    ``p`` stays below it on the whole range of interest. Validated on the
    default grid plus the knots themselves.
    """

    base: ChannelParams
    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        knots = np.array(self.knots, dtype=float)
        values = np.array(self.values, dtype=float)
        if knots.ndim != 1 or knots.shape != values.shape or knots.size < 2:
            raise EnvelopeError("knots and values must be 1-D arrays of equal length >= 2")
        if knots[0] != 0 or np.any(np.diff(knots) <= 0):
            raise EnvelopeError("knots must start at 0 and be strictly increasing")
        knots.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        grid = np.union1d(default_validation_grid(), knots)
        _validate(self, grid)

    def __call__(self, v):
        out = np.interp(np.asarray(v, dtype=float), self.knots, self.values)
        return float(out) if np.ndim(out) == 0 else out


def phat(v, env):
    """Evaluate an envelope at ``v >= 0``."""
    if np.any(np.asarray(v) < 0):
        raise ValueError("interference power must be nonnegative")
    return env(v)


def sample_failure(v: float, params: ChannelParams, u: float) -> int:
    """Failure indicator ``1[u <= p(v)]`` for a uniform draw ``u``."""
    if not (0.0 <= u <= 1.0):
        raise ValueError(f"uniform draw must lie in [0, 1], got {u!r}")
    return int(u <= failure_probability(v, params))


def _trace(trace) -> np.ndarray:
    v = np.asarray(trace, dtype=float).ravel()
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("interference trace must be finite and nonnegative")
    return v


def _slack(scale: float) -> float:
    # Absorbs rounding in the cumulative sums; real violations are much larger.
    return 1e-9 * max(1.0, abs(scale))


@dataclass(frozen=True)
class BudgetCheck:
    passed: bool
    horizon: Optional[int] = None     # first violating t (cumulative budget)
    window: Optional[tuple] = None    # a violating (t1, t2) (windowed budget)
    excess: float = 0.0               # largest sum - (kappa + vbar * length) seen

    def __bool__(self):
        return self.passed


def verify_assumption1(trace, kappa: float, vbar: float) -> BudgetCheck:
    """Check ``sum_{i<t} v(i) <= kappa + vbar * t`` for t = 1 .. len(trace)."""
    v = _trace(trace)
    if v.size == 0:
        return BudgetCheck(True)
    t = np.arange(1, v.size + 1)
    sums = np.cumsum(v)
    excess = sums - vbar * t
    bad = excess > kappa + _slack(sums[-1] + kappa)
    worst = float(excess.max() - kappa)
    if bad.any():
        return BudgetCheck(False, horizon=int(t[np.argmax(bad)]), excess=worst)
    return BudgetCheck(True, excess=worst)


def verify_assumption2(trace, kappa_hat: float, vhat: float) -> BudgetCheck:
    """Check ``sum_{t1 <= i < t2} v(i) <= kappa_hat + vhat (t2 - t1)`` for
    every window ``0 <= t1 < t2 <= len(trace)``.

    With ``G(t) = sum_{i<t} v(i) - vhat t`` the window excess is
    ``G(t2) - G(t1)``, so the worst window pairs each ``t2`` with the running
    minimum of ``G`` before it. Returns the worst window when it violates.
    """
    v = _trace(trace)
    if v.size == 0:
        return BudgetCheck(True)
    sums = np.concatenate(([0.0], np.cumsum(v)))
    g = sums - vhat * np.arange(v.size + 1)
    run_min = np.minimum.accumulate(g[:-1])
    arg_min = _running_argmin(g[:-1])
    excess = g[1:] - run_min
    t2 = int(np.argmax(excess)) + 1
    worst = float(excess[t2 - 1])
    if worst > kappa_hat + _slack(sums[-1] + kappa_hat):
        return BudgetCheck(False, window=(int(arg_min[t2 - 1]), t2), excess=worst - kappa_hat)
    return BudgetCheck(True, excess=worst - kappa_hat)


def _running_argmin(a: np.ndarray) -> np.ndarray:
    idx = np.arange(a.size)
    is_new_min = np.concatenate(([True], a[1:] < np.minimum.accumulate(a)[:-1]))
    return np.maximum.accumulate(np.where(is_new_min, idx, 0))


def verify_declared_budgets(strategy: AttackStrategy, horizon: int) -> dict:
    """Run every budget the strategy declares against its first ``horizon`` powers."""
    trace = strategy.trace(horizon)
    results = {}
    for b in strategy.budgets:
        if b.kind is BudgetKind.CUMULATIVE:
            results[b.kind] = verify_assumption1(trace, b.kappa, b.vbar)
        else:
            results[b.kind] = verify_assumption2(trace, b.kappa, b.vbar)
    return results


def max_consecutive_duration(kappa_hat: float, vhat: float, vstar: float):
    """Longest run of consecutive steps at power ``vstar`` a windowed budget
    allows; ``math.inf`` when ``vstar <= vhat``."""
    if vstar < 0:
        raise ValueError("vstar must be nonnegative")
    if vstar <= vhat:
        return math.inf
    q = kappa_hat / (vstar - vhat)
    k = math.floor(q)
    # 1228.8 / 30.72 lands one ulp under 40 in binary
    if (k + 1) - q <= 1e-9 * max(1.0, q):
        k += 1
    return k


def max_burst_power(kappa_hat: float, vhat: float, duration: int) -> float:
    """Highest constant power sustainable for ``duration`` consecutive steps."""
    if duration < 1:
        raise ValueError("duration must be a positive integer")
    return kappa_hat / duration + vhat


__all__ = [
    "BudgetCheck", "EnvelopeError", "PHatEnvelope", "TabulatedEnvelope",
    "default_validation_grid", "failure_probability", "max_burst_power",
    "max_consecutive_duration", "phat", "q_function", "sample_failure",
    "verify_assumption1", "verify_assumption2", "verify_declared_budgets",
]
