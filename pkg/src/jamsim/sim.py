"""Monte Carlo simulation of the jammed closed loop.

Runs are simulated in fixed-size batches, vectorised across runs. Every
random number comes from a Philox stream keyed by ``(base_seed, run_index)``
with the stream id in the high counter word, so the draw used at step ``t``
of a run depends only on ``(base_seed, run_index, stream, t)``. Batches can
therefore run in any order or on any number of threads, and reductions are
merged in run-index order, so results are bitwise reproducible.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from .analysis import Condition, StabilityCertificate
from .channel import failure_probability, verify_assumption1, verify_assumption2
from .model import (AttackStrategy, ChannelParams, DisturbanceModel, ModelError,
                    PlantModel, Trajectory)

FAILURE_STREAM = 0
DISTURBANCE_STREAM = 1
INPUT_DISTURBANCE_STREAM = 2

BATCH_SIZE = 1024
WORKERS_ENV = "JAMSIM_WORKERS"

_SEED_MASK = (1 << 64) - 1


class BudgetViolation(RuntimeError):
    """The attack breaks the budget a bound relies on, so the bound is not claimed."""


def stream(base_seed: int, run_index: int, stream_id: int) -> np.random.Generator:
    key = np.array([base_seed & _SEED_MASK, run_index], dtype=np.uint64)
    counter = np.array([0, 0, 0, stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class CountermeasureParams:
    """Boost transmit power to ``xi_c`` for ``t_c`` steps after ``n_c``
    consecutive failures."""

    xi_c: float
    n_c: int
    t_c: int
    xi_nominal: float

    def __post_init__(self):
        if self.n_c < 1 or self.t_c < 1:
            raise ModelError("n_c and t_c must be positive integers")
        if not (self.xi_nominal > 0 and self.xi_c > self.xi_nominal):
            raise ModelError(f"boosted power xi_c={self.xi_c} must exceed nominal {self.xi_nominal}")


@dataclass(frozen=True, eq=False)
class SimConfig:
    plant: PlantModel
    channel: ChannelParams
    strategy: AttackStrategy
    disturbance: DisturbanceModel
    horizon: int
    n_runs: int
    base_seed: int = 0
    countermeasure: Optional[CountermeasureParams] = None

    def __post_init__(self):
        if self.horizon < 1 or self.n_runs < 1:
            raise ModelError("horizon and n_runs must be >= 1")
        if self.base_seed < 0:
            raise ModelError("base_seed must be an unsigned integer")
        if self.disturbance.dim != self.plant.n:
            raise ModelError(f"disturbance dimension {self.disturbance.dim} != state dimension {self.plant.n}")
        cm = self.countermeasure
        if cm is not None and not math.isclose(cm.xi_nominal, self.channel.xi):
            raise ModelError(f"countermeasure nominal power {cm.xi_nominal} != channel.xi {self.channel.xi}")


@dataclass(frozen=True, eq=False)
class MomentSeries:
    t: np.ndarray
    mean_norm: np.ndarray
    std_err: np.ndarray
    n_runs: int

    def __len__(self):
        return self.t.size

    def same_as(self, other: "MomentSeries") -> bool:
        return (self.n_runs == other.n_runs and np.array_equal(self.t, other.t)
                and np.array_equal(self.mean_norm, other.mean_norm)
                and np.array_equal(self.std_err, other.std_err))


def _simulate_batch(config: SimConfig, runs: np.ndarray, *, record: bool = False,
                    capture=(), force_failures: Optional[int] = None) -> dict:
    plant, T = config.plant, config.horizon
    R, n = runs.size, plant.n
    steps = np.arange(T)
    v = config.strategy.trace(T)
    dist = config.disturbance

    U = np.empty((R, T))
    W = np.zeros((R, T, n))
    WC = np.zeros((R, T, plant.m)) if dist.input_sampler is not None else None
    for i, r in enumerate(runs):
        r = int(r)
        U[i] = stream(config.base_seed, r, FAILURE_STREAM).random(T)
        if dist.sampler is not None:
            W[i] = dist.sample(steps, stream(config.base_seed, r, DISTURBANCE_STREAM))
        if WC is not None:
            WC[i] = dist.input_sampler(steps, stream(config.base_seed, r, INPUT_DISTURBANCE_STREAM))

    cm = config.countermeasure
    p_nominal = failure_probability(v, config.channel)
    if cm is not None:
        p_boost = failure_probability(v, config.channel.with_power(cm.xi_c))
        boost_left = np.zeros(R, dtype=np.int64)
        streak = np.zeros(R, dtype=np.int64)

    At, BKt, Bt = plant.A.T, (plant.B @ plant.K).T, plant.B.T
    x = np.tile(plant.x0, (R, 1))
    norms = np.empty((R, T + 1))
    norms[:, 0] = np.linalg.norm(x, axis=1)
    xi = np.full((R, T), config.channel.xi)
    captured = {}
    if 0 in capture:
        captured[0] = x.copy()
    if record:
        X = np.empty((R, T + 1, n))
        X[:, 0] = x
        L = np.empty((R, T), dtype=np.int8)
        Wrec = np.empty((R, T, n))

    for t in range(T):
        if cm is not None:
            boosting = boost_left > 0
            p = np.where(boosting, p_boost[t], p_nominal[t])
            xi[boosting, t] = cm.xi_c
        else:
            p = p_nominal[t]
        if force_failures is None:
            fail = U[:, t] <= p
        else:
            fail = np.full(R, bool(force_failures))
        ok = (~fail)[:, None]
        w = W[:, t]
        if WC is not None:
            w = w + ok * (WC[:, t] @ Bt)
        x = x @ At + ok * (x @ BKt) + w
        norms[:, t + 1] = np.linalg.norm(x, axis=1)
        if t + 1 in capture:
            captured[t + 1] = x.copy()
        if record:
            X[:, t + 1] = x
            L[:, t] = fail
            Wrec[:, t] = w
        if cm is not None:
            # failures during a boost are not counted; the streak restarts afterwards
            run = np.where(fail, streak + 1, 0)
            trigger = ~boosting & (run >= cm.n_c)
            boost_left = np.where(boosting, boost_left - 1, np.where(trigger, cm.t_c, 0))
            streak = np.where(boosting | trigger, 0, run)

    out = {"norms": norms, "xi": xi, "captured": captured}
    if record:
        out.update(X=X, L=L, W=Wrec, v=v)
    return out


def _batches(n_runs: int):
    return [np.arange(s, min(s + BATCH_SIZE, n_runs)) for s in range(0, n_runs, BATCH_SIZE)]


def _map_batches(config: SimConfig, fn, **kwargs):
    """Apply ``fn`` to each simulated batch; results come back in run order."""
    def job(runs):
        return fn(_simulate_batch(config, runs, **kwargs))

    batches = _batches(config.n_runs)
    workers = min(worker_count(), len(batches))
    if workers == 1:
        return [job(b) for b in batches]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, batches))


def simulate_trajectory(config: SimConfig, run_index: int, force_failures: Optional[int] = None) -> Trajectory:
    """Simulate one run and record every step.

    ``force_failures`` replaces the sampled indicators with a constant 0 or 1;
    it exists for testing the recursion in isolation.
    """
    if run_index < 0:
        raise ValueError("run_index must be nonnegative")
    out = _simulate_batch(config, np.array([run_index]), record=True, force_failures=force_failures)
    return Trajectory(out["X"][0], out["v"], out["L"][0], out["xi"][0], out["W"][0],
                      seed=config.base_seed, run_index=run_index)


def _merge_moments(parts) -> tuple:
    """Chan et al. pairwise merge of (count, mean, M2), in the given order."""
    count, mean, m2 = 0, None, None
    for k, mu, s in parts:
        if mean is None:
            count, mean, m2 = k, mu, s
            continue
        delta = mu - mean
        total = count + k
        mean = mean + delta * (k / total)
        m2 = m2 + s + delta**2 * (count * k / total)
        count = total
    return count, mean, m2


def _batch_moments(values: np.ndarray) -> tuple:
    mu = values.mean(axis=0)
    return values.shape[0], mu, ((values - mu) ** 2).sum(axis=0)


def monte_carlo_first_moment(config: SimConfig) -> MomentSeries:
    """Sample mean and standard error of ``||x(t)||_2`` for t = 0 .. horizon."""
    parts = _map_batches(config, lambda out: _batch_moments(out["norms"]))
    count, mean, m2 = _merge_moments(parts)
    if count > 1:
        se = np.sqrt(m2 / (count - 1) / count)
    else:
        se = np.zeros_like(mean)
    return MomentSeries(np.arange(config.horizon + 1), mean, se, count)


@dataclass(frozen=True, eq=False)
class RunTotals:
    """Per-run totals over t = 0 .. horizon-1 of ``||x(t)||_2`` and of the
    transmit power ``xi(t)``."""

    state_norm: np.ndarray
    power: np.ndarray


def run_totals(config: SimConfig) -> RunTotals:
    parts = _map_batches(config, lambda out: (out["norms"][:, :-1].sum(axis=1), out["xi"].sum(axis=1)))
    return RunTotals(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


@dataclass(frozen=True)
class Exceedance:
    probability: float
    low: float
    high: float
    hits: int
    n_runs: int


def estimate_exceedance_probability(config: SimConfig, z: float, tau: int, level: float = 0.95) -> Exceedance:
    """Fraction of runs with ``x(tau) > z`` (scalar plant) or
    ``||x(tau)||_2 > z``, with a Wilson score interval."""
    if tau < 0 or tau >= config.horizon:
        raise ValueError(f"tau must lie in [0, horizon), got tau={tau}, horizon={config.horizon}")
    scalar = config.plant.n == 1

    def count(out):
        x = out["captured"][tau]
        value = x[:, 0] if scalar else np.linalg.norm(x, axis=1)
        return int(np.count_nonzero(value > z))

    hits = sum(_map_batches(config, count, capture=(tau,)))
    ci = binomtest(hits, config.n_runs).proportion_ci(confidence_level=level, method="wilson")
    return Exceedance(hits / config.n_runs, float(ci.low), float(ci.high), hits, config.n_runs)


@dataclass(frozen=True, eq=False)
class BoundReport:
    t: np.ndarray
    mean_norm: np.ndarray
    std_err: np.ndarray
    bound: np.ndarray
    margin: np.ndarray      # bound - (mean - 3 se); negative means violated
    passed: bool

    @property
    def worst_margin(self) -> float:
        return float(self.margin.min()) if self.margin.size else math.inf


def check_budget_for(certificate: StabilityCertificate, strategy: AttackStrategy, horizon: int):
    kappa = certificate.kappa or 0.0
    trace = strategy.trace(horizon)
    if certificate.condition in (Condition.FIRST_MOMENT, Condition.ALMOST_SURE):
        return verify_assumption1(trace, kappa, certificate.v)
    return verify_assumption2(trace, kappa, certificate.v)


def moment_bound_check(config: SimConfig, certificate: StabilityCertificate,
                       w_level: Optional[float] = None, sigmas: float = 3.0) -> BoundReport:
    """Compare the Monte Carlo mean of ``||x(t)||_2`` with the analytic bound
    at every step t >= 1.

    ``w_level`` defaults to the disturbance model's declared bound (``w_bar``
    or ``w_tilde`` depending on the certificate).
    """
    if certificate.constants is None:
        raise ValueError("certificate has no bound constants")
    budget = check_budget_for(certificate, config.strategy, config.horizon)
    if not budget.passed:
        raise BudgetViolation(f"attack violates the budget behind the {certificate.condition.value} bound: {budget}")
    if certificate.condition is Condition.FIRST_MOMENT and not config.disturbance.is_zero:
        raise ValueError("the disturbance-free bound does not apply to a disturbed plant")
    if w_level is None:
        w_level = config.disturbance.bound or 0.0
    series = monte_carlo_first_moment(config)
    t = series.t[1:]
    bound = certificate.bound(t, float(np.linalg.norm(config.plant.x0)), w_level)
    margin = bound - (series.mean_norm[1:] - sigmas * series.std_err[1:])
    return BoundReport(t, series.mean_norm[1:], series.std_err[1:], bound, margin, bool(np.all(margin >= 0)))


def sample_failures(channel: ChannelParams, strategy: AttackStrategy, horizon: int,
                    n_runs: int, base_seed: int = 0) -> np.ndarray:
    """Failure indicators ``l(t)`` (runs x steps) from the same streams the
    simulator uses."""
    p = failure_probability(strategy.trace(horizon), channel)
    out = np.empty((n_runs, horizon), dtype=np.int8)
    for r in range(n_runs):
        out[r] = stream(base_seed, r, FAILURE_STREAM).random(horizon) <= p
    return out


def window_product_stats(failures: np.ndarray, alpha1: float, alpha0: float) -> tuple:
    """Mean and standard error of ``prod_{i<k} (alpha1 l(i) + alpha0)`` for
    window lengths k = 1 .. steps, windows starting at 0."""
    prods = np.cumprod(alpha1 * failures + alpha0, axis=1)
    n = prods.shape[0]
    return prods.mean(axis=0), prods.std(axis=0, ddof=1) / math.sqrt(n)


def window_sum_stats(failures: np.ndarray, alpha1: float, alpha0: float, root: bool = False) -> tuple:
    """Estimates of ``S(t) = sum_{j=0}^{t-2} g(E[prod_{i=j+1}^{t-1} (alpha1 l(i) + alpha0)])``
    for t = 2 .. steps, with ``g`` the identity or (``root=True``) the
    square root.

    Returns ``(t, estimate, std_err)``; the error of the square-root sums
    uses the delta method term by term.
    """
    factors = alpha1 * failures + alpha0
    n_runs, steps = factors.shape
    ts = np.arange(2, steps + 1)
    est = np.empty(ts.size)
    err = np.empty(ts.size)
    for i, t in enumerate(ts):
        # windows [j+1, t-1] for j = t-2 .. 0, i.e. lengths 1 .. t-1 ending at t-1
        prods = np.cumprod(factors[:, t - 1:0:-1], axis=1)
        if root:
            m = prods.mean(axis=0)
            s = prods.std(axis=0, ddof=1) / math.sqrt(n_runs)
            r = np.sqrt(m)
            est[i] = r.sum()
            err[i] = np.sum(np.where(r > 0, s / (2 * np.where(r > 0, r, 1)), 0.0))
        else:
            totals = prods.sum(axis=1)
            est[i] = totals.mean()
            err[i] = totals.std(ddof=1) / math.sqrt(n_runs)
    return ts, est, err
