"""Jamming schedules: constant power, explicit sleep/jam bursts, and the
sleep-then-jam construction that defeats a cumulative budget under disturbance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import failure_probability
from .model import AttackStrategy, Budget, BudgetKind, ChannelParams, ModelError


class UnreachableTarget(ValueError):
    pass


@dataclass(frozen=True)
class SleepJamParams:
    """Inputs of the sleep-then-jam construction for a scalar plant.

    vbar : average-power budget the attacker must respect.
    rho : probability with which the state should exceed ``z``.
    z : target state level.
    wstar : constant disturbance.
    A_scalar : open-loop gain, > 1.
    """

    vbar: float
    rho: float
    z: float
    wstar: float
    A_scalar: float

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ModelError(f"rho must lie in (0, 1), got {self.rho}")
        for name in ("vbar", "z", "wstar"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.A_scalar > 1:
            raise ModelError(f"A_scalar must exceed 1, got {self.A_scalar}")


def inverse_failure_probability(target: float, channel: ChannelParams, tol: float = 1e-10) -> float:
    """Interference power ``v`` with ``p(v) = target``, by bisection.

    The upper end of the bracket is doubled until ``p`` exceeds the target.
    """
    p0 = failure_probability(0.0, channel)
    if target <= p0:
        raise UnreachableTarget(
            f"target probability unreachable: channel noise floor exceeds requirement "
            f"(p(0) = {p0:.6g} >= {target:.6g})")
    if target >= 1.0 - 1e-15:
        raise UnreachableTarget(f"target probability {target!r} is numerically indistinguishable from 1")
    lo, hi = 0.0, 1.0
    while failure_probability(hi, channel) < target:
        lo, hi = hi, 2.0 * hi
        if not math.isfinite(hi):
            raise UnreachableTarget(f"p never reaches {target!r}")
    for _ in range(2000):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:  # floating-point resolution reached
            break
        if failure_probability(mid, channel) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def explicit_strategy(tau1: int, tau2: int, vstar: float, period: Optional[int] = None) -> AttackStrategy:
    """Sleep for ``tau1`` steps, jam at ``vstar`` for ``tau2`` steps, then stay
    silent, or repeat the cycle every ``period`` steps."""
    tau1, tau2 = int(tau1), int(tau2)
    if tau1 < 0 or tau2 < 1:
        raise ValueError(f"need tau1 >= 0 and tau2 >= 1, got tau1={tau1}, tau2={tau2}")
    if vstar < 0:
        raise ValueError("vstar must be nonnegative")
    if period is not None and period < tau1 + tau2:
        raise ValueError(f"period {period} is shorter than tau1 + tau2 = {tau1 + tau2}")
    vstar = float(vstar)

    def schedule(t):
        phase = t if period is None else t % period
        return np.where((phase >= tau1) & (phase < tau1 + tau2), vstar, 0.0)

    return AttackStrategy(schedule, name="explicit",
                          params={"tau1": tau1, "tau2": tau2, "vstar": vstar, "period": period})


def constant_strategy(vstar: float) -> AttackStrategy:
    if vstar < 0:
        raise ValueError("vstar must be nonnegative")
    vstar = float(vstar)
    budgets = (Budget(0.0, vstar, BudgetKind.CUMULATIVE), Budget(0.0, vstar, BudgetKind.WINDOWED))
    return AttackStrategy(lambda t: np.full(t.shape, vstar), budgets, name="constant",
                          params={"vstar": vstar})


def sleep_jam_strategy(params: SleepJamParams, channel: ChannelParams) -> AttackStrategy:
    """Wait long enough to bank budget, then jam hard for ``tau2`` steps.

    ``tau2`` is the number of open-loop steps the constant disturbance needs
    to push the state past ``z``; ``vstar`` makes all ``tau2`` transmissions
    fail with probability above ``rho``; ``tau1`` is the silence needed so
    that the average power up to ``tau1 + tau2`` stays within ``vbar``.
    """
    ratio = math.log(params.z / params.wstar) / math.log(params.A_scalar)
    tau2 = math.floor(max(ratio, 0.0)) + 1
    target = params.rho ** (1.0 / tau2)
    vstar = inverse_failure_probability(target, channel) + 1.0
    tau1 = math.floor(max(vstar - params.vbar, 0.0) * tau2 / params.vbar) + 1
    strategy = explicit_strategy(tau1, tau2, vstar)
    return AttackStrategy(strategy.schedule,
                          (Budget(0.0, params.vbar, BudgetKind.CUMULATIVE),),
                          name="sleep_jam",
                          params={"tau1": tau1, "tau2": tau2, "vstar": vstar,
                                  "target": target, "period": None})
