"""Stability conditions and first-moment bound constants.

All matrix norms here are induced by the weighted vector norm
``||x||_P = sqrt(x^T P x)``. Constants are carried both directly and as
logarithms, since large attacker reserves push ``mu`` far beyond the range
of a double.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import PlantModel


class ConditionNotMet(ValueError):
    """The stability condition needed for the requested constants fails."""


class TStarDiverged(RuntimeError):
    pass


class Condition(enum.Enum):
    FIRST_MOMENT = "first_moment"          # no disturbance, cumulative budget
    ALMOST_SURE = "almost_sure"
    BOUNDED_DISTURBANCE = "bounded_disturbance"
    SECOND_MOMENT = "second_moment"


def _spd_sqrt(P) -> tuple:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"P must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P)) or np.max(np.abs(P - P.T)) >= 1e-12:
        raise ValueError("P must be symmetric")
    lam, V = np.linalg.eigh(P)
    if lam[0] <= 0:
        raise ValueError(f"P must be positive definite (smallest eigenvalue {lam[0]:.3g})")
    root = (V * np.sqrt(lam)) @ V.T
    inv_root = (V / np.sqrt(lam)) @ V.T
    return lam, root, inv_root


@dataclass(frozen=True, eq=False)
class NormContext:
    """Weighted norm ``||x||_P`` with its Euclidean equivalence constants.

    ``c1 ||y||_P <= ||y||_2 <= c2 ||y||_P`` with ``c1 = lambda_max(P)^-1/2`` and
    ``c2 = lambda_min(P)^-1/2``.
    """

    P: np.ndarray
    c1: float
    c2: float
    root: np.ndarray
    inv_root: np.ndarray

    @classmethod
    def from_matrix(cls, P) -> "NormContext":
        lam, root, inv_root = _spd_sqrt(P)
        P = np.array(P, dtype=float)
        for a in (P, root, inv_root):
            a.setflags(write=False)
        return cls(P, 1.0 / math.sqrt(lam[-1]), 1.0 / math.sqrt(lam[0]), root, inv_root)

    def vector_norm(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(math.sqrt(max(x @ self.P @ x, 0.0)))

    def matrix_norm(self, M) -> float:
        return float(np.linalg.norm(self.root @ np.asarray(M, dtype=float) @ self.inv_root, 2))


def p_induced_norm(M, P) -> float:
    """Operator norm of ``M`` for the vector norm ``sqrt(x^T P x)``.

    Equal to the largest singular value of ``P^(1/2) M P^(-1/2)``.
    """
    _, root, inv_root = _spd_sqrt(P)
    return float(np.linalg.norm(root @ np.asarray(M, dtype=float) @ inv_root, 2))


def norm_equivalence_constants(P) -> tuple:
    lam, _, _ = _spd_sqrt(P)
    return 1.0 / math.sqrt(lam[-1]), 1.0 / math.sqrt(lam[0])


def plant_norms(plant: PlantModel, ctx: NormContext) -> tuple:
    """``(||A||_P, ||A + BK||_P)``."""
    return ctx.matrix_norm(plant.A), ctx.matrix_norm(plant.closed_loop)


def _lhs(kind: Condition, norm_a: float, norm_cl: float, ph: float) -> float:
    if kind is Condition.ALMOST_SURE:
        if norm_cl == 0.0:
            return -math.inf
        log_a = math.log(norm_a) if norm_a > 0 else -math.inf
        return (1.0 - ph) * math.log(norm_cl) + (ph * log_a if ph > 0 else 0.0)
    if kind is Condition.SECOND_MOMENT:
        return (1.0 - ph) * norm_cl**2 + ph * norm_a**2
    return (1.0 - ph) * norm_cl + ph * norm_a


def _holds(kind: Condition, lhs: float) -> bool:
    return lhs < 0.0 if kind is Condition.ALMOST_SURE else lhs < 1.0


@dataclass(frozen=True)
class BoundConstants:
    """Constants of a geometric first-moment bound.

    ``gain`` multiplies the disturbance level: it is ``d_hat`` for bounded
    disturbances, ``f_hat`` for finite second moments and 0 when there is no
    disturbance term.
    """

    theta: float
    mu: float
    gain: float
    T_star: int
    log_mu: float
    log_gain: float
    T_star_squared: Optional[int] = None

    def decay(self, t) -> np.ndarray:
        """``mu * theta**t``, saturating to ``inf`` rather than overflowing."""
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            return np.exp(self.log_mu + t * math.log(self.theta))

    # conventional names for the two disturbance cases
    @property
    def d_hat(self) -> float:
        return self.gain

    @property
    def f_hat(self) -> float:
        return self.gain


@dataclass(frozen=True)
class StabilityCertificate:
    condition: Condition
    holds: bool
    lhs_value: float
    zeta1: float
    zeta0: float
    v: float
    kappa: Optional[float] = None
    constants: Optional[BoundConstants] = None

    def bound(self, t, x0_norm: float, w_level: float = 0.0) -> np.ndarray:
        """Analytic bound on ``E||x(t)||_2``.

        ``w_level`` is the almost-sure bound ``w_bar`` on ``||w||_2`` for
        bounded disturbances and the bound ``w_tilde`` on ``E||w||_2^2`` for
        the second-moment case (its square root enters the bound).
        """
        if self.constants is None:
            raise ValueError("certificate carries no bound constants")
        c = self.constants
        decay = c.decay(t) * x0_norm
        if self.condition is Condition.FIRST_MOMENT:
            return decay
        level = math.sqrt(w_level) if self.condition is Condition.SECOND_MOMENT else w_level
        if level == 0.0:
            return decay
        with np.errstate(over="ignore"):
            return decay + c.gain * level


def check_condition(kind: Condition, plant: PlantModel, ctx: NormContext, env, v: float) -> StabilityCertificate:
    kind = Condition(kind)
    if v < 0:
        raise ValueError("v must be nonnegative")
    norm_a, norm_cl = plant_norms(plant, ctx)
    lhs = _lhs(kind, norm_a, norm_cl, float(env(v)))
    return StabilityCertificate(kind, _holds(kind, lhs), lhs, norm_a - norm_cl, norm_cl, float(v))


@dataclass(frozen=True)
class AdmissibleBudget:
    value: float
    status: str   # "bounded", "unbounded" (cap reached) or "never" (fails at v = 0)

    def __float__(self):
        return self.value


def max_admissible_v(kind: Condition, plant: PlantModel, ctx: NormContext, env,
                     tol: float = 1e-4, cap: float = 1e6) -> AdmissibleBudget:
    """Largest ``v`` at which the condition holds.

    The left-hand sides are nondecreasing in ``v`` because the envelope is,
    so the holding set is an interval starting at 0: bracket by doubling and
    bisect.
    """
    kind = Condition(kind)
    norm_a, norm_cl = plant_norms(plant, ctx)

    def ok(v):
        return _holds(kind, _lhs(kind, norm_a, norm_cl, float(env(v))))

    if not ok(0.0):
        return AdmissibleBudget(0.0, "never")
    lo, hi = 0.0, 1.0
    while ok(hi):
        lo, hi = hi, 2.0 * hi
        if lo >= cap:
            return AdmissibleBudget(cap, "unbounded")
    # bisect well below tol so the reported value is accurate to tol
    while hi - lo > tol * 1e-3:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return AdmissibleBudget(lo, "bounded")


def _alphas(zeta1: float, zeta0: float, squared: bool) -> tuple:
    if squared:
        return zeta1**2 + 2.0 * zeta1 * zeta0, zeta0**2
    return zeta1, zeta0


def find_t_star(zeta1: float, zeta0: float, env, kappa: float, v: float,
                squared: bool = False, cap: int = 10**9) -> int:
    """Smallest positive integer ``T`` with ``h(kappa / T + v) < 1``, where
    ``h(x) = alpha1 * phat(x) + alpha0``.

    ``h(kappa / T + v)`` is nonincreasing in ``T``, so a galloping search
    followed by bisection finds the same ``T`` as a linear scan.
    """
    a1, a0 = _alphas(zeta1, zeta0, squared)

    def ok(T):
        return a1 * float(env(kappa / T + v)) + a0 < 1.0

    if not a1 * float(env(v)) + a0 < 1.0:
        raise ConditionNotMet(f"h(v) >= 1 at v={v}; no T* exists")
    if ok(1):
        return 1
    lo, hi = 1, 2
    while not ok(hi):
        lo, hi = hi, 2 * hi
        if lo >= cap:
            raise TStarDiverged("T* search diverged; condition margin too small")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    if hi > cap:
        raise TStarDiverged("T* search diverged; condition margin too small")
    return hi


def geometric_constants(alpha1: float, alpha0: float, env, kappa: float, v: float, T_star: int) -> tuple:
    """``(theta, log_mu)`` for ``E prod (alpha1 l + alpha0) <= mu theta^len``.

    ``theta = h(kappa / T* + v)`` and
    ``mu = (alpha1 + alpha0)^(T*-1) theta^-(T*-1)``.
    """
    theta = alpha1 * float(env(kappa / T_star + v)) + alpha0
    if T_star == 1:
        return theta, 0.0
    return theta, (T_star - 1) * (math.log(alpha1 + alpha0) - math.log(theta))


def _require(kind: Condition, plant, ctx, env, v) -> StabilityCertificate:
    cert = check_condition(kind, plant, ctx, env, v)
    if not cert.holds:
        raise ConditionNotMet(f"{kind.value} condition fails at v={v} (lhs={cert.lhs_value:.6g})")
    if cert.zeta1 < 0:
        raise ConditionNotMet("||A||_P < ||A+BK||_P; the affine-product bounds need zeta1 >= 0")
    return cert


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _log_sum_one(log_x: float) -> float:
    """``log(exp(log_x) + 1)`` without overflow."""
    return float(np.logaddexp(log_x, 0.0))


def bound_constants_prop1(plant, ctx, env, kappa_bar: float, vbar: float) -> BoundConstants:
    """``theta_bar`` and ``mu_bar`` of the disturbance-free decay bound."""
    cert = _require(Condition.FIRST_MOMENT, plant, ctx, env, vbar)
    T = find_t_star(cert.zeta1, cert.zeta0, env, kappa_bar, vbar)
    theta, log_mu = geometric_constants(cert.zeta1, cert.zeta0, env, kappa_bar, vbar, T)
    log_mu_bar = math.log(ctx.c2 / ctx.c1) + log_mu
    return BoundConstants(theta, _exp(log_mu_bar), 0.0, T, log_mu_bar, -math.inf)


def bound_constants_thm1(plant, ctx, env, kappa_hat: float, vhat: float) -> BoundConstants:
    """``theta_hat``, ``mu_hat`` and ``d_hat`` for bounded disturbances."""
    cert = _require(Condition.BOUNDED_DISTURBANCE, plant, ctx, env, vhat)
    T = find_t_star(cert.zeta1, cert.zeta0, env, kappa_hat, vhat)
    theta, log_mu = geometric_constants(cert.zeta1, cert.zeta0, env, kappa_hat, vhat, T)
    scale = math.log(ctx.c2 / ctx.c1)
    log_d = log_mu - math.log1p(-theta)
    log_d_hat = scale + _log_sum_one(log_d)
    return BoundConstants(theta, _exp(scale + log_mu), _exp(log_d_hat), T, scale + log_mu, log_d_hat)


def bound_constants_thm2(plant, ctx, env, kappa_hat: float, vhat: float) -> BoundConstants:
    """``theta_hat``, ``mu_hat`` and ``f_hat`` for disturbances with a finite
    second moment. The ``f`` term uses the squared affine products, with
    their own ``T*``."""
    cert = _require(Condition.SECOND_MOMENT, plant, ctx, env, vhat)
    z1, z0 = cert.zeta1, cert.zeta0
    T = find_t_star(z1, z0, env, kappa_hat, vhat)
    theta, log_mu = geometric_constants(z1, z0, env, kappa_hat, vhat, T)
    a1, a0 = _alphas(z1, z0, squared=True)
    T_sq = find_t_star(z1, z0, env, kappa_hat, vhat, squared=True)
    theta_sq, log_mu_sq = geometric_constants(a1, a0, env, kappa_hat, vhat, T_sq)
    log_f = 0.5 * log_mu_sq - math.log1p(-math.sqrt(theta_sq))
    scale = math.log(ctx.c2 / ctx.c1)
    log_f_hat = scale + _log_sum_one(log_f)
    return BoundConstants(theta, _exp(scale + log_mu), _exp(log_f_hat), T, scale + log_mu,
                          log_f_hat, T_star_squared=T_sq)


_CONSTANTS = {
    Condition.FIRST_MOMENT: bound_constants_prop1,
    Condition.BOUNDED_DISTURBANCE: bound_constants_thm1,
    Condition.SECOND_MOMENT: bound_constants_thm2,
}


def certify(kind: Condition, plant, ctx, env, v: float, kappa: float = 0.0) -> StabilityCertificate:
    """Evaluate a condition and, when it holds, attach its bound constants.

    ``kappa`` is the budget reserve of the matching interference budget. The
    almost-sure condition carries no constants.
    """
    kind = Condition(kind)
    cert = check_condition(kind, plant, ctx, env, v)
    constants = None
    if cert.holds and kind in _CONSTANTS:
        constants = _CONSTANTS[kind](plant, ctx, env, kappa, v)
    return StabilityCertificate(kind, cert.holds, cert.lhs_value, cert.zeta1, cert.zeta0,
                                float(v), float(kappa), constants)
