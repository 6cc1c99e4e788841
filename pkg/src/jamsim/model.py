"""Domain types shared by the channel, attack, analysis and simulation code.

Everything here is immutable once built. Array fields are copied on
construction and flagged read-only, so instances can be handed to several
simulation workers at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class ModelError(ValueError):
    """Raised when a domain object is built from inconsistent data."""


def _frozen_array(value, name: str, ndim: int) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != ndim:
        raise ModelError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Linear plant ``x(t+1) = A x + (1 - l) B K x + w`` with its feedback gain.

    Parameters
    ----------
    A : (n, n) array_like
        Open-loop state transition matrix.
    B : (n, m) array_like
        Input matrix.
    K : (m, n) array_like
        State-feedback gain.
    x0 : (n,) array_like
        Initial state.
    """

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        A = _frozen_array(self.A, "A", 2)
        B = _frozen_array(self.B, "B", 2)
        K = _frozen_array(self.K, "K", 2)
        x0 = _frozen_array(self.x0, "x0", 1)
        n, m = B.shape
        if n < 1 or m < 1:
            raise ModelError(f"B must be n x m with n, m >= 1, got shape {B.shape}")
        if A.shape != (n, n):
            raise ModelError(f"A must be {n}x{n} to match B, got shape {A.shape}")
        if K.shape != (m, n):
            raise ModelError(f"K must be {m}x{n} to match A and B, got shape {K.shape}")
        if x0.shape != (n,):
            raise ModelError(f"x0 must have length {n}, got {x0.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "x0", x0)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def closed_loop(self) -> np.ndarray:
        """A + BK, the dynamics applied when a control packet arrives."""
        return self.A + self.B @ self.K

    def with_x0(self, x0) -> "PlantModel":
        return PlantModel(self.A, self.B, self.K, x0)


@dataclass(frozen=True)
class ChannelParams:
    """SINR channel constants: protocol constant ``c``, transmit power ``xi``
    and noise power ``sigma``."""

    c: float
    xi: float
    sigma: float

    def __post_init__(self):
        for name in ("c", "xi", "sigma"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ModelError(f"channel.{name} must be a positive finite number, got {value!r}")
            object.__setattr__(self, name, float(value))

    def with_power(self, xi: float) -> "ChannelParams":
        return ChannelParams(self.c, xi, self.sigma)


class BudgetKind(enum.Enum):
    """Which cumulative-interference budget a schedule declares.

    ``CUMULATIVE`` bounds sums taken from time 0; ``WINDOWED`` bounds the sum
    over every window and is the stronger of the two.
    """

    CUMULATIVE = "assumption1"
    WINDOWED = "assumption2"


@dataclass(frozen=True)
class Budget:
    kappa: float
    vbar: float
    kind: BudgetKind

    def __post_init__(self):
        if self.kappa < 0 or self.vbar < 0:
            raise ModelError(f"budget parameters must be nonnegative, got kappa={self.kappa}, vbar={self.vbar}")
        object.__setattr__(self, "kind", BudgetKind(self.kind))


@dataclass(frozen=True, eq=False)
class AttackStrategy:
    """Deterministic interference-power schedule ``t -> v(t)``.

    ``schedule`` must accept an integer array of step indices and return an
    array of the same shape. ``params`` records how the schedule was built
    (for example ``tau1``, ``tau2`` and ``vstar`` of a sleep-then-jam attack).
    """

    schedule: Callable[[np.ndarray], np.ndarray]
    budgets: tuple = ()
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def powers(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.int64)
        if np.any(t < 0):
            raise ModelError("attack schedule is only defined for t >= 0")
        v = np.asarray(self.schedule(t), dtype=float)
        if v.shape != t.shape:
            v = np.broadcast_to(v, t.shape).astype(float)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ModelError(f"attack schedule {self.name!r} produced a negative or non-finite power")
        return v

    def trace(self, horizon: int) -> np.ndarray:
        """Interference powers v(0), ..., v(horizon - 1)."""
        return self.powers(np.arange(horizon))

    def budget(self, kind: BudgetKind) -> Optional[Budget]:
        for b in self.budgets:
            if b.kind is kind:
                return b
        return None


class DisturbanceKind(enum.Enum):
    NONE = "none"
    BOUNDED = "bounded"
    SECOND_MOMENT = "second_moment"
    CONSTANT = "constant"


# sampler(t, rng) -> array of shape (len(t), n); row i is w(t[i]).
Sampler = Callable[[np.ndarray, np.random.Generator], np.ndarray]


@dataclass(frozen=True, eq=False)
class DisturbanceModel:
    """Additive disturbance process.

    ``bound`` is the almost-sure bound on ``||w(t)||_2`` for ``BOUNDED``, the
    bound on ``E||w(t)||_2^2`` for ``SECOND_MOMENT`` and ``||w*||_2`` for
    ``CONSTANT``.

    When ``input_sampler`` is given, the simulated disturbance becomes
    ``w(t) = w_P(t) + (1 - l(t)) B w_C(t)`` with ``w_P`` drawn from
    ``sampler`` and ``w_C`` from ``input_sampler``, which makes the
    disturbance depend on the failure indicator.
    """

    kind: DisturbanceKind
    dim: int
    sampler: Optional[Sampler] = None
    bound: Optional[float] = None
    input_sampler: Optional[Sampler] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", DisturbanceKind(self.kind))
        if self.dim < 1:
            raise ModelError("disturbance dimension must be >= 1")
        if self.kind is not DisturbanceKind.NONE and self.sampler is None:
            raise ModelError(f"{self.kind.value} disturbance needs a sampler")
        if self.bound is not None and self.bound < 0:
            raise ModelError("disturbance bound must be nonnegative")

    @property
    def is_zero(self) -> bool:
        return self.kind is DisturbanceKind.NONE and self.input_sampler is None

    def sample(self, t, rng: np.random.Generator) -> np.ndarray:
        t = np.asarray(t, dtype=np.int64)
        if self.sampler is None:
            return np.zeros((t.size, self.dim))
        w = np.asarray(self.sampler(t, rng), dtype=float)
        if w.shape != (t.size, self.dim):
            raise ModelError(f"disturbance sampler returned shape {w.shape}, expected {(t.size, self.dim)}")
        return w


def no_disturbance(n: int) -> DisturbanceModel:
    return DisturbanceModel(DisturbanceKind.NONE, n, bound=0.0)


def uniform_disturbance(n: int, half_width: float = 0.5) -> DisturbanceModel:
    """IID uniform on ``[-half_width, half_width]`` in each coordinate."""
    if half_width < 0:
        raise ModelError("half_width must be nonnegative")

    def sampler(t, rng):
        return half_width * (2.0 * rng.random((t.size, n)) - 1.0)

    return DisturbanceModel(DisturbanceKind.BOUNDED, n, sampler,
                            bound=half_width * np.sqrt(n),
                            params={"half_width": half_width})


def gaussian_disturbance(n: int, std: float, mean=None) -> DisturbanceModel:
    """IID Gaussian with independent coordinates.

    Drawn by inverse-CDF from uniforms so that ``w(t)`` depends only on the
    stream position of step ``t``.
    """
    from scipy.special import ndtri

    if std < 0:
        raise ModelError("std must be nonnegative")
    mu = np.zeros(n) if mean is None else np.asarray(mean, dtype=float)
    if mu.shape != (n,):
        raise ModelError(f"mean must have length {n}")

    def sampler(t, rng):
        u = rng.random((t.size, n))
        # random() can return exactly 0.0; keep ndtri finite
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        return mu + std * ndtri(u)

    return DisturbanceModel(DisturbanceKind.SECOND_MOMENT, n, sampler,
                            bound=float(n * std**2 + mu @ mu),
                            params={"std": std, "mean": mu.tolist()})


def constant_disturbance(wstar) -> DisturbanceModel:
    w = np.atleast_1d(np.asarray(wstar, dtype=float))

    def sampler(t, rng):
        return np.broadcast_to(w, (t.size, w.size)).copy()

    return DisturbanceModel(DisturbanceKind.CONSTANT, w.size, sampler,
                            bound=float(np.linalg.norm(w)),
                            params={"wstar": w.tolist()})


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulated run.

    ``x`` holds ``horizon + 1`` states x(0), ..., x(horizon); the per-step
    arrays ``v``, ``l``, ``xi`` and ``w`` hold entries for t = 0 .. horizon-1.
    """

    x: np.ndarray
    v: np.ndarray
    l: np.ndarray
    xi: np.ndarray
    w: np.ndarray
    seed: int
    run_index: int = 0

    def __post_init__(self):
        x = _frozen_array(self.x, "x", 2)
        horizon = x.shape[0] - 1
        v = _frozen_array(self.v, "v", 1)
        xi = _frozen_array(self.xi, "xi", 1)
        w = _frozen_array(np.reshape(self.w, (horizon, x.shape[1])), "w", 2)
        l = np.array(self.l, dtype=np.int8)
        if not np.all((l == 0) | (l == 1)):
            raise ModelError("failure indicators must be 0 or 1")
        l.setflags(write=False)
        for name, arr in (("v", v), ("l", l), ("xi", xi)):
            if arr.shape != (horizon,):
                raise ModelError(f"{name} must have {horizon} entries, got {arr.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "w", w)

    @property
    def horizon(self) -> int:
        return self.v.shape[0]

    @property
    def steps(self):
        """Per-step records ``(t, x(t), v, l, xi, w)``."""
        return [(t, self.x[t], self.v[t], int(self.l[t]), self.xi[t], self.w[t])
                for t in range(self.horizon)]

    def replay(self, plant: PlantModel) -> np.ndarray:
        """Recompute every x(t+1) from the recorded x(t), l(t) and w(t)."""
        BK = plant.B @ plant.K
        out = np.empty_like(self.x)
        out[0] = self.x[0]
        for t in range(self.horizon):
            xt = self.x[t]
            out[t + 1] = plant.A @ xt + (1 - self.l[t]) * (BK @ xt) + self.w[t]
        return out
