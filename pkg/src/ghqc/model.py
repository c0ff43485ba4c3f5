"""Lognormal dynamics on a discrete time grid and the log-asset space grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

Param = Union[float, Sequence[float], Callable[[float], float]]


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2 or t[0] != 0.0:
            raise ValueError("time grid must start at 0 and have at least one step")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def maturity(self) -> float:
        return float(self.times[-1])

    @classmethod
    def uniform(cls, maturity: float, n_steps: int) -> "TimeGrid":
        return cls(np.linspace(0.0, maturity, n_steps + 1))

    @classmethod
    def from_dates(cls, dates: Sequence[float], steps_per_date: int = 1) -> tuple["TimeGrid", np.ndarray]:
        """Subdivide each interval between consecutive dates into equal steps.

        Returns the grid and the time indices of the dates.
        """
        d = np.asarray(dates, dtype=float)
        if len(d) == 0 or d[0] <= 0.0 or np.any(np.diff(d) <= 0.0):
            raise ValueError("dates must be positive and strictly increasing")
        if steps_per_date < 1:
            raise ValueError("steps_per_date must be >= 1")
        knots = np.concatenate([[0.0], d])
        pieces = [np.linspace(a, b, steps_per_date + 1)[:-1] for a, b in zip(knots[:-1], knots[1:])]
        times = np.concatenate(pieces + [d[-1:]])
        idx = np.arange(1, len(d) + 1) * steps_per_date
        return cls(times), idx


@dataclass(frozen=True)
class MarketParams:
    """Per-step drift, discount rate and volatility (piecewise constant).

    ``mu[n-1]`` applies on (t_{n-1}, t_n]; likewise ``r`` and ``sigma``.
    ``fee`` is an annual charge subtracted from the drift (annuity accounts).
    """

    mu: np.ndarray
    r: np.ndarray
    sigma: np.ndarray
    fee: float = 0.0

    def __post_init__(self):
        mu, r, sigma = (np.asarray(a, dtype=float) for a in (self.mu, self.r, self.sigma))
        if not (mu.shape == r.shape == sigma.shape) or mu.ndim != 1:
            raise ValueError("mu, r and sigma must have one entry per time step")
        if np.any(sigma <= 0.0):
            raise ValueError("volatility must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n_steps(self) -> int:
        return len(self.mu)

    @classmethod
    def on_grid(cls, grid: TimeGrid, mu: Param, r: Param, sigma: Param, fee: float = 0.0) -> "MarketParams":
        """Sample scalars, per-step sequences or functions of time on the grid.

        Functions are evaluated at the midpoint of each step.
        """
        mid = 0.5 * (grid.times[1:] + grid.times[:-1])

        def sample(p):
            if callable(p):
                return np.array([float(p(t)) for t in mid])
            a = np.asarray(p, dtype=float)
            if a.ndim == 0:
                return np.full(grid.n_steps, float(a))
            if a.shape != (grid.n_steps,):
                raise ValueError(f"expected {grid.n_steps} per-step values, got {a.shape}")
            return a

        return cls(sample(mu), sample(r), sample(sigma), fee)


@dataclass(frozen=True)
class StepTransition:
    nu: float
    tau: float
    disc: float


def transition(params: MarketParams, grid: TimeGrid, n: int) -> StepTransition:
    """Log-drift, log-volatility and discount factor over (t_{n-1}, t_n]."""
    if not 1 <= n <= grid.n_steps:
        raise IndexError(f"step index {n} outside 1..{grid.n_steps}")
    dt = grid.times[n] - grid.times[n - 1]
    mu = params.mu[n - 1] - params.fee
    sig = params.sigma[n - 1]
    return StepTransition((mu - 0.5 * sig * sig) * dt, sig * math.sqrt(dt), math.exp(-params.r[n - 1] * dt))


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid in X = ln(S / spot)."""

    spot: float
    x_min: float
    x_max: float
    m: int

    def __post_init__(self):
        if self.m < 4:
            raise ValueError("need at least 4 space intervals")
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be below x_max")
        if self.spot <= 0.0:
            raise ValueError("spot must be positive")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.m

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.m + 1)

    @property
    def s(self) -> np.ndarray:
        return self.spot * np.exp(self.x)

    def key(self) -> tuple:
        return (self.spot, self.x_min, self.x_max, self.m)


def build_grid(spot: float, params: MarketParams, time_grid: TimeGrid, m: int,
               width: float = 3.0) -> SpatialGrid:
    """Log-asset grid covering `width` standard deviations around the spot and
    around the expected log-price at maturity.

    With time-varying parameters the total drift sum(nu_n) and total variance
    sum(tau_n^2) replace nu*T and sigma^2*T.
    """
    if width <= 0.0:
        raise ValueError("width must be positive")
    if params.n_steps != time_grid.n_steps:
        raise ValueError("market parameters do not match the time grid")
    dt = time_grid.dt
    sig = params.sigma
    if np.any(sig <= 0.0):
        raise ValueError("volatility must be positive")
    drift = float(np.sum((params.mu - params.fee - 0.5 * sig * sig) * dt))
    sd = float(math.sqrt(np.sum(sig * sig * dt)))
    x_max = max(drift + width * sd, width * sd)
    x_min = min(drift - width * sd, -width * sd)
    return SpatialGrid(float(spot), x_min, x_max, int(m))
