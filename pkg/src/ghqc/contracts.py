"""Contract definitions, terminal payoffs and the per-date update rules.

Value arrays keep the asset axis last. Path-dependent contracts carry a
surface of shape (n_levels, M+1): one row per level of the auxiliary state
(running average, accrued coupons or remaining guarantee).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .model import SpatialGrid
from .spline import stencil


class ExerciseStyle(str, Enum):
    EUROPEAN = "european"
    BERMUDAN = "bermudan"
    AMERICAN = "american"


class Monitoring(str, Enum):
    DISCRETE = "discrete"
    CONTINUOUS_SINGLE = "continuous_single"
    CONTINUOUS_DOUBLE = "continuous_double"


class Knockout(str, Enum):
    FULL_GAIN = "full"
    NO_GAIN = "none"
    PART_GAIN = "part"


class GmwbMode(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


def _sign(phi: int) -> int:
    if phi not in (1, -1):
        raise ValueError("phi must be +1 (call) or -1 (put)")
    return phi


def _dates(dates: Sequence[float], name: str) -> tuple:
    d = tuple(float(t) for t in dates)
    if not d or d[0] <= 0.0 or any(b <= a for a, b in zip(d, d[1:])):
        raise ValueError(f"{name} must be positive and strictly increasing")
    return d


@dataclass(frozen=True)
class VanillaSpec:
    strike: float
    phi: int
    maturity: float
    style: ExerciseStyle = ExerciseStyle.EUROPEAN
    exercise_dates: tuple = ()

    def __post_init__(self):
        if self.strike <= 0.0:
            raise ValueError("strike must be positive")
        _sign(self.phi)
        if self.maturity <= 0.0:
            raise ValueError("maturity must be positive")
        object.__setattr__(self, "style", ExerciseStyle(self.style))
        if self.style is ExerciseStyle.BERMUDAN:
            d = _dates(self.exercise_dates, "exercise dates")
            if d[-1] > self.maturity + 1e-12:
                raise ValueError("exercise dates beyond maturity")
            object.__setattr__(self, "exercise_dates", d)

    @classmethod
    def bermudan(cls, strike, phi, maturity, per_year: int):
        n = int(round(per_year * maturity))
        return cls(strike, phi, maturity, ExerciseStyle.BERMUDAN, tuple(np.arange(1, n + 1) / per_year))


@dataclass(frozen=True)
class BarrierSpec:
    """Knock-out option. ``lower``/``upper`` are scalars or one value per period
    between consecutive monitoring dates; use -inf/inf for one-sided barriers."""

    strike: float
    phi: int
    monitoring_dates: tuple
    lower: object = -math.inf
    upper: object = math.inf
    monitoring: Monitoring = Monitoring.DISCRETE

    def __post_init__(self):
        _sign(self.phi)
        d = _dates(self.monitoring_dates, "monitoring dates")
        object.__setattr__(self, "monitoring_dates", d)
        object.__setattr__(self, "monitoring", Monitoring(self.monitoring))
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (len(d),)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (len(d),)).copy()
        if np.any(lo >= hi):
            raise ValueError("lower barrier must be below upper barrier")
        if self.monitoring is Monitoring.CONTINUOUS_SINGLE and np.any(np.isfinite(lo) & np.isfinite(hi)):
            raise ValueError("single-barrier monitoring needs one infinite side")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def maturity(self) -> float:
        return self.monitoring_dates[-1]

    def band(self, period: int) -> tuple[float, float]:
        """Barriers on (t_{k-1}, t_k] for monitoring period k (1-based)."""
        return float(self.lower[period - 1]), float(self.upper[period - 1])


@dataclass(frozen=True)
class AsianSpec:
    """Arithmetic average over the fixing dates, floating strike by default.

    ``fixed_strike`` switches to max(0, phi (A - K)).
    """

    phi: int
    fixing_dates: tuple
    fixed_strike: Optional[float] = None

    def __post_init__(self):
        _sign(self.phi)
        object.__setattr__(self, "fixing_dates", _dates(self.fixing_dates, "fixing dates"))

    @property
    def maturity(self) -> float:
        return self.fixing_dates[-1]


@dataclass(frozen=True)
class TarnSpec:
    strike: float
    phi: int
    target: float
    knockout: Knockout
    fixing_dates: tuple

    def __post_init__(self):
        _sign(self.phi)
        if self.target <= 0.0:
            raise ValueError("target must be positive")
        object.__setattr__(self, "knockout", Knockout(self.knockout))
        object.__setattr__(self, "fixing_dates", _dates(self.fixing_dates, "fixing dates"))

    @property
    def maturity(self) -> float:
        return self.fixing_dates[-1]


@dataclass(frozen=True)
class GmwbSpec:
    """Withdrawal guarantee on a premium invested in the asset.

    ``withdrawal`` is the contractual amount G per date; in static mode the
    withdrawals must return the premium exactly.
    """

    premium: float
    withdrawal_dates: tuple
    withdrawal: float
    penalty: float = 0.0
    fee: float = 0.0
    mode: GmwbMode = GmwbMode.STATIC

    def __post_init__(self):
        object.__setattr__(self, "withdrawal_dates", _dates(self.withdrawal_dates, "withdrawal dates"))
        object.__setattr__(self, "mode", GmwbMode(self.mode))
        if not 0.0 <= self.penalty <= 1.0:
            raise ValueError("penalty must lie in [0, 1]")
        if self.premium <= 0.0 or self.withdrawal <= 0.0:
            raise ValueError("premium and withdrawal must be positive")
        total = self.withdrawal * len(self.withdrawal_dates)
        if self.mode is GmwbMode.STATIC and abs(total - self.premium) > 1e-9 * self.premium:
            raise ValueError(f"static withdrawals sum to {total}, premium is {self.premium}")

    @property
    def maturity(self) -> float:
        return self.withdrawal_dates[-1]

    def net_cash(self, gamma):
        """Cash received for a withdrawal gamma after the excess penalty."""
        g = np.asarray(gamma, dtype=float)
        excess = np.maximum(g - self.withdrawal, 0.0)
        return g - self.penalty * excess


@dataclass(frozen=True)
class AuxGrid:
    levels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.levels, dtype=float)
        if a.ndim != 1 or len(a) < 4 or np.any(np.diff(a) <= 0.0):
            raise ValueError("aux grid needs at least 4 ascending levels")
        object.__setattr__(self, "levels", a)

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int) -> "AuxGrid":
        return cls(np.linspace(lo, hi, n + 1))

    @property
    def step(self) -> float:
        return float(self.levels[1] - self.levels[0])

    def __len__(self) -> int:
        return len(self.levels)


@dataclass
class JumpDiagnostics:
    clamped: int = 0
    extra: dict = field(default_factory=dict)


def interp_levels(surface: np.ndarray, aux: AuxGrid, targets) -> np.ndarray:
    """Evaluate, column by column, the aux-axis spline at ``targets``.

    ``targets`` broadcasts against ``surface`` (levels, M+1); entry [a, m] is
    the level at which column m is read.
    """
    t = np.broadcast_to(np.asarray(targets, dtype=float), surface.shape)
    idx, w = stencil(aux.levels[0], aux.step, len(aux), t)
    cols = np.arange(surface.shape[1])[None, :, None]
    vals = surface[idx, cols]
    # limit to the stencil range so kinks cannot create new extrema
    return np.clip(np.sum(w * vals, axis=-1), vals.min(axis=-1), vals.max(axis=-1))


def terminal_payoff(spec, grid: SpatialGrid, aux: Optional[AuxGrid] = None):
    s = grid.s
    if isinstance(spec, (VanillaSpec, BarrierSpec)):
        return np.maximum(0.0, spec.phi * (s - spec.strike))
    if aux is None:
        raise ValueError(f"{type(spec).__name__} needs an aux grid")
    a = aux.levels[:, None]
    if isinstance(spec, AsianSpec):
        if spec.fixed_strike is not None:
            return np.broadcast_to(np.maximum(0.0, spec.phi * (a - spec.fixed_strike)), (len(aux), grid.m + 1)).copy()
        return np.maximum(0.0, spec.phi * (s[None, :] - a))
    if isinstance(spec, TarnSpec):
        return np.zeros((len(aux), grid.m + 1))
    if isinstance(spec, GmwbSpec):
        if spec.mode is GmwbMode.STATIC:
            return np.maximum(s[None, :], a)
        return np.maximum(s[None, :], spec.net_cash(a))
    raise TypeError(f"unsupported contract {type(spec).__name__}")


def intrinsic(spec: VanillaSpec, grid: SpatialGrid) -> np.ndarray:
    return np.maximum(0.0, spec.phi * (grid.s - spec.strike))


def exercise_update(cont, spec: VanillaSpec, grid: SpatialGrid) -> np.ndarray:
    return np.maximum(cont, intrinsic(spec, grid))


def no_hit_single(s, s2, barrier, sigma, dt):
    """Probability that a lognormal bridge from s to s2 over dt avoids ``barrier``."""
    s, s2 = np.asarray(s, dtype=float), np.asarray(s2, dtype=float)
    a = np.log(s / barrier)
    b = np.log(s2 / barrier)
    same_side = a * b > 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        p = 1.0 - np.exp(-2.0 * a * b / (sigma * sigma * dt))
    return np.clip(np.where(same_side, p, 0.0), 0.0, 1.0)


def no_hit_double(s, s2, lower, upper, sigma, dt, tol: float = 1e-12, max_terms: int = 50,
                  return_converged: bool = False):
    """Probability that a lognormal bridge stays strictly inside (lower, upper).

    Image series summed until the last added term drops below ``tol``.
    """
    s, s2 = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(s2, dtype=float))
    inside = (s > lower) & (s < upper) & (s2 > lower) & (s2 < upper)
    ss = np.where(inside, s, math.sqrt(lower * upper))
    ss2 = np.where(inside, s2, math.sqrt(lower * upper))
    x = np.log(ss2 / ss)
    alpha = 2.0 * math.log(upper / lower)
    beta = 2.0 * np.log(upper / ss)
    gamma = 2.0 * np.log(ss / lower)
    var2 = 2.0 * sigma * sigma * dt

    def r(z):
        return np.exp(-z * (z - 2.0 * x) / var2)

    total = np.ones_like(x)
    converged = False
    for m in range(1, max_terms + 1):
        am = alpha * m
        term = -(r(am - gamma) + r(beta - am)) + (r(am) + r(-am))
        total += term
        biggest = np.max(np.abs(r(am - gamma)) + np.abs(r(beta - am)) + np.abs(r(am)) + np.abs(r(-am))) if x.size else 0.0
        if biggest < tol:
            converged = True
            break
    p = np.clip(np.where(inside, total, 0.0), 0.0, 1.0)
    if return_converged:
        return p, converged
    return p


def barrier_step_weight(monitoring: Monitoring, s, s2, lower: float, upper: float, sigma: float, dt: float):
    """Survival multiplier for a step from s to s2 (both must be inside the band)."""
    s, s2 = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(s2, dtype=float))
    inside = (s > lower) & (s < upper) & (s2 > lower) & (s2 < upper)
    monitoring = Monitoring(monitoring)
    if monitoring is Monitoring.DISCRETE:
        return inside.astype(float)
    if monitoring is Monitoring.CONTINUOUS_SINGLE:
        b = lower if math.isfinite(lower) else upper
        return np.where(inside, no_hit_single(s, s2, b, sigma, dt), 0.0)
    return no_hit_double(s, s2, lower, upper, sigma, dt)


def asian_jump(surface: np.ndarray, aux: AuxGrid, grid: SpatialGrid, count: int,
               diag: Optional[JumpDiagnostics] = None) -> np.ndarray:
    """Average update across the ``count``-th fixing: A -> A + (S - A) / count."""
    if count < 1:
        raise ValueError("fixing count starts at 1")
    a = aux.levels[:, None]
    target = a + (grid.s[None, :] - a) / count
    lo, hi = aux.levels[0], aux.levels[-1]
    if diag is not None:
        diag.clamped += int(np.count_nonzero((target < lo) | (target > hi)))
    return interp_levels(surface, aux, np.clip(target, lo, hi))


def asian_final(spec: AsianSpec, aux: AuxGrid, grid: SpatialGrid, count: int) -> np.ndarray:
    """Payoff just before the last fixing, at the exact post-fixing average.

    Equivalent to the terminal payoff followed by asian_jump, without
    interpolating the payoff kink across aux levels.
    """
    if count < 1:
        raise ValueError("fixing count starts at 1")
    a = aux.levels[:, None]
    avg = a + (grid.s[None, :] - a) / count
    if spec.fixed_strike is not None:
        return np.maximum(0.0, spec.phi * (avg - spec.fixed_strike))
    return np.maximum(0.0, spec.phi * (grid.s[None, :] - avg))


def tarn_coupon(spec: TarnSpec, grid: SpatialGrid) -> np.ndarray:
    return np.maximum(0.0, spec.phi * (grid.s - spec.strike))


def tarn_jump(surface: np.ndarray, aux: AuxGrid, grid: SpatialGrid, spec: TarnSpec) -> np.ndarray:
    """Coupon payment on a fixing date, with knockout once the target is reached.

    The top level stands for accruals just below the target, so a zero coupon
    there keeps the contract alive.
    """
    c = tarn_coupon(spec, grid)[None, :]
    a = aux.levels[:, None]
    new_a = a + c
    alive = (new_a < spec.target) | (c <= 0.0)
    cont = interp_levels(surface, aux, np.clip(new_a, aux.levels[0], aux.levels[-1])) + c
    if spec.knockout is Knockout.FULL_GAIN:
        dead = np.broadcast_to(c, new_a.shape)
    elif spec.knockout is Knockout.NO_GAIN:
        dead = np.zeros(new_a.shape)
    else:
        dead = np.broadcast_to(np.maximum(spec.target - a, 0.0), new_a.shape)
    return np.where(alive, cont, dead)


def shift_account(surface: np.ndarray, zero_row: np.ndarray, grid: SpatialGrid, amount: float) -> np.ndarray:
    """Read every row at the account value max(W - amount, 0).

    Accounts that fall below the grid are interpolated linearly in W between
    the zero-account values and the bottom node.
    """
    w = grid.s
    w_new = np.maximum(w - amount, 0.0)
    out = np.empty_like(surface)
    on_grid = w_new >= w[0]
    if np.any(on_grid):
        x_new = np.log(w_new[on_grid] / grid.spot)
        idx, lw = stencil(grid.x_min, grid.dx, grid.m + 1, x_new)
        vals = surface[:, idx]
        out[:, on_grid] = np.clip(np.sum(lw[None, :, :] * vals, axis=-1), vals.min(axis=-1), vals.max(axis=-1))
    below = ~on_grid
    if np.any(below):
        frac = w_new[below] / w[0]
        out[:, below] = zero_row[:, None] * (1.0 - frac)[None, :] + surface[:, :1] * frac[None, :]
    return out


def gmwb_jump(surface: np.ndarray, zero_row: np.ndarray, aux: AuxGrid, grid: SpatialGrid,
              spec: GmwbSpec) -> tuple[np.ndarray, np.ndarray]:
    """Withdrawal on one date. Returns the pre-withdrawal surface and zero-account row.

    Static: withdraw min(G, A). Dynamic: maximise over withdrawals that land on
    aux levels (plus G itself) of continuation + net cash.
    """
    levels = aux.levels
    g = spec.withdrawal
    if spec.mode is GmwbMode.STATIC:
        out = np.empty_like(surface)
        z_out = np.empty_like(zero_row)
        gammas = np.minimum(g, levels)
        for gamma in np.unique(gammas):
            rows = gammas == gamma
            shifted = shift_account(surface, zero_row, grid, gamma)
            target = np.maximum(levels - gamma, levels[0])[:, None]
            out[rows] = interp_levels(shifted, aux, target)[rows] + gamma
            z_out[rows] = _interp_row(zero_row, aux, levels - gamma)[rows] + gamma
        return out, z_out

    step = aux.step
    candidates = np.concatenate([np.arange(len(aux)) * step, [g]])
    best = np.full(surface.shape, -np.inf)
    z_best = np.full(zero_row.shape, -np.inf)
    for gamma in np.unique(candidates):
        target = levels - gamma
        ok = target >= levels[0] - 1e-12 * max(1.0, levels[-1])
        if not np.any(ok):
            continue
        target = np.maximum(target, levels[0])
        cash = float(spec.net_cash(gamma))
        shifted = shift_account(surface, zero_row, grid, gamma)
        val = interp_levels(shifted, aux, target[:, None]) + cash
        best = np.where(ok[:, None], np.maximum(best, val), best)
        zv = _interp_row(zero_row, aux, target) + cash
        z_best = np.where(ok, np.maximum(z_best, zv), z_best)
    return best, z_best


def _interp_row(row: np.ndarray, aux: AuxGrid, targets) -> np.ndarray:
    idx, w = stencil(aux.levels[0], aux.step, len(aux), np.asarray(targets, dtype=float))
    vals = row[idx]
    return np.clip(np.sum(w * vals, axis=-1), vals.min(axis=-1), vals.max(axis=-1))
