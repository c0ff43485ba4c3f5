"""Backward-induction drivers for every contract kind.

Each pricer lays out a time grid whose nodes include all contract dates,
rolls the value (vector or surface) back one step at a time and applies the
contract's update on its dates. The stepping backend is pluggable: GHQC with
the sparse fast-spline operator, GHQC with a full spline, GHQC with
moment-matched weights, or Crank-Nicolson.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import contracts as c
from .engine import OperatorCache, quadrature_weights, step_direct
from .model import MarketParams, Param, SpatialGrid, TimeGrid, build_grid, transition
from .quadrature import generate_rule
from .spline import SplineMode, fit

log = logging.getLogger(__name__)

Contract = Union[c.VanillaSpec, c.BarrierSpec, c.AsianSpec, c.TarnSpec, c.GmwbSpec]

METHODS = ("ghqc", "ghqc-m", "fd")


@dataclass(frozen=True)
class Market:
    spot: float
    r: Param
    sigma: Param
    mu: Optional[Param] = None   # defaults to r

    def params(self, grid: TimeGrid, fee: float = 0.0) -> MarketParams:
        return MarketParams.on_grid(grid, self.r if self.mu is None else self.mu, self.r, self.sigma, fee)


@dataclass(frozen=True)
class Discretization:
    m: int = 200
    q: int = 5
    n_steps: Optional[int] = None
    steps_per_date: int = 1
    n_aux: int = 50
    width: float = 3.0
    spline: SplineMode = SplineMode.FAST
    method: str = "ghqc"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        object.__setattr__(self, "spline", SplineMode(self.spline))
        if self.m < 4:
            raise ValueError("need at least 4 space intervals")
        if self.steps_per_date < 1:
            raise ValueError("steps_per_date must be >= 1")


@dataclass(frozen=True)
class PricingRequest:
    contract: Contract
    market: Market
    disc: Discretization = Discretization()
    spots: tuple = ()


@dataclass
class PricingResult:
    price: float
    prices: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    elapsed: float = 0.0


def _time_grid(dates: Sequence[float], disc: Discretization) -> tuple[TimeGrid, np.ndarray]:
    spd = disc.steps_per_date
    if disc.n_steps is not None:
        if disc.n_steps % len(dates):
            raise ValueError(f"n_steps={disc.n_steps} is not a multiple of the {len(dates)} contract dates")
        spd = disc.n_steps // len(dates)
    return TimeGrid.from_dates(dates, spd)


class _Stepper:
    """Maps values at t_n to discounted continuation values at t_{n-1}."""

    def __init__(self, grid: SpatialGrid, params: MarketParams, times: TimeGrid, disc: Discretization,
                 step_weight: Optional[Callable[[int], tuple]] = None):
        self.grid, self.params, self.times, self.disc = grid, params, times, disc
        self.step_weight = step_weight
        if disc.method == "fd":
            if step_weight is not None:
                raise ValueError("barrier bridge weights are not available with the FD backend")
            from .oracles.fd import CrankNicolsonStepper
            self._fd = CrankNicolsonStepper(grid, params, times)
        else:
            self._fd = None
            self.rule = generate_rule(disc.q)
            self.cache = OperatorCache(grid, self.rule, moment_matched=disc.method == "ghqc-m")

    def __call__(self, values: np.ndarray, n: int) -> np.ndarray:
        if self._fd is not None:
            return self._fd(values, n)
        trans = transition(self.params, self.times, n)
        weight, key = self.step_weight(n) if self.step_weight is not None else (None, None)
        if self.disc.spline is SplineMode.FAST:
            return self.cache.get(trans, weight, key).apply(values)
        w = quadrature_weights(self.rule, trans, self.cache.moment_matched)
        return step_direct(values, self.grid, trans, self.rule, SplineMode.FULL, w, weight)


def _readout(values: np.ndarray, grid: SpatialGrid, spots, mode: SplineMode) -> dict:
    spl = fit(grid.x, values, mode if mode is SplineMode.FULL else SplineMode.FAST)
    xs = np.log(np.asarray(spots, dtype=float) / grid.spot)
    return {float(s): float(v) for s, v in zip(spots, spl.eval(xs))}


def _spots(req: PricingRequest) -> tuple:
    return tuple(dict.fromkeys((float(req.market.spot),) + tuple(float(s) for s in req.spots)))


def price_vanilla(req: PricingRequest) -> PricingResult:
    t0 = time.perf_counter()
    spec: c.VanillaSpec = req.contract
    disc = req.disc
    if spec.style is c.ExerciseStyle.BERMUDAN:
        dates = sorted(set(spec.exercise_dates) | {spec.maturity})
    else:
        dates = [spec.maturity]
    times, date_idx = _time_grid(dates, disc)
    params = req.market.params(times)
    grid = build_grid(req.market.spot, params, times, disc.m, disc.width)
    step = _Stepper(grid, params, times, disc)

    if spec.style is c.ExerciseStyle.BERMUDAN:
        ex_times = set(round(t, 12) for t in spec.exercise_dates)
        exercise = {int(i) for i, t in zip(date_idx, dates) if round(t, 12) in ex_times}
    elif spec.style is c.ExerciseStyle.AMERICAN:
        exercise = set(range(times.n_steps + 1))
    else:
        exercise = set()

    payoff = c.intrinsic(spec, grid)
    v = payoff.copy()
    for n in range(times.n_steps, 0, -1):
        v = step(v, n)
        if n - 1 in exercise:
            v = np.maximum(v, payoff)
    prices = _readout(v, grid, _spots(req), disc.spline)
    return PricingResult(prices[float(req.market.spot)], prices,
                         {"operators": len(step.cache) if step._fd is None else 0, "steps": times.n_steps},
                         time.perf_counter() - t0)


def _barrier_grid(spec: c.BarrierSpec, grid: SpatialGrid) -> SpatialGrid:
    """Continuous monitoring: trim the domain to the outermost barriers.

    Discrete monitoring: shift the grid so the first finite barrier falls
    midway between two nodes. The interpolant then smears the knockout jump
    symmetrically and its integral keeps second-order accuracy.
    """
    if spec.monitoring is c.Monitoring.DISCRETE:
        finite = [b for b in np.concatenate([spec.lower, spec.upper]) if math.isfinite(b) and b > 0]
        if not finite:
            return grid
        xb = math.log(finite[0] / grid.spot)
        if not grid.x_min < xb < grid.x_max:
            return grid
        h = grid.dx
        shift = (xb - grid.x_min) / h
        delta = (shift - math.floor(shift) - 0.5) * h
        return SpatialGrid(grid.spot, grid.x_min + delta, grid.x_max + delta, grid.m)
    lo = np.min(spec.lower)
    hi = np.max(spec.upper)
    x_lo = max(grid.x_min, math.log(lo / grid.spot)) if lo > 0 and math.isfinite(lo) else grid.x_min
    x_hi = min(grid.x_max, math.log(hi / grid.spot)) if math.isfinite(hi) else grid.x_max
    return SpatialGrid(grid.spot, x_lo, x_hi, grid.m)


def price_barrier(req: PricingRequest) -> PricingResult:
    t0 = time.perf_counter()
    spec: c.BarrierSpec = req.contract
    disc = req.disc
    dates = list(spec.monitoring_dates)
    times, date_idx = _time_grid(dates, disc)
    params = req.market.params(times)
    grid = _barrier_grid(spec, build_grid(req.market.spot, params, times, disc.m, disc.width))
    period_of_step = np.searchsorted(date_idx, np.arange(1, times.n_steps + 1)) + 1
    continuous = spec.monitoring is not c.Monitoring.DISCRETE
    varying = len(set(zip(spec.lower.tolist(), spec.upper.tolist()))) > 1

    def weight_for(n):
        k = int(period_of_step[n - 1])
        lo, hi = spec.band(k)
        if not math.isfinite(lo) and not math.isfinite(hi):
            return None, None
        sig = params.sigma[n - 1]
        dt = times.times[n] - times.times[n - 1]

        def w(s, s2):
            return c.barrier_step_weight(spec.monitoring, s, s2, lo, hi, sig, dt)

        return w, (k if varying else 0, round(sig, 15), round(dt, 15))

    step = _Stepper(grid, params, times, disc, weight_for if continuous else None)
    s = grid.s
    date_pos = {int(i): k + 1 for k, i in enumerate(date_idx)}

    def knock_out(values, band):
        lo, hi = band
        return np.where((s > lo) & (s < hi), values, 0.0)

    v = knock_out(c.terminal_payoff(spec, grid), spec.band(len(dates)))
    for n in range(times.n_steps, 0, -1):
        v = step(v, n)
        if (n - 1) in date_pos:
            v = knock_out(v, spec.band(date_pos[n - 1]))
        elif continuous:
            v = knock_out(v, spec.band(int(period_of_step[n - 1])))
    prices = _readout(v, grid, _spots(req), disc.spline)
    if continuous:
        lo, hi = spec.band(1)
        prices = {k: (p if lo < k < hi else 0.0) for k, p in prices.items()}
    return PricingResult(prices[float(req.market.spot)], prices, {"steps": times.n_steps},
                         time.perf_counter() - t0)


def price_asian(req: PricingRequest) -> PricingResult:
    t0 = time.perf_counter()
    spec: c.AsianSpec = req.contract
    disc = req.disc
    if disc.n_aux < 20:
        raise ValueError("Asian pricing needs n_aux >= 20")
    dates = list(spec.fixing_dates)
    times, date_idx = _time_grid(dates, disc)
    params = req.market.params(times)
    grid = build_grid(req.market.spot, params, times, disc.m, disc.width)
    s = grid.s
    aux = c.AuxGrid.uniform(float(s[0]), float(s[-1]), disc.n_aux)
    step = _Stepper(grid, params, times, disc)
    diag = c.JumpDiagnostics()
    fix_count = {int(i): k + 1 for k, i in enumerate(date_idx)}

    v = c.asian_final(spec, aux, grid, fix_count[times.n_steps])
    for n in range(times.n_steps, 0, -1):
        v = step(v, n)
        if n - 1 in fix_count:
            v = c.asian_jump(v, aux, grid, fix_count[n - 1], diag)
    # before the first fixing the value does not depend on the average
    row = c.interp_levels(v, aux, np.full(v.shape, float(req.market.spot)))[0]
    prices = _readout(row, grid, _spots(req), disc.spline)
    return PricingResult(prices[float(req.market.spot)], prices, {"clamped": diag.clamped},
                         time.perf_counter() - t0)


def price_tarn(req: PricingRequest) -> PricingResult:
    t0 = time.perf_counter()
    spec: c.TarnSpec = req.contract
    disc = req.disc
    if disc.n_aux < 20:
        raise ValueError("TARN pricing needs n_aux >= 20")
    dates = list(spec.fixing_dates)
    times, date_idx = _time_grid(dates, disc)
    params = req.market.params(times)
    grid = build_grid(req.market.spot, params, times, disc.m, disc.width)
    aux = c.AuxGrid.uniform(0.0, spec.target, disc.n_aux)
    step = _Stepper(grid, params, times, disc)
    fixings = {int(i) for i in date_idx}

    v = c.terminal_payoff(spec, grid, aux)
    v = c.tarn_jump(v, aux, grid, spec)
    for n in range(times.n_steps, 0, -1):
        v = step(v, n)
        if n - 1 in fixings:
            v = c.tarn_jump(v, aux, grid, spec)
    prices = _readout(v[0], grid, _spots(req), disc.spline)
    return PricingResult(prices[float(req.market.spot)], prices, {}, time.perf_counter() - t0)


def price_gmwb(req: PricingRequest, account_floor: float = 1e-4) -> PricingResult:
    """Value of the guarantee plus account, read at W = A = premium.

    The market spot is ignored; the account starts at the premium. The log
    grid reaches down to ``account_floor`` times the premium; below that the
    value is linear in W between the zero-account row and the bottom node.
    """
    t0 = time.perf_counter()
    spec: c.GmwbSpec = req.contract
    disc = req.disc
    dates = list(spec.withdrawal_dates)
    times, date_idx = _time_grid(dates, disc)
    params = req.market.params(times, fee=spec.fee)
    grid = build_grid(spec.premium, params, times, disc.m, disc.width)
    # withdrawals drive the account far below the usual lower boundary
    grid = SpatialGrid(grid.spot, min(grid.x_min, math.log(account_floor)), grid.x_max, grid.m)
    aux = c.AuxGrid.uniform(0.0, spec.premium, disc.n_aux)
    step = _Stepper(grid, params, times, disc)
    withdrawals = {int(i) for i in date_idx[:-1]}

    v = c.terminal_payoff(spec, grid, aux)
    z = aux.levels.copy() if spec.mode is c.GmwbMode.STATIC else spec.net_cash(aux.levels)
    for n in range(times.n_steps, 0, -1):
        v = step(v, n)
        z = z * math.exp(-params.r[n - 1] * (times.times[n] - times.times[n - 1]))
        if n - 1 in withdrawals:
            v, z = c.gmwb_jump(v, z, aux, grid, spec)
    row = v[-1]
    prices = _readout(row, grid, (spec.premium,), disc.spline)
    return PricingResult(prices[float(spec.premium)], prices, {}, time.perf_counter() - t0)


_DISPATCH = {
    c.VanillaSpec: price_vanilla,
    c.BarrierSpec: price_barrier,
    c.AsianSpec: price_asian,
    c.TarnSpec: price_tarn,
    c.GmwbSpec: price_gmwb,
}


def price(req: PricingRequest) -> PricingResult:
    try:
        fn = _DISPATCH[type(req.contract)]
    except KeyError:
        raise TypeError(f"unsupported contract {type(req.contract).__name__}") from None
    res = fn(req)
    log.debug("%s priced %.10g in %.3fs", type(req.contract).__name__, res.price, res.elapsed)
    return res
