"""Monte Carlo with exact lognormal steps between contract dates.

Paths are generated in fixed-size batches. Each batch draws from its own
PCG64 stream spawned from the seed, so results depend only on the config.
Normals come from the inverse CDF of uniforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .. import contracts as c
from ..model import MarketParams, TimeGrid

_MAX_CELLS = 20_000_000


@dataclass(frozen=True)
class McConfig:
    paths: int = 100_000
    seed: int = 20240101
    antithetic: bool = True
    substeps: int = 1
    bridge: bool = True
    batch: int = 50_000

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("need at least one path")
        if self.antithetic and self.paths < 2:
            raise ValueError("antithetic sampling needs at least two paths")
        if self.substeps < 1 or self.batch < 1:
            raise ValueError("substeps and batch must be positive")


def _dates(contract):
    if isinstance(contract, c.VanillaSpec):
        if contract.style is not c.ExerciseStyle.EUROPEAN:
            raise ValueError("Monte Carlo oracle does not handle early exercise")
        return (contract.maturity,)
    if isinstance(contract, c.BarrierSpec):
        return contract.monitoring_dates
    if isinstance(contract, c.GmwbSpec):
        if contract.mode is not c.GmwbMode.STATIC:
            raise ValueError("Monte Carlo oracle handles static withdrawals only")
        return contract.withdrawal_dates
    return contract.fixing_dates


class _Paths:
    def __init__(self, s, grid: TimeGrid, date_idx, params: MarketParams):
        self.s = s                     # (paths, n_steps + 1)
        self.grid = grid
        self.date_idx = date_idx
        self.params = params
        self.discount = np.exp(-np.concatenate([[0.0], np.cumsum(params.r * grid.dt)]))

    def at_dates(self):
        return self.s[:, self.date_idx]


def _payoff(contract, p: _Paths, cfg: McConfig) -> np.ndarray:
    s = p.s
    disc = p.discount
    if isinstance(contract, c.VanillaSpec):
        return disc[-1] * np.maximum(0.0, contract.phi * (s[:, -1] - contract.strike))

    if isinstance(contract, c.BarrierSpec):
        alive = np.ones(len(s))
        if contract.monitoring is c.Monitoring.DISCRETE:
            for k, i in enumerate(p.date_idx, start=1):
                lo, hi = contract.band(k)
                alive *= (s[:, i] > lo) & (s[:, i] < hi)
        else:
            period = np.searchsorted(p.date_idx, np.arange(1, p.grid.n_steps + 1)) + 1
            mode = contract.monitoring if cfg.bridge else c.Monitoring.DISCRETE
            for n in range(1, p.grid.n_steps + 1):
                lo, hi = contract.band(int(period[n - 1]))
                alive *= c.barrier_step_weight(mode, s[:, n - 1], s[:, n], lo, hi,
                                               p.params.sigma[n - 1], p.grid.dt[n - 1])
        return alive * disc[-1] * np.maximum(0.0, contract.phi * (s[:, -1] - contract.strike))

    if isinstance(contract, c.AsianSpec):
        avg = p.at_dates().mean(axis=1)
        ref = avg if contract.fixed_strike is None else contract.fixed_strike
        und = s[:, -1] if contract.fixed_strike is None else avg
        return disc[-1] * np.maximum(0.0, contract.phi * (und - ref))

    if isinstance(contract, c.TarnSpec):
        accrued = np.zeros(len(s))
        alive = np.ones(len(s), dtype=bool)
        total = np.zeros(len(s))
        for i in p.date_idx:
            cpn = np.maximum(0.0, contract.phi * (s[:, i] - contract.strike))
            breach = alive & (accrued + cpn >= contract.target) & (cpn > 0.0)
            keep = alive & ~breach
            if contract.knockout is c.Knockout.FULL_GAIN:
                last = cpn
            elif contract.knockout is c.Knockout.NO_GAIN:
                last = np.zeros_like(cpn)
            else:
                last = contract.target - accrued
            total += disc[i] * (np.where(keep, cpn, 0.0) + np.where(breach, last, 0.0))
            accrued += np.where(keep, cpn, 0.0)
            alive = keep
        return total

    if isinstance(contract, c.GmwbSpec):
        growth = s[:, p.date_idx] / s[:, np.concatenate([[0], p.date_idx[:-1]])]
        w = np.full(len(s), contract.premium)
        a = np.full(len(s), contract.premium)
        total = np.zeros(len(s))
        for k, i in enumerate(p.date_idx):
            w = w * growth[:, k]
            if k == len(p.date_idx) - 1:
                total += disc[i] * np.maximum(w, a)
            else:
                gamma = np.minimum(contract.withdrawal, a)
                total += disc[i] * gamma
                w = np.maximum(w - gamma, 0.0)
                a = a - gamma
        return total

    raise TypeError(f"unsupported contract {type(contract).__name__}")


def mc_price(contract, market, spot: float, cfg: McConfig = McConfig()) -> tuple[float, float]:
    """Mean discounted payoff and its standard error.

    ``market`` needs ``r``, ``sigma`` and optional ``mu`` attributes (scalars,
    per-step sequences or functions of time). For GMWB contracts the account
    starts at the premium and ``spot`` is ignored.
    """
    dates = _dates(contract)
    grid, date_idx = TimeGrid.from_dates(dates, cfg.substeps)
    fee = contract.fee if isinstance(contract, c.GmwbSpec) else 0.0
    mu = market.r if getattr(market, "mu", None) is None else market.mu
    params = MarketParams.on_grid(grid, mu, market.r, market.sigma, fee)
    nu = (params.mu - params.fee - 0.5 * params.sigma ** 2) * grid.dt
    tau = params.sigma * np.sqrt(grid.dt)
    s0 = contract.premium if isinstance(contract, c.GmwbSpec) else float(spot)

    draws = cfg.paths // 2 if cfg.antithetic else cfg.paths
    per_batch = max(1, min(cfg.batch, _MAX_CELLS // grid.n_steps))
    n_batches = math.ceil(draws / per_batch)
    streams = np.random.SeedSequence(cfg.seed).spawn(n_batches)
    samples = []
    for b, ss in enumerate(streams):
        size = min(per_batch, draws - b * per_batch)
        rng = np.random.Generator(np.random.PCG64(ss))
        z = ndtri(rng.random((size, grid.n_steps)))
        signs = (1.0, -1.0) if cfg.antithetic else (1.0,)
        vals = []
        for sg in signs:
            x = np.cumsum(nu + tau * (sg * z), axis=1)
            s = s0 * np.exp(np.concatenate([np.zeros((size, 1)), x], axis=1))
            vals.append(_payoff(contract, _Paths(s, grid, date_idx, params), cfg))
        samples.append(np.mean(vals, axis=0))
    y = np.concatenate(samples)
    se = float(np.std(y, ddof=1) / math.sqrt(len(y))) if len(y) > 1 else 0.0
    return float(np.mean(y)), se
