import math

import numpy as np
import pytest

from ghqc import contracts as c
from ghqc.cli import reference_table
from ghqc.oracles import McConfig, closed_form_european, mc_price
from ghqc.pricers import Discretization, Market, PricingRequest, price
from ghqc.engine import OperatorCache
from ghqc.model import TimeGrid, build_grid, transition
from ghqc.quadrature import generate_rule
from ghqc.spline import SplineMode

TARN_DATES = tuple((k + 1) * 30.0 / 365.0 for k in range(20))
MONTHLY = tuple((k + 1) / 12.0 for k in range(12))
TABLE1 = Discretization(m=200, q=5, steps_per_date=5)
TABLE3 = Discretization(m=500, q=6, steps_per_date=15, n_aux=50)


def value(spec, market, disc=Discretization(), spots=()):
    return price(PricingRequest(spec, market, disc, spots))


# ---------------------------------------------------------------- discretization

def test_discretization_validation():
    with pytest.raises(ValueError):
        Discretization(method="pde")
    with pytest.raises(ValueError):
        Discretization(m=2)
    with pytest.raises(ValueError):
        Discretization(steps_per_date=0)
    spec = c.VanillaSpec.bermudan(40.0, -1, 1.0, 50)
    with pytest.raises(ValueError):
        value(spec, Market(36.0, 0.06, 0.2), Discretization(n_steps=251))
    with pytest.raises(ValueError):
        value(c.AsianSpec(1, MONTHLY), Market(100.0, 0.05, 0.2), Discretization(n_aux=10))


def test_unknown_contract_type():
    with pytest.raises(TypeError):
        value(object(), Market(100.0, 0.05, 0.2))


# ---------------------------------------------------------------------- vanilla

@pytest.mark.parametrize("spot,sigma,mat,printed", [(36.0, 0.2, 1.0, 4.4779), (44.0, 0.4, 2.0, 5.6411)])
def test_bermudan_examples(spot, sigma, mat, printed):
    got = value(c.VanillaSpec.bermudan(40.0, -1, mat, 50), Market(spot, 0.06, sigma), TABLE1).price
    # printed to four decimals; the rounding check lives in the acceptance suite
    assert got == pytest.approx(printed, abs=5e-4)


def test_american_example():
    spec = c.VanillaSpec(100.0, -1, 3.0, c.ExerciseStyle.AMERICAN)
    got = value(spec, Market(100.0, 0.07, 0.4, 0.04), Discretization(m=500, q=16, steps_per_date=9000)).price
    assert got == pytest.approx(20.7932, abs=5e-4)


def test_exercise_ordering_and_spot_monotonicity():
    mkt = Market(40.0, 0.06, 0.2)
    disc = Discretization(m=200, q=5, n_steps=250)
    eu = value(c.VanillaSpec(40.0, -1, 1.0), mkt, disc).price
    be = value(c.VanillaSpec.bermudan(40.0, -1, 1.0, 50), mkt, disc).price
    am = value(c.VanillaSpec(40.0, -1, 1.0, c.ExerciseStyle.AMERICAN), mkt, disc).price
    assert am >= be >= eu
    spots = (36.0, 38.0, 40.0, 42.0, 44.0)
    res = value(c.VanillaSpec.bermudan(40.0, -1, 1.0, 50), mkt, disc, spots)
    puts = [res.prices[s] for s in spots]
    assert all(np.diff(puts) < 0)
    calls = value(c.VanillaSpec(40.0, 1, 1.0), mkt, disc, spots)
    assert all(np.diff([calls.prices[s] for s in spots]) > 0)


def test_multi_spot_readout_matches_single_runs():
    spec = c.VanillaSpec.bermudan(40.0, -1, 1.0, 50)
    multi = value(spec, Market(40.0, 0.06, 0.2), TABLE1, (36.0, 44.0))
    assert multi.price == multi.prices[40.0]
    assert set(multi.prices) == {36.0, 40.0, 44.0}
    # a separate run centres its own grid on the spot, so agreement is to discretization accuracy
    single = value(spec, Market(36.0, 0.06, 0.2), TABLE1).price
    assert multi.prices[36.0] == pytest.approx(single, rel=1e-4)


def test_readout_on_a_node_is_the_node_value():
    spec = c.VanillaSpec(40.0, -1, 1.0)
    mkt = Market(40.0, 0.06, 0.2)
    disc = Discretization(m=200, q=5, n_steps=10)
    times = TimeGrid.uniform(1.0, 10)
    params = mkt.params(times)
    grid = build_grid(40.0, params, times, 200)
    cache = OperatorCache(grid, generate_rule(5))
    v = np.maximum(40.0 - grid.s, 0.0)
    for n in range(10, 0, -1):
        v = cache.get(transition(params, times, n)).apply(v)
    node = 37
    res = value(spec, mkt, disc, (float(grid.s[node]),))
    assert res.prices[float(grid.s[node])] == v[node]


def test_full_spline_mode_agrees_with_fast():
    spec = c.VanillaSpec.bermudan(40.0, -1, 1.0, 50)
    fast = value(spec, Market(36.0, 0.06, 0.2), TABLE1).price
    full = value(spec, Market(36.0, 0.06, 0.2), Discretization(m=200, q=5, steps_per_date=5,
                                                                 spline=SplineMode.FULL)).price
    assert full == pytest.approx(fast, rel=1e-4)


def _refinement_changes(level):
    out = []
    for row in reference_table("table1"):
        spec = c.VanillaSpec.bermudan(40.0, -1, float(row["maturity"]), 50)
        mkt = Market(float(row["spot"]), 0.06, float(row["sigma"]))
        a, b = (value(spec, mkt, Discretization(m=200 * k, q=5, steps_per_date=5 * k)).price
                for k in (level, 2 * level))
        out.append(abs(b / a - 1))
    return np.array(out)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="first doubling moves two out-of-the-money cases by 5.5e-5 and 6.2e-5")
def test_table1_first_refinement_changes_little():
    assert _refinement_changes(1).max() < 5e-5


@pytest.mark.slow
def test_table1_second_refinement_changes_little():
    assert _refinement_changes(2).max() < 5e-5


# ---------------------------------------------------------------------- barrier

def test_infinite_barriers_equal_european():
    disc = Discretization(m=300, q=16, steps_per_date=2)
    mkt = Market(100.0, 0.05, 0.2)
    bar = value(c.BarrierSpec(100.0, 1, MONTHLY), mkt, disc).price
    eu = value(c.VanillaSpec(100.0, 1, 1.0), mkt, Discretization(m=300, q=16, n_steps=24)).price
    assert abs(bar - eu) < 1e-12


def test_discrete_down_and_out_vs_mc():
    mkt = Market(100.0, 0.05, 0.2)
    spec = c.BarrierSpec(100.0, 1, MONTHLY, lower=90.0)
    got = value(spec, mkt, Discretization(m=1000, q=16)).price
    mc, se = mc_price(spec, mkt, 100.0, McConfig(paths=1_000_000))
    assert abs(got - mc) < 3 * se
    assert got <= value(c.VanillaSpec(100.0, 1, 1.0), mkt, Discretization(m=500, q=16, n_steps=120)).price


def test_continuous_single_barrier_vs_mc():
    mkt = Market(100.0, 0.05, 0.2)
    spec = c.BarrierSpec(100.0, 1, MONTHLY, lower=90.0, monitoring="continuous_single")
    got = value(spec, mkt, Discretization(m=400, q=16, steps_per_date=10)).price
    mc, se = mc_price(spec, mkt, 100.0, McConfig(paths=200_000, substeps=10))
    assert abs(got - mc) < 3 * se
    disc_only = value(c.BarrierSpec(100.0, 1, MONTHLY, lower=90.0), mkt, Discretization(m=1000, q=16)).price
    assert got < disc_only


def test_double_barrier_prices_below_single():
    mkt = Market(100.0, 0.05, 0.2)
    disc = Discretization(m=400, q=16, steps_per_date=10)
    single = value(c.BarrierSpec(100.0, 1, MONTHLY, lower=80.0, monitoring="continuous_single"), mkt, disc).price
    double = value(c.BarrierSpec(100.0, 1, MONTHLY, lower=80.0, upper=130.0, monitoring="continuous_double"),
                   mkt, disc).price
    assert 0.0 < double < single


def test_barrier_rejects_fd_backend_for_bridge():
    spec = c.BarrierSpec(100.0, 1, MONTHLY, lower=90.0, monitoring="continuous_single")
    with pytest.raises(ValueError):
        value(spec, Market(100.0, 0.05, 0.2), Discretization(method="fd"))


# ------------------------------------------------------------------------ Asian

def test_single_fixing_asian_is_worthless():
    got = value(c.AsianSpec(1, (1.0,)), Market(100.0, 0.05, 0.2), Discretization(m=300, q=16, steps_per_date=4))
    assert got.price == pytest.approx(0.0, abs=1e-12)


def test_asian_aux_convergence():
    mkt = Market(100.0, 0.05, 0.2)
    a = value(c.AsianSpec(1, MONTHLY), mkt, Discretization(m=300, q=16, steps_per_date=4, n_aux=50)).price
    b = value(c.AsianSpec(1, MONTHLY), mkt, Discretization(m=300, q=16, steps_per_date=4, n_aux=100)).price
    assert abs(b / a - 1) < 1e-4


def test_asian_vs_mc():
    mkt = Market(100.0, 0.05, 0.2)
    spec = c.AsianSpec(1, MONTHLY)
    got = value(spec, mkt, Discretization(m=300, q=16, steps_per_date=4)).price
    mc, se = mc_price(spec, mkt, 100.0, McConfig(paths=200_000))
    assert abs(got - mc) < 3 * se


def test_fixed_strike_asian_below_european():
    mkt = Market(100.0, 0.05, 0.2)
    asian = value(c.AsianSpec(1, MONTHLY, fixed_strike=100.0), mkt, Discretization(m=300, q=16, steps_per_date=4))
    eu = closed_form_european(100.0, 100.0, 1, 0.05, 0.05, 0.2, 1.0)
    assert 0.0 < asian.price < eu


# ------------------------------------------------------------------------- TARN

@pytest.mark.parametrize("knockout,target,printed", [("full", 0.9, 0.67903), ("part", 0.5, 0.38176),
                                                      ("none", 0.3, 0.19549)])
def test_tarn_examples(knockout, target, printed):
    got = value(c.TarnSpec(1.0, 1, target, knockout, TARN_DATES), Market(1.05, 0.0, 0.2), TABLE3).price
    assert got == pytest.approx(printed, abs=1e-4)


def test_tarn_without_knockout_is_coupon_strip():
    got = value(c.TarnSpec(1.0, 1, 1e3, "full", TARN_DATES), Market(1.05, 0.0, 0.2), TABLE3).price
    strip = sum(closed_form_european(1.05, 1.0, 1, 0.0, 0.0, 0.2, t) for t in TARN_DATES)
    assert abs(got / strip - 1) < 5e-4


def test_tarn_orderings():
    mkt = Market(1.05, 0.0, 0.2)
    prices = {}
    for ko in ("full", "part", "none"):
        for u in (0.3, 0.5, 0.7, 0.9):
            prices[ko, u] = value(c.TarnSpec(1.0, 1, u, ko, TARN_DATES), mkt, TABLE3).price
    for u in (0.3, 0.5, 0.7, 0.9):
        assert prices["full", u] >= prices["part", u] >= prices["none", u]
    for ko in ("full", "part", "none"):
        seq = [prices[ko, u] for u in (0.3, 0.5, 0.7, 0.9)]
        assert all(np.diff(seq) >= 0)


def test_tarn_fd_backend_agrees():
    spec = c.TarnSpec(1.0, 1, 0.5, "part", TARN_DATES)
    gh = value(spec, Market(1.05, 0.0, 0.2), TABLE3).price
    fd = value(spec, Market(1.05, 0.0, 0.2), Discretization(m=500, steps_per_date=15, method="fd")).price
    assert fd == pytest.approx(gh, rel=1e-3)


# ------------------------------------------------------------------------- GMWB

QUARTERS = tuple((k + 1) / 4.0 for k in range(40))
GMWB_DISC = Discretization(m=400, q=16, steps_per_date=2, n_aux=40)


def gmwb(mode, penalty=0.1, dates=QUARTERS):
    return c.GmwbSpec(100.0, dates, 100.0 / len(dates), penalty, 0.01, mode)


def test_static_gmwb_vs_mc():
    mkt = Market(100.0, 0.05, 0.2)
    got = value(gmwb("static"), mkt, GMWB_DISC).price
    mc, se = mc_price(gmwb("static"), mkt, 100.0, McConfig(paths=100_000))
    assert abs(got - mc) < 3 * se


def test_dynamic_gmwb_dominates_static():
    mkt = Market(100.0, 0.05, 0.2)
    assert value(gmwb("dynamic"), mkt, GMWB_DISC).price >= value(gmwb("static"), mkt, GMWB_DISC).price


def test_dynamic_gmwb_without_penalty_beats_full_early_withdrawal():
    dates = tuple(float(k) for k in range(1, 5))
    mkt = Market(100.0, 0.05, 0.2)
    got = value(gmwb("dynamic", 0.0, dates), mkt, Discretization(m=400, q=16, steps_per_date=4, n_aux=40)).price
    assert got >= 100.0 * math.exp(-0.05 * dates[0])


def test_dynamic_gmwb_with_full_penalty_matches_static():
    dates = tuple(float(k) for k in range(1, 5))
    mkt = Market(100.0, 0.05, 0.2)
    disc = Discretization(m=400, q=16, steps_per_date=4, n_aux=40)
    dyn = value(gmwb("dynamic", 1.0, dates), mkt, disc).price
    sta = value(gmwb("static", 1.0, dates), mkt, disc).price
    assert dyn == pytest.approx(sta, rel=2e-3)
