import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TABLE
from fsvvix.dataio import stationary_future
from fsvvix.errors import ArbitrageError, DomainError, ModelKindError
from fsvvix.gridpricing import GridConfig, grid_prices
from fsvvix.mc import price_mc
from fsvvix.pricing import (Contract, PriceQuote, black76_call, black76_vega, error_metrics, implied_vol, price,
                            price_call_hsv_density, price_many)
from fsvvix.vixmap import vix_level

TAU28 = 28 / 365
# tau = 28 days, v = theta.  Future and calls at K = (0.8, 1.0, 1.3) x future, from scipy.quad
# of the payoff against the noncentral chi-square law; the HSV future from a 25-digit mpmath
# quadrature after the y = z^(1/(q+1)) substitution (its density is unbounded at 0).
PRICE_ORACLE = {
    "fsv-aj": (18.3175963016259, (4.81487223106934, 2.8887469363797553, 1.2312715463228487)),
    "fsv-dj": (18.128560890327787, (4.815039729366438, 2.874733990337284, 1.1946549248242186)),
    "svj32": (19.692263911293395, (3.964711143474903, 1.266348766564081, 0.21328777531177506)),
    "hsv": (16.412415099144647, (5.698657676735985, 4.1822123544831, 2.465297887646268)),
}


@pytest.mark.parametrize("kind", sorted(PRICE_ORACLE))
def test_prices_against_quadrature_oracle(kind):
    p = TABLE[kind]
    fut, calls = PRICE_ORACLE[kind]
    f = price(p, p.cir.theta, Contract.future(TAU28))
    assert f == pytest.approx(fut, rel=1e-9)
    got = price_many(p, p.cir.theta, [Contract.call(m * f, TAU28) for m in (0.8, 1.0, 1.3)])
    assert np.allclose(got, calls, rtol=1e-9)


def test_short_and_long_maturity_limits(aj):
    v = 0.3
    assert price(aj, v, Contract.future(1e-7)) == pytest.approx(vix_level(aj, v), rel=1e-6)
    f5 = price(aj, v, Contract.future(5.0))
    f10 = price(aj, v, Contract.future(10.0))
    assert abs(f10 / f5 - 1) < 1e-3
    assert f10 == pytest.approx(stationary_future(aj), rel=1e-6)


def test_call_strike_limits(table_params):
    p = table_params
    v = p.cir.theta
    f = price(p, v, Contract.future(TAU28))
    disc = math.exp(-p.r * TAU28)
    assert price(p, v, Contract.call(1e-6, TAU28)) == pytest.approx(disc * (f - 1e-6), rel=1e-9)
    assert price(p, v, Contract.call(1e4, TAU28)) < 1e-12


def test_strike_profile_shape(table_params):
    p = table_params
    strikes = np.linspace(10, 70, 38)
    c = price_many(p, p.cir.theta, [Contract.call(k, TAU28) for k in strikes])
    f = price(p, p.cir.theta, Contract.future(TAU28))
    assert np.all(c >= 0) and np.all(c <= math.exp(-p.r * TAU28) * f)
    assert np.all(np.diff(c) < 0)
    big = c[:-2] > 1e-8
    assert np.all(np.diff(c, 2)[big] > -1e-12)


def test_hsv_two_routes_agree():
    p = TABLE["hsv"]
    for v in (0.01, 0.0372, 0.1):
        for k in (12.0, 16.0, 19.3, 25.0, 40.0):
            for days in (7, 28, 91):
                c = Contract.call(k, days / 365)
                assert price_call_hsv_density(p, v, c) == pytest.approx(price(p, v, c), rel=1e-7, abs=1e-14)
    with pytest.raises(ModelKindError):
        price_call_hsv_density(TABLE["fsv-aj"], 0.2, Contract.call(18.0, TAU28))


def test_against_mc(aj):
    cs = [Contract.future(TAU28)] + [Contract.call(k, TAU28) for k in (14.0, 18.0, 22.0, 30.0)]
    mc, se = price_mc(aj, aj.cir.theta, cs, n_paths=300_000, seed=9)
    exact = price_many(aj, aj.cir.theta, cs)
    assert np.all(np.abs(mc - exact) < 3 * se)


@pytest.mark.parametrize("kind", sorted(TABLE))
def test_grid_pricer_matches_adaptive(kind):
    p = TABLE[kind]
    v = p.cir.theta * 1.2
    cs = []
    for d in (9, 28, 63, 140):
        f = price(p, v, Contract.future(d / 365))
        cs.append(Contract.future(d / 365))
        cs += [Contract.call(m * f, d / 365) for m in (0.6, 0.9, 1.0, 1.15, 1.5, 2.5)]
    ref = price_many(p, v, cs)
    got = grid_prices(p, v, cs, GridConfig())
    assert np.allclose(got, ref, rtol=2e-6, atol=1e-9)


def test_contract_validation():
    with pytest.raises(DomainError):
        Contract.call(-1.0, 0.1)
    with pytest.raises(DomainError):
        Contract.future(0.1, t=0.2)
    with pytest.raises(DomainError):
        PriceQuote(2.0, 1.0)


def test_black76_round_trip():
    f, k, tau = 18.0, 20.0, 0.2
    c = black76_call(f, k, tau, 0.6, rate=0.0005)
    assert implied_vol(c, f, k, tau, 0.0005) == pytest.approx(0.6, abs=1e-8)


def test_brenner_subrahmanyam():
    f, tau, r = 17.5, 7 / 365, 0.0005
    c = black76_call(f, f, tau, 0.9, rate=r)
    approx = c * math.sqrt(2 * math.pi / tau) / (f * math.exp(-r * tau))
    assert implied_vol(c, f, f, tau, r) == pytest.approx(approx, rel=0.02)


@settings(max_examples=100, deadline=None)
@given(sigma=st.floats(0.05, 4.0), m=st.floats(0.6, 1.6), tau=st.floats(0.01, 1.0))
def test_implied_vol_inverts_black76(sigma, m, tau):
    f = 20.0
    c = black76_call(f, m * f, tau, sigma, rate=0.0005)
    lower = math.exp(-0.0005 * tau) * max(f - m * f, 0.0)
    if c - lower < 1e-9 * f:
        return  # no time value left to invert
    iv = implied_vol(c, f, m * f, tau, 0.0005)
    assert abs(black76_call(f, m * f, tau, iv, rate=0.0005) - c) <= 1e-9
    if black76_vega(f, m * f, tau, sigma, rate=0.0005) > 1e-3:
        assert iv == pytest.approx(sigma, rel=1e-6)


def test_implied_vol_bounds():
    with pytest.raises(ArbitrageError):
        implied_vol(25.0, 20.0, 18.0, 0.1)
    with pytest.raises(ArbitrageError):
        implied_vol(1.0, 20.0, 18.0, 0.1)


def test_atm_implied_vol_order_of_magnitude(aj):
    f = price(aj, aj.cir.theta, Contract.future(TAU28))
    c = price(aj, aj.cir.theta, Contract.call(f, TAU28))
    iv = implied_vol(c, f, f, TAU28, aj.r)
    # short-dated ATM VIX options trade at implied vols of order one
    assert 0.2 < iv < 3.0


def test_metrics_hand_fixture():
    quotes = [PriceQuote(1.0, 1.2), PriceQuote(2.0, 2.4), PriceQuote(4.0, 4.2)]
    model = [1.3, 2.1, 3.5]
    m = error_metrics(model, quotes)
    # |mid - model|/mid = 2/11, 1/22, 6/41; outside-spread distances 0.1, 0, 0.5
    assert m["arpe"] == pytest.approx(100 * (2 / 11 + 1 / 22 + 6 / 41) / 3, rel=1e-13)
    assert m["arpe"] == pytest.approx(100 * 337 / 2706, rel=1e-13)
    assert m["mae"] == pytest.approx(0.3, rel=1e-13)
    assert m["arbae"] == pytest.approx(100 * 96 / 1353, rel=1e-13)


def test_metrics_exact_and_inside_spread():
    quotes = [PriceQuote(1.0, 1.2), PriceQuote(2.0, 2.4)]
    assert error_metrics([q.mid for q in quotes], quotes) == {"arpe": 0.0, "mae": 0.0, "arbae": 0.0}
    m = error_metrics([1.05, 2.35], quotes)
    assert m["arbae"] == 0.0 and m["arpe"] > 0
    with pytest.raises(DomainError):
        error_metrics([1.0], quotes)
