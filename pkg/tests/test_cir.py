import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fsvvix.cir import (CirLaw, CirParams, TransformArgs, boundary_report, check_conditions, conditional_mean,
                        conditional_variance, negative_moment, transform_horizon, transform_phi,
                        transition_density)
from fsvvix.errors import DomainError, ValidityError
from fsvvix.mc import transform_mc

AJ = CirParams(3.8943, 0.2121, 0.9115, 0.2121)
HSV = CirParams(3.1490, 0.0372, 1.0880, 0.0372)
S32 = CirParams(2.4614, 47.313, -11.075, 47.313)
MONTH = 30 / 365

# E[V_t^p | V_0 = x] by 30-digit mpmath quadrature of the Bessel-form density
MOMENT_ORACLE = [
    (AJ, 1.0, 0.1, 0.2121, 0.21210000000000000909),
    (AJ, 2.4312, 0.05, 0.2121, 0.029731734033784945343),
    (AJ, -0.5, 0.25, 0.4242, 2.1848483909747378933),
    (AJ, 0.5, 1.0, 0.10605, 0.43054338520749700068),
    (AJ, 2.0, 0.02, 0.2121, 0.048250014698439300775),
    (HSV, 2.4312, 0.05, 0.0372, 0.0012937081317676363995),
    (HSV, 0.5, 1.0, 0.0186, 0.12023839247927705248),
    (HSV, 2.0, 0.02, 0.0372, 0.0022113360421867550176),
    (S32, 2.4312, 0.05, 47.313, 14213.526213233697561),
    (S32, -0.5, 0.25, 94.626, 0.1325535884982112733),
    (S32, 0.5, 1.0, 23.6565, 6.3063886047613601668),
    (S32, 2.0, 0.02, 47.313, 2349.0534634604890523),
]


def test_condition_flags():
    r = check_conditions(AJ, 1.2156)
    assert r.all_ok and r.feller_ratio == pytest.approx(1.988, abs=1e-3)
    r = check_conditions(CirParams(1.0, 0.5, math.sqrt(2.0), 0.5), 0.5)
    assert r.feller_ratio == pytest.approx(0.5) and not r.feller and not r.non_explosion
    r = check_conditions(CirParams(2.829, 0.020, 0.831, 0.02), 0.5)
    assert r.feller_ratio == pytest.approx(0.164, abs=1e-3) and not r.feller


@pytest.mark.parametrize("kw", [dict(kappa=0.0), dict(theta=-1.0), dict(sigma=0.0), dict(v0=0.0),
                                dict(kappa=math.nan)])
def test_params_validated(kw):
    base = dict(kappa=1.0, theta=0.1, sigma=0.3, v0=0.1)
    base.update(kw)
    with pytest.raises(DomainError):
        CirParams(**base)


def test_density_against_mpmath():
    law = CirLaw(AJ, MONTH)
    vals = transition_density(law, [0.2121, 0.05, 0.6])
    assert np.allclose(vals, [3.7624828478608954318, 1.1271306430143872065, 0.038852300811442023303],
                       rtol=1e-12)


@pytest.mark.parametrize("cir", [AJ, HSV, S32], ids=["fsv", "hsv", "svj32"])
def test_density_normalised_with_cir_moments(cir):
    law = CirLaw(cir, MONTH, start=1.3 * cir.theta)
    assert law.expect(lambda y: np.ones_like(y)) == pytest.approx(1.0, abs=1e-6)
    m = law.expect(lambda y: y)
    assert m == pytest.approx(conditional_mean(cir, MONTH, 1.3 * cir.theta), rel=1e-6)
    v = law.expect(lambda y: (y - m) ** 2)
    assert v == pytest.approx(conditional_variance(cir, MONTH, 1.3 * cir.theta), rel=1e-6)


@pytest.mark.parametrize("cir,p,t,x,expected", MOMENT_ORACLE)
def test_negative_moment_against_mpmath(cir, p, t, x, expected):
    assert negative_moment(cir, -p, t, x) == pytest.approx(expected, rel=1e-10)


def test_negative_moment_special_cases():
    t = np.linspace(0.001, 3.0, 40)
    assert np.allclose(negative_moment(AJ, 0.0, t), 1.0, rtol=1e-13)
    assert np.allclose(negative_moment(AJ, -1.0, t, 0.35), conditional_mean(AJ, t, 0.35), rtol=1e-8)
    assert negative_moment(AJ, 0.7, 0.0, 0.3) == pytest.approx(0.3 ** -0.7)
    law = CirLaw(AJ, MONTH)
    assert negative_moment(AJ, 1.0, MONTH) == pytest.approx(law.expect(lambda y: 1.0 / y), rel=1e-6)
    with pytest.raises(DomainError):
        negative_moment(AJ, AJ.feller_ratio, 0.1)


feller_params = st.tuples(st.floats(0.5, 8.0), st.floats(0.02, 0.6), st.floats(0.1, 1.2), st.floats(0.2, 3.0)) \
    .filter(lambda p: 2 * p[0] * p[1] / p[2] ** 2 > 1.05)


@settings(max_examples=100, deadline=None)
@given(p=feller_params, eta=st.floats(-3.0, 0.95), t=st.floats(0.005, 2.0))
def test_transform_reduces_to_moment(p, eta, t):
    k, th, s, xf = p
    cir = CirParams(k, th, s, xf * th)
    eta = eta * cir.feller_ratio if eta > 0 else eta
    lhs = transform_phi(cir, TransformArgs(eta=eta), t)
    rhs = negative_moment(cir, eta, t)
    assert lhs == pytest.approx(rhs, rel=1e-8)


def test_transform_trivial_and_refusal():
    assert transform_phi(AJ, TransformArgs(), [0.01, 0.3, 2.0]) == pytest.approx(1.0, rel=1e-12)
    args = TransformArgs(gamma_t=-12.0)
    t_star = transform_horizon(AJ, args)
    assert math.isfinite(t_star) and t_star > 0
    transform_phi(AJ, args, 0.9 * t_star)
    with pytest.raises(ValidityError):
        transform_phi(AJ, args, 1.01 * t_star)
    with pytest.raises(DomainError):
        transform_phi(HSV, TransformArgs(eta=0.1), 0.1)


@settings(max_examples=40, deadline=None)
@given(eps=st.lists(st.floats(0.0, 5.0), min_size=2, max_size=6, unique=True), eta=st.floats(-1.0, 0.9),
       t=st.floats(0.05, 1.5))
def test_transform_decreasing_in_epsilon(eps, eta, t):
    eps = sorted(eps)
    vals = [transform_phi(AJ, TransformArgs(eta=eta, gamma_t=0.1, epsilon=e), t) for e in eps]
    for (e0, v0), (e1, v1) in zip(zip(eps, vals), zip(eps[1:], vals[1:])):
        assert v1 <= v0 * (1 + 1e-12)
        if e1 - e0 > 1e-3:
            assert v1 < v0


def test_transform_against_mc():
    args = TransformArgs(eta=0.5, gamma_t=0.1, epsilon=0.05)
    exact = transform_phi(AJ, args, 0.25)
    est = transform_mc(AJ, args, 0.25, n_paths=200_000, steps=100, seed=11)
    assert abs(est.mean - exact) < 3 * est.stderr


def test_sampler_moments():
    law = CirLaw(AJ, MONTH)
    draws = law.sample(np.random.default_rng(5), 1_000_000)
    n = draws.size
    assert abs(draws.mean() - law.mean) < 4 * draws.std() / math.sqrt(n)
    # SE of the sample variance from the fourth central moment
    c = draws - draws.mean()
    se_var = math.sqrt((np.mean(c ** 4) - np.mean(c ** 2) ** 2) / n)
    assert abs(draws.var() - law.variance) < 4 * se_var


def test_sampler_ks():
    rng = np.random.default_rng(17)
    count = 0
    while count < 10:
        k, th, s = rng.uniform(0.5, 6), rng.uniform(0.02, 0.5), rng.uniform(0.1, 1.0)
        cir = CirParams(k, th, s, th * rng.uniform(0.3, 3))
        if not cir.feller:
            continue
        law = CirLaw(cir, rng.uniform(0.01, 1.0))
        draws = law.sample(rng, 100_000)
        assert stats.kstest(draws, law.cdf).pvalue > 0.01 / 10  # Bonferroni over the 10 sets
        count += 1


def test_boundary_classification():
    assert boundary_report(AJ, 0.5, 0.0).classification == "natural"
    rep = boundary_report(AJ, 1.2156, -0.5)
    assert rep.scale_divergent
    rep = boundary_report(AJ, 1.2156, 0.0, d_grid=(10.0, 100.0, 1000.0))
    assert all(b > a for a, b in zip(rep.log_scale, rep.log_scale[1:]))
    with pytest.raises(DomainError):
        boundary_report(AJ, 0.5, 0.3)
