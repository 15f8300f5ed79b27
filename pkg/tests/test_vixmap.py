import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TABLE
from fsvvix.cir import CirParams
from fsvvix.errors import DomainError, ModelKindError
from fsvvix.mc import mean_power_integral_mc
from fsvvix.vixmap import (TAU, ModelKind, ModelParams, VixSquaredMap, jump_offset, vix_level, vix_squared,
                           vix_squared_fsv, vix_squared_hsv, vix_squared_svj32)

# 1e4 (h1 + (1/tau) int_0^tau E[V_u^(2 alpha)] du) from mpmath: its own 1F1, adaptive quadrature in u
VIX2_ORACLE = {
    "fsv-aj": (66.085532823952575655, 318.60387913375361385, 2880.8308625736415235),
    "fsv-dj": (53.511615847236906526, 317.7515737025106278, 2768.4076087489431132),
    "svj32": (1046.8921293445045425, 347.73977388927032526, 190.18104170602495361),
    "hsv": (126.18223572098637676, 372.00000000000002492, 1027.5140380773698147),
}


@pytest.mark.parametrize("kind", sorted(VIX2_ORACLE))
def test_vix_squared_against_mpmath(kind):
    p = TABLE[kind]
    got = vix_squared(p, np.array([0.25, 1.0, 3.0]) * p.cir.theta)
    assert np.allclose(got, VIX2_ORACLE[kind], rtol=1e-10)


def test_jump_offset_values():
    j = jump_offset(TABLE["fsv-aj"])
    assert j.mu_tilde1 == pytest.approx(0.126761, abs=1e-6)
    assert j.mu_tilde2 == pytest.approx(-0.109687, abs=1e-6)
    assert j.h1 == pytest.approx(3.39e-3, abs=5e-6)
    assert jump_offset(TABLE["hsv"]).h1 == 0.0
    # direct evaluation with the published 3/2 jump parameters
    p = TABLE["svj32"]
    mt1, mt2 = 1 / (1 - 0.1518) - 1, 1 / (1 + 0.1896) - 1
    assert jump_offset(p).h1 == pytest.approx(2 * (0.0722 * (mt1 - 0.1518) + 0.1203 * (mt2 + 0.1896)), rel=1e-13)


def test_small_jump_mean_limit():
    base = TABLE["fsv-aj"]
    hs = [jump_offset(base.replace(mu1=m)).h1 - jump_offset(base.replace(lambda1=0.0, mu1=0.0)).h1
          for m in (1e-2, 1e-3, 1e-4)]
    # contribution is O(mu1^2)
    assert hs[1] / hs[0] == pytest.approx(1e-2, rel=0.02)
    assert hs[2] / hs[1] == pytest.approx(1e-2, rel=0.002)


@settings(max_examples=200, deadline=None)
@given(l1=st.floats(0, 1), m1=st.floats(1e-6, 0.5), l2=st.floats(0, 1), m2=st.floats(-0.5, -1e-6))
def test_h1_nonnegative(l1, m1, l2, m2):
    p = TABLE["fsv-aj"].replace(lambda1=l1, mu1=m1, lambda2=l2, mu2=m2)
    h1 = jump_offset(p).h1
    assert h1 >= 0.0
    assert (h1 == 0.0) == (l1 * m1 * m1 == 0.0 and l2 * m2 * m2 == 0.0)


def test_hsv_map():
    p = TABLE["hsv"]
    th, k = p.cir.theta, p.cir.kappa
    assert vix_squared_hsv(p, th) == pytest.approx(1e4 * th, rel=1e-14)
    assert vix_level(p, th) == pytest.approx(100 * math.sqrt(th), rel=1e-14)
    # time average of the conditional mean theta + (v - theta) e^{-kappa u}
    v = 0.05
    avg = th + (v - th) * (1 - math.exp(-k * TAU)) / (k * TAU)
    assert vix_squared_hsv(p, v) == pytest.approx(1e4 * avg, rel=1e-10)
    assert vix_squared_hsv(p, v, tau=1e-9) == pytest.approx(1e4 * v, rel=1e-8)
    with pytest.raises(ModelKindError):
        vix_squared_hsv(TABLE["fsv-aj"], 0.1)


def test_svj32_short_window_limit():
    p = TABLE["svj32"]
    h1 = jump_offset(p).h1
    x = 40.0
    assert vix_squared_svj32(p, x, tau=1e-8) == pytest.approx(1e4 * (h1 + 1 / x), rel=1e-6)


@pytest.mark.parametrize("kind,power", [("svj32", -1.0), ("fsv-aj", None), ("fsv-dj", None)])
def test_map_against_mc(kind, power):
    p = TABLE[kind]
    power = 2 * p.alpha if power is None else power
    est = mean_power_integral_mc(p.cir, power, p.cir.theta, TAU, n_paths=100_000, steps=64, seed=3)
    mc = 1e4 * (jump_offset(p).h1 + est.mean)
    assert abs(vix_squared(p, p.cir.theta) - mc) < 3 * 1e4 * est.stderr


def _random_cir(rng):
    while True:
        k, th, s = rng.uniform(0.5, 8), rng.uniform(0.01, 0.8), rng.uniform(0.1, 1.5)
        cir = CirParams(k, th, s, th)
        if cir.feller_ratio > 1.05:
            return cir


def test_nested_reductions():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        cir = _random_cir(rng)
        v = cir.theta * rng.uniform(0.1, 5.0)
        hsv = ModelParams(cir, 0.5, ModelKind.HSV)
        fsv = ModelParams(cir, 0.5, ModelKind.FSV_AJ)
        assert vix_squared_fsv(fsv, v) == pytest.approx(vix_squared_hsv(hsv, v), rel=1e-7)
        l1, m1, l2, m2 = rng.uniform(0, 0.3), rng.uniform(0.01, 0.3), rng.uniform(0, 0.3), -rng.uniform(0.01, 0.3)
        s32 = ModelParams(cir, -0.5, ModelKind.SVJ32, lambda1=l1, mu1=m1, lambda2=l2, mu2=m2)
        f32 = ModelParams(cir, -0.5, ModelKind.FSV_AJ, lambda1=l1, mu1=m1, lambda2=l2, mu2=m2)
        assert vix_squared_fsv(f32, v) == pytest.approx(vix_squared_svj32(s32, v), rel=1e-7)


def test_monotone_in_state():
    v = np.geomspace(0.01, 2.0, 60)
    for kind in ("fsv-aj", "fsv-dj", "hsv"):
        lv = vix_level(TABLE[kind], v)
        assert np.all(np.diff(lv) > 0)
    y = np.geomspace(1.0, 500.0, 60)
    assert np.all(np.diff(vix_level(TABLE["svj32"], y)) < 0)


def test_level_plausible():
    assert 15.0 < vix_level(TABLE["fsv-aj"], 0.2121) < 20.0


def test_random_sweep_finite():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        cir = _random_cir(rng)
        kind = rng.choice(["hsv", "svj32", "fsv-aj", "fsv-dj"])
        alpha = {"hsv": 0.5, "svj32": -0.5}.get(kind, rng.uniform(-0.5, 1.5))
        jumps = {} if kind == "hsv" else dict(lambda2=rng.uniform(0, 1), mu2=-rng.uniform(0.01, 0.5))
        if kind in ("svj32", "fsv-aj"):
            jumps.update(lambda1=rng.uniform(0, 1), mu1=rng.uniform(0.01, 0.5))
        p = ModelParams(cir, alpha, kind, **jumps)
        val = vix_squared(p, cir.theta * rng.uniform(0.05, 10.0))
        assert math.isfinite(val) and val > 0


@pytest.mark.parametrize("kind", sorted(TABLE))
def test_time_refinement(kind):
    p = TABLE[kind]
    v = p.cir.theta * np.geomspace(0.2, 5.0, 9)
    assert np.allclose(vix_squared(p, v, n=128), vix_squared(p, v, n=64), rtol=1e-8, atol=0)


@pytest.mark.parametrize("kind", sorted(TABLE))
def test_interpolated_map(kind):
    p = TABLE[kind]
    m = VixSquaredMap(p)
    v = p.cir.theta * np.geomspace(1e-3, 50.0, 101)
    assert np.allclose(m.fast(v), m(v), rtol=1e-10)
    assert m.fast(p.cir.theta) == pytest.approx(m(p.cir.theta), rel=1e-11)


def test_params_constraints_and_roundtrip():
    cir = CirParams(2.0, 0.1, 0.4, 0.1)
    with pytest.raises(ModelKindError):
        ModelParams(cir, 0.7, ModelKind.HSV)
    with pytest.raises(ModelKindError):
        ModelParams(cir, 0.5, ModelKind.SVJ32)
    with pytest.raises(ModelKindError):
        ModelParams(cir, 0.5, ModelKind.FSV_DJ, lambda1=0.1, mu1=0.1)
    with pytest.raises(DomainError):
        ModelParams(cir, 1.7, ModelKind.FSV_AJ)
    with pytest.raises(DomainError):
        ModelParams(cir, 0.5, ModelKind.FSV_AJ, lambda2=0.1, mu2=0.1)
    with pytest.raises(ModelKindError):
        ModelKind.parse("merton")
    assert ModelKind.parse("FSV_AJ") is ModelKind.FSV_AJ
    for p in TABLE.values():
        assert ModelParams.from_dict(p.to_dict()) == p
    with pytest.raises(DomainError):
        vix_squared(TABLE["fsv-aj"], 0.0)
