import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hamclt import asymptotics as asy
from hamclt import covariance as cv

HEAT = cv.heat(1.0, 1)
RIESZ = cv.riesz(0.5, 1)

# independent oracles: 1-d double integral in closed form, planar value 16 pi / 3 from
# int_{B_1^2} |x - y|^-1 by the overlap formula done symbolically
KAPPA_1 = 2**2.5 / 0.75
KAPPA_2_ONE = 16 * math.pi / 3
KPRIME_11 = 1.8856180831641269


def test_kappa_closed_form_and_quadrature():
    assert asy.kappa_closed_form(0.5) == pytest.approx(KAPPA_1, abs=1e-12)
    assert asy.kappa_quadrature(0.5, 1) == pytest.approx(KAPPA_1, abs=1e-8)
    assert asy.kappa_quadrature(1.0, 2) == pytest.approx(KAPPA_2_ONE, rel=1e-10)


def test_kappa_mc_agrees_with_closed_form():
    est = asy.kappa_mc(0.5, 1, count=2**18, rng=1)
    assert est.within(KAPPA_1, 3)
    planar = asy.kappa_mc(1.0, 2, count=2**20, rng=2)
    assert planar.within(KAPPA_2_ONE, 3)
    assert planar.std_error / planar.value < 1e-3


def test_kappa_domain():
    with pytest.raises(ValueError):
        asy.kappa_quadrature(1.0, 1)
    with pytest.raises(ValueError):
        asy.limit_constant_Kprime(1.0, 1.0, 1.0, 1)


def test_kprime_values():
    assert asy.limit_constant_Kprime(1, 1, 0.5, 1).Kprime == pytest.approx(KPRIME_11, rel=1e-14)
    assert asy.limit_constant_Kprime(0, 1, 0.5, 1).Kprime == 0.0
    a, b = asy.limit_constant_Kprime(0.5, 2, 1.0, 2), asy.limit_constant_Kprime(2, 0.5, 1.0, 2)
    assert a.Kprime == b.Kprime > 0


def test_limit_constant_first_order_examples():
    k = asy.limit_constant_K(2.0, 2.0, HEAT, N=1)
    assert k.K == pytest.approx(8.0, rel=1e-12)
    white = asy.limit_constant_K(1.0, 1.0, cv.white(1), N=1)
    assert white.K == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(ValueError):
        asy.limit_constant_K(1.0, 1.0, RIESZ)


def test_limit_constant_is_symmetric():
    a = asy.limit_constant_K(1.0, 0.5, HEAT, N=2, count=100_000, rng=3)
    b = asy.limit_constant_K(0.5, 1.0, HEAT, N=2, count=100_000, rng=4)
    assert abs(a.K - b.K) <= 3 * math.hypot(a.K_std_error, b.K_std_error)
    assert a.K > 0 and a.K_tail_bound > 0


def test_ball_energy_matches_quadrature_and_grows_like_volume():
    for R in (1.0, 4.0):
        direct, _ = integrate.quad(lambda u: float(HEAT.eval_gamma(u)) * max(2 * R - abs(u), 0), -2 * R, 2 * R)
        assert asy.ball_energy(R, HEAT) == pytest.approx(direct, rel=1e-8)
    # ||gamma||_1 |B_R| is a bound and the large-R slope is d, not d / 2
    for R in (2.0, 8.0, 32.0):
        assert asy.ball_energy(R, HEAT) <= 2 * R * (1 + 1e-12)
    fit = asy.exponent_fit([(R, asy.ball_energy(R, HEAT)) for R in (8, 16, 32, 64, 128)])
    assert abs(fit.slope - 1.0) < 0.02
    assert asy.ball_energy(0.0, HEAT) == 0.0


def test_first_chaos_zero_radius():
    assert asy.first_chaos_covariance(0.0, 1, 1, HEAT).value == 0.0


def test_first_chaos_riesz_approaches_kprime():
    ratios = [asy.first_chaos_covariance(R, 1, 1, RIESZ).value / R**1.5 for R in (8, 16, 32, 64)]
    gaps = [abs(r - KPRIME_11) for r in ratios]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] / KPRIME_11 < 0.05


def test_first_chaos_heat_approaches_lag_integral():
    val = asy.first_chaos_covariance(64.0, 1, 1, HEAT).value / 64
    assert val == pytest.approx(0.5, rel=0.05)


@given(st.floats(0.2, 2.0), st.floats(0.2, 2.0), st.floats(0.5, 10))
@settings(max_examples=10)
def test_first_chaos_is_symmetric_in_times(t, s, R):
    a = asy.first_chaos_covariance(R, t, s, HEAT).value
    b = asy.first_chaos_covariance(R, s, t, HEAT).value
    assert a == pytest.approx(b, rel=1e-7)


def test_chaos_moments_nonnegative():
    for n in (2, 3):
        est = asy.chaos_moment(n, 8.0, 1.0, 1.0, RIESZ, count=50_000, rng=n)
        assert est.value >= -3 * est.std_error
        assert est.value <= asy.chaos_variance_bound(n, 8.0, 1.0, RIESZ) + 3 * est.std_error


def test_variance_tail_bound_matches_series():
    direct = sum(asy.chaos_variance_bound(n, 4.0, 1.0, HEAT) for n in range(4, 80))
    assert asy.chaos_tail_bound(3, 4.0, 1.0, HEAT) == pytest.approx(direct, rel=1e-10)


def test_higher_chaos_decay_riesz():
    table = asy.higher_chaos_decay([4, 8, 16, 32, 64], 1.0, RIESZ, orders=(2,), count=50_000, rng=5)
    vals = [e.value for e in table[2]]
    assert vals[-1] < 0.5 * vals[0]
    small = asy.higher_chaos_decay([16], 0.1, RIESZ, orders=(2,), count=20_000, rng=6)[2][0].value
    assert small < 1e-3 * vals[2]


def test_variance_estimate_fields():
    v = asy.variance_estimate(8.0, 1.0, None, HEAT, N=2, count=20_000, rng=7)
    assert v.times == (1.0, 1.0) and len(v.per_chaos) == 2
    assert v.total.value == pytest.approx(sum(p.value for p in v.per_chaos))
    assert v.tail_bound > 0


def test_increment_norm():
    same = asy.increment_norm(8.0, 1.0, 1.0, HEAT)
    assert same.value == 0.0
    ratios = []
    for gap in (0.5, 0.25, 0.125):
        inc = asy.increment_norm(8.0, 1.0, 1.0 - gap, HEAT, count=50_000, rng=8)
        assert inc.value <= inc.bound
        ratios.append(inc.value / gap)
    assert max(ratios) / min(ratios) < 2.0


def test_exponent_fit():
    fit = asy.exponent_fit([(R, R**1.5) for R in (4, 8, 16, 32, 64)])
    assert fit.slope == pytest.approx(1.5, abs=1e-12)
    with pytest.raises(ValueError):
        asy.exponent_fit([(4, 1), (8, 2), (16, 4)])
    with pytest.raises(ValueError):
        asy.exponent_fit([(4, 1), (5, 2), (6, 4), (7, 5)])
