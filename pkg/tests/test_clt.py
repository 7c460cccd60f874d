import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hamclt import clt


def test_calibration_under_the_null():
    passed = 0
    for seed in range(40):
        x = np.random.default_rng(seed).standard_normal(10_000)
        passed += clt.normality_report(x, scale=1.0, centre=0.0).ks_pvalue > 0.01
    assert passed >= 38


def test_degenerate_samples_rejected():
    with pytest.raises(ValueError):
        clt.normality_report(np.full(500, 3.0))
    with pytest.raises(ValueError):
        clt.normality_report(np.random.default_rng(0).standard_normal(99))


def test_ks_matches_bruteforce():
    x = np.random.default_rng(1).standard_normal(1000) * 1.1 + 0.05
    assert abs(clt.ks_statistic(x) - clt.ks_statistic_bruteforce(x)) <= 1e-12
    assert clt.ks_statistic(x) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-12)


def test_w1_against_numerical_quantile_integral():
    x = np.random.default_rng(2).standard_normal(200) + 0.3
    u = (np.arange(2_000_000) + 0.5) / 2_000_000
    q = np.sort(x)[np.minimum((u * x.size).astype(int), x.size - 1)]
    direct = np.mean(np.abs(q - stats.norm.ppf(u)))
    assert clt.w1_normal(x) == pytest.approx(direct, abs=1e-4)


def test_w1_shift_is_exact():
    # W1(N(0,1) shifted by c, N(0,1)) = |c| in the large-sample limit; a point mass at c has W1 = E|Z - c|
    c = 0.7
    exact = c * (2 * stats.norm.cdf(c) - 1) + 2 * stats.norm.pdf(c)
    assert clt.w1_normal(np.full(10, c)) == pytest.approx(exact, rel=1e-12)


def test_w1_self_distance_and_permutation_invariance():
    x = np.random.default_rng(3).standard_normal(500)
    assert clt.w1_two_sample(x, x) == 0.0
    perm = np.random.default_rng(4).permutation(x)
    a, b = clt.normality_report(x), clt.normality_report(perm)
    assert a == b


@given(st.integers(0, 2**31))
@settings(max_examples=20)
def test_report_ranges(seed):
    x = np.random.default_rng(seed).gamma(2.0, size=300)
    r = clt.normality_report(x)
    assert 0 <= r.ks_stat <= 1 and r.w1 >= 0 and 0 <= r.ks_pvalue <= 1


def test_synthetic_rate_recovered():
    # the chi-square term is built from the same normal draw, giving a skewed law at distance O(R^-1/2)
    gen = np.random.default_rng(5)
    radii = [4, 8, 16, 32, 64]
    w1s = []
    for R in radii:
        z = gen.standard_normal(200_000)
        w1s.append(clt.w1_normal(z + R**-0.5 * (z * z - 1) / math.sqrt(2)))
    table = clt.distance_rate_table(radii, w1s)
    assert abs(table.slope + 0.5) <= 0.15
    assert table.strictly_decreasing


def test_independent_perturbation_is_smoothed_away():
    # an independent chi-square perturbation is smoothed by the normal part and decays like R^-1
    gen = np.random.default_rng(6)
    radii = [4, 8, 16, 32, 64]
    w1s = [clt.w1_normal(gen.standard_normal(200_000) + R**-0.5 * (gen.chisquare(1, 200_000) - 1) / math.sqrt(2)) for R in radii]
    assert clt.distance_rate_table(radii, w1s).slope < -0.75


def test_rate_table_needs_four_radii():
    with pytest.raises(ValueError):
        clt.distance_rate_table([8, 16, 32], [0.1, 0.05, 0.03])


def test_gaussian_floor_scales_like_inverse_root():
    a, _ = clt.gaussian_w1_floor(1000, reps=30, rng=6)
    b, _ = clt.gaussian_w1_floor(16000, reps=30, rng=7)
    assert 2.5 < a / b < 6.0


def test_multi_time_covariance():
    gen = np.random.default_rng(8)
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    x = gen.multivariate_normal([0, 0], cov, size=50_000)
    cmp_ = clt.multi_time_gaussianity(x, cov)
    assert cmp_.within(3.5)
    assert not clt.multi_time_gaussianity(x, cov * 1.2).within(3)
    one = clt.multi_time_gaussianity(x[:, :1], cov[:1, :1])
    assert one.empirical.shape == (1, 1)
    assert clt.normality_report(x[:, 0] / math.sqrt(cov[0, 0]), scale=1.0, centre=0.0).ks_pvalue > 0.01
