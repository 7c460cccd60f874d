import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from hamclt import wave


def test_green_examples():
    assert float(wave.green(1, 2.0, 1.0)) == 0.5
    assert float(wave.green(2, 2.0, [0.0, 0.0])) == pytest.approx(1 / (4 * math.pi), rel=1e-15)
    assert float(wave.green(1, -1.0, 0.0)) == 0.0
    assert float(wave.green(1, 1.0, 1.0)) == 0.0  # open cone
    assert float(wave.green(2, 1.0, [1.0, 0.0])) == 0.0
    with pytest.raises(ValueError):
        wave.green(3, 1.0, [0.0, 0.0, 0.0])


def test_green_fourier_examples():
    assert float(wave.green_fourier(2.0, 0.0)) == 2.0
    assert abs(float(wave.green_fourier(1.0, math.pi))) < 1e-15
    assert float(wave.green_fourier(3.0, 1.0)) == pytest.approx(math.sin(3.0), rel=1e-15)
    assert float(wave.green_fourier(-1.0, 1.0)) == 0.0


def test_green_fourier_against_discrete_transform():
    x = np.linspace(-3, 3, 600_001)
    g = wave.green(1, 3.0, x)
    for k in (0.3, 1.0, 2.5):
        direct = np.trapezoid(g * np.cos(k * x), x)
        assert direct == pytest.approx(float(wave.green_fourier(3.0, k)), abs=1e-4)


def test_series_branch_is_continuous():
    t = 1.0
    below = float(wave.green_fourier(t, 0.999e-6))
    above = float(wave.green_fourier(t, 1.001e-6))
    assert abs(below - above) < 1e-12


def test_lp_norm_examples():
    assert wave.green_lp_norm(3.0, 1.0) == pytest.approx(3.0, rel=1e-15)
    assert wave.green_lp_norm(1.0, 1.5) == pytest.approx((2 * math.pi) ** -0.5 / 0.5, rel=1e-15)
    assert wave.green_lp_norm(1.0, 1.999) > 100
    with pytest.raises(ValueError):
        wave.green_lp_norm(1.0, 2.0)


@pytest.mark.parametrize("p", [0.5, 1.0, 1.5])
def test_lp_norm_by_polar_quadrature(p):
    t = 1.0
    # substitute r = t sin(theta) so that the edge singularity becomes integrable and smooth
    f = lambda th: 2 * math.pi * (t * math.sin(th)) * (2 * math.pi * t * math.cos(th)) ** (-p) * t * math.cos(th)
    val, _ = integrate.quad(f, 0, math.pi / 2, epsabs=1e-12, limit=200)
    assert val == pytest.approx(wave.green_lp_norm(t, p), abs=1e-4)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_mass_identity(t):
    one, _ = integrate.quad(lambda x: float(wave.green(1, t, x)), -t, t)
    assert one == pytest.approx(t, abs=1e-6)
    two, _ = integrate.quad(lambda r: 2 * math.pi * r / (2 * math.pi * math.sqrt(t * t - r * r)), 0, t)
    assert two == pytest.approx(t, abs=1e-6)
    assert wave.green_mass(1, t) == t == wave.green_mass(2, t)


@given(st.floats(0.1, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 1.9), st.floats(0.01, 1.0))
def test_planar_domination(t, x1, x2, p, gap):
    q = min(p + gap, 1.99)
    g = float(wave.green(2, t, [x1, x2]))
    assert g**p <= (2 * math.pi * t) ** (q - p) * g**q * (1 + 1e-12)


@given(st.floats(0.1, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_indicator_bound(t, x1, x2):
    inside = float(math.hypot(x1, x2) < t)
    assert inside <= 2 * math.pi * t * float(wave.green(2, t, [x1, x2])) * (1 + 1e-12)


@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 50))
def test_fourier_is_lipschitz_in_time(t, s, k):
    diff = abs(float(wave.green_fourier(t, k)) - float(wave.green_fourier(s, k)))
    assert diff <= abs(t - s) + 1e-12


@given(st.floats(0.01, 5), st.floats(0, 50))
def test_fourier_bound_constant(t, k):
    assert float(wave.green_fourier(t, k)) ** 2 <= wave.fourier_bound_constant(t) / (1 + k * k) * (1 + 1e-12)


def test_offset_sampler_matches_normalised_kernel():
    gen = np.random.default_rng(0)
    off = wave.sample_green_offsets(gen, 2, 1.0, 200_000)
    r = np.hypot(off[:, 0], off[:, 1])
    # P(|X| < 1/2) = 1 - sqrt(1 - 1/4) for density r / sqrt(1 - r^2)
    p = 1 - math.sqrt(0.75)
    assert abs(np.mean(r < 0.5) - p) < 4 * math.sqrt(p * (1 - p) / r.size)
    one = wave.sample_green_offsets(gen, 1, 2.0, 1000)
    assert np.all(np.abs(one) < 2.0)


def test_first_kernel_matches_time_integral():
    for r in (0.1, 0.5, 0.9):
        val, _ = integrate.quad(lambda s: float(wave.green(2, 1.0 - s, [r, 0.0])), 0, 1 - r, limit=200)
        assert float(wave.first_kernel(2, 1.0, r)) == pytest.approx(val, rel=1e-7)
    assert float(wave.first_kernel(1, 2.0, 0.5)) == 0.75
