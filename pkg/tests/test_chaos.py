import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hamclt import chaos
from hamclt import covariance as cv
from hamclt.chaos import ChaosKernel, OrderTooLarge

WHITE = cv.white(1)
HEAT = cv.heat(1.0, 1)


def test_first_order_closed_form_examples():
    assert float(chaos.eval_f_n(ChaosKernel(1, 2.0), [0.0])) == 1.0
    assert float(chaos.eval_f_n(ChaosKernel(2, 2.0), [0.0, 0.0])) == 0.5
    assert float(chaos.eval_f_n(ChaosKernel(3, 1.0, (0.0,)), [0.0, 0.0, 1.0])) == 0.0


@given(st.integers(1, 3), st.floats(0.2, 2.0), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
@settings(max_examples=15)
def test_simplex_quadrature_matches_closed_form(n, t, pts):
    k = ChaosKernel(n, t)
    p = np.array(pts[:n])
    exact = float(chaos.eval_f_n(k, p))
    # the integrand jumps at the cone boundary, so the tensor Gauss rule error is O(1 / order)
    assert float(chaos.eval_f_n(k, p, "gauss", order=40)) == pytest.approx(exact, abs=t**n / 40)


def test_mc_simplex_matches_closed_form():
    k = ChaosKernel(2, 1.5)
    val, err = chaos.eval_f_n(k, [[0.2], [-0.1]], "mc", count=200_000, rng=4)
    assert abs(float(val) - float(chaos.f_closed_form(k, [[0.2], [-0.1]]))) <= 3 * float(err)


def test_empty_light_cone_two_dimensions():
    k = ChaosKernel(2, 1.0, (0.0, 0.0))
    assert float(chaos.eval_f_n(k, [[0.7, 0.0], [0.0, 0.4]])) == 0.0
    assert float(chaos.eval_f_n(k, [[0.6, 0.0], [0.0, 0.5]])) == 0.0


def test_planar_first_order_matches_time_integral():
    k = ChaosKernel(1, 1.0, (0.0, 0.0))
    r = 0.4
    direct, _ = integrate.quad(lambda s: 1 / (2 * math.pi * math.sqrt(s * s - r * r)), r, 1.0)
    assert float(chaos.eval_f_n(k, [[r, 0.0]])) == pytest.approx(direct, rel=1e-7)


def test_planar_second_order_matches_nested_time_integral():
    k = ChaosKernel(2, 1.0, (0.0, 0.0))
    x1, x2 = np.array([0.3, 0.0]), np.array([0.0, 0.2])
    a, b = np.linalg.norm(x2 - x1), np.linalg.norm(x2)
    g = lambda tau, r: 1 / (2 * math.pi * math.sqrt(tau * tau - r * r)) if tau > r else 0.0
    inner = lambda t2: integrate.quad(lambda t1: g(t2 - t1, a), 0, t2 - a, limit=200)[0] if t2 > a else 0.0
    direct, _ = integrate.quad(lambda t2: inner(t2) * g(1.0 - t2, b), a, 1.0 - b, limit=200)
    assert float(chaos.eval_f_n(k, [x1, x2])) == pytest.approx(direct, rel=1e-5)


def test_order_limit():
    with pytest.raises(OrderTooLarge):
        chaos.alpha_n(5, 0.0, 1.0, 1.0, WHITE)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_white_noise_isometry(n):
    est = chaos.kernel_norm_sq(ChaosKernel(n, 1.0), WHITE, count=200_000, rng=n)
    assert est.within(chaos.white_noise_norm_sq(n, 1.0), 3)
    # deterministic quadrature over the gap variables
    f = lambda *u: float(chaos.f_closed_form(ChaosKernel(n, 1.0), np.cumsum(u)[::-1])) ** 2
    if n <= 2:
        val, _ = integrate.nquad(f, [[-1, 1]] * n, opts={"limit": 100})
        assert val == pytest.approx(chaos.white_noise_norm_sq(n, 1.0), rel=1e-6)


def test_white_noise_first_norm_is_one_sixth():
    assert chaos.white_noise_norm_sq(1, 1.0) == pytest.approx(1 / 6)
    est = chaos.kernel_norm_sq(ChaosKernel(1, 1.0), WHITE, count=100_000, rng=0)
    assert est.within(1 / 6, 3)


@pytest.mark.parametrize("model", [cv.heat(1.0), cv.poisson(1.0), cv.riesz(0.5), cv.fractional(0.7), WHITE, cv.riesz(1.0, 2)], ids=lambda m: f"{m.kind.value}{m.dimension}")
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_norm_bound_holds(model, n):
    for t in (0.5, 1.0, 2.0):
        est = chaos.kernel_norm_sq(ChaosKernel(n, t, (0.0,) * model.dimension), model, count=20_000, rng=n)
        assert est.value <= chaos.norm_bound(n, t, model) + 3 * est.std_error


def test_norm_shrinks_with_horizon():
    vals = [chaos.kernel_norm_sq(ChaosKernel(2, t), HEAT, count=50_000, rng=2).value for t in (1.0, 0.5, 0.25)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_zero_horizon_norm_is_zero():
    assert chaos.kernel_norm_sq(ChaosKernel(1, 0.0), HEAT).value == 0.0


def test_alpha_examples():
    a = chaos.alpha_n(1, 0.0, 1.0, 1.0, WHITE, count=200_000, rng=5)
    assert abs(a.value - 1 / 6) <= 3 * a.mc_std_error
    far = chaos.alpha_n(2, 2.5, 1.0, 1.0, HEAT, rng=5)
    assert far.value == 0.0


def test_alpha_dual_routes_agree():
    a = chaos.alpha_n(1, 0.0, 1.0, 1.0, HEAT, count=200_000, rng=6, route="spatial")
    b = chaos.alpha_n(1, 0.0, 1.0, 1.0, HEAT, count=200_000, rng=7, route="fourier")
    assert abs(a.value - b.value) <= 3 * math.hypot(a.mc_std_error, b.mc_std_error)


@pytest.mark.parametrize("n", [2, 3])
def test_alpha_nonnegative_and_swap_symmetric(n):
    a = chaos.alpha_n(n, 0.4, 1.0, 0.6, HEAT, count=100_000, rng=8)
    b = chaos.alpha_n(n, -0.4, 0.6, 1.0, HEAT, count=100_000, rng=9)
    assert a.value >= -3 * a.mc_std_error
    assert abs(a.value - b.value) <= 3 * math.hypot(a.mc_std_error, b.mc_std_error)


def test_translation_invariance():
    from hamclt import kernels
    from hamclt._pairing import spatial_samples
    from hamclt.estimate import Estimate
    from hamclt.streams import Stream

    vals = []
    for seed, (x, y) in enumerate([(0.3, 0.0), (1.3, 1.0)]):
        s = spatial_samples(HEAT, 2, (kernels.ANCHORED, (1.0, x)), (kernels.ANCHORED, (1.0, y)), 100_000, Stream(seed + 20))
        vals.append(Estimate.from_samples(s))
    assert abs(vals[0].value - vals[1].value) <= 3 * math.hypot(vals[0].std_error, vals[1].std_error)


def test_rho_examples():
    r = chaos.rho(1.0, 1.0, 0.0, WHITE, N=1, count=200_000, rng=10)
    assert abs(r.value - 1 / 6) <= 3 * r.std_error
    assert r.tail_bound == pytest.approx(math.exp(1.0) - 2.0)
    assert chaos.rho(1.0, 1.0, 2.5, HEAT, N=3).value == 0.0
    partial = [chaos.rho(1.0, 1.0, 0.0, HEAT, N=N, count=50_000, rng=11).value for N in (1, 2, 3)]
    assert partial[0] <= partial[1] <= partial[2]


def test_first_order_lag_integral_reproduces_product_form():
    # brute force gives ||gamma|| t^2 s^2 / 4, not ||gamma|| (t^2 + s^2) / 2
    for t, s in [(2.0, 2.0), (1.0, 2.0), (0.5, 1.5)]:
        brute = chaos.first_order_lag_integral_quadrature(t, s, HEAT)
        assert brute == pytest.approx(t * t * s * s / 4, rel=1e-7)
        assert chaos.first_order_lag_integral(t, s, HEAT) == pytest.approx(brute, rel=1e-7)
    assert chaos.first_order_lag_integral_quadrature(1.0, 2.0, HEAT) != pytest.approx(2.5, rel=1e-3)


def test_integrated_alpha_requires_integrable_kernel():
    with pytest.raises(ValueError):
        chaos.integrated_alpha(2, 1.0, 1.0, cv.riesz(0.5))


def test_integrated_alpha_routes_agree():
    a = chaos.integrated_alpha(2, 1.0, 1.0, HEAT, count=200_000, rng=12, route="spatial")
    b = chaos.integrated_alpha(2, 1.0, 1.0, HEAT, count=200_000, rng=13, route="fourier")
    assert abs(a.value - b.value) <= 3 * math.hypot(a.std_error, b.std_error)


def _exp_h(c):
    def h(times, atoms):
        # positive, depends on times and atoms jointly
        return np.exp(-np.einsum("mn,kn->mk", times, c * np.abs(atoms[..., 0])))
    return h


def test_symmetrization_single_atom_equality():
    h = lambda times, atoms: np.full((times.shape[0], atoms.shape[0]), 2.0)
    r = chaos.check_symmetrization_bound(1, [[[0.3]]], [1.0], h, 1.0, 1.0)
    assert r.holds and r.lhs == pytest.approx(r.rhs, rel=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=10)
def test_symmetrization_random_second_order(seed):
    gen = np.random.default_rng(seed)
    atoms, w = gen.normal(size=(5, 2, 1)), gen.uniform(0.1, 1, 5)
    r = chaos.check_symmetrization_bound(2, atoms, w, _exp_h(gen.uniform(0.1, 2, 2)), 1.0, 1.0, symmetrize=True)
    assert r.holds


@given(st.integers(0, 10_000))
@settings(max_examples=10)
def test_symmetrization_random_third_order_has_slack(seed):
    gen = np.random.default_rng(seed)
    atoms, w = gen.normal(size=(4, 3, 1)), gen.uniform(0.1, 1, 4)
    r = chaos.check_symmetrization_bound(3, atoms, w, _exp_h(gen.uniform(0.1, 2, 3)), 1.0, 0.5, symmetrize=True)
    assert r.holds and r.slack > 0


def test_symmetrization_rejects_asymmetric_measure():
    h = lambda times, atoms: np.ones((times.shape[0], atoms.shape[0]))
    with pytest.raises(ValueError):
        chaos.check_symmetrization_bound(2, [[[0.0], [1.0]]], [1.0], h, 1.0, 1.0)
