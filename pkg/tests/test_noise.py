import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from hamclt import asymptotics as asy
from hamclt import chaos
from hamclt import covariance as cv
from hamclt import noise as nz
from hamclt.cache import ArrayCache
from hamclt.chaos import ChaosKernel
from hamclt.estimate import Estimate

WHITE = cv.white(1)
HEAT = cv.heat(1.0, 1)
RIESZ = cv.riesz(0.5, 1)


def random_coefficients(order, size, gen, density=1.0):
    idx = np.array(list(itertools.combinations_with_replacement(range(size), order)), dtype=np.int64)
    keep = gen.random(idx.shape[0]) < density
    return nz.ChaosCoefficients.from_entries(order, idx[keep], gen.normal(size=keep.sum()), size)


# -- grid -------------------------------------------------------------------------------


def test_white_noise_gram_is_cell_width():
    g = nz.build_grid(1.0, 4, WHITE)
    assert np.array_equal(g.gram, np.diag(np.full(4, 0.5)))
    assert g.factor_error() < 1e-15


def test_heat_gram_row_sums_match_quadrature():
    L, M = 3.0, 12
    g = nz.build_grid(L, M, HEAT)
    h = g.width
    for j in (0, 5, 11):
        lo = -L + j * h
        direct, _ = integrate.quad(lambda x: special.ndtr(L - x) - special.ndtr(-L - x), lo, lo + h, epsabs=1e-14)
        assert g.gram[j].sum() == pytest.approx(direct, rel=1e-10)


def test_riesz_diagonal_closed_form():
    g = nz.build_grid(2.0, 8, RIESZ)
    h = g.width
    assert np.allclose(np.diag(g.gram), 2 * h**1.5 / 0.75, rtol=1e-13)
    # an off-diagonal entry against two-dimensional quadrature
    val, _ = integrate.dblquad(lambda y, x: abs(x - y) ** -0.5, 0, h, 2 * h, 3 * h, epsabs=1e-13)
    assert g.gram[0, 2] == pytest.approx(val, rel=1e-9)


@pytest.mark.parametrize("model", [HEAT, RIESZ, cv.poisson(1.0), cv.fractional(0.7), cv.bessel(1.5), cv.heat(1.0, 2)], ids=lambda m: f"{m.kind.value}{m.dimension}")
def test_factor_reproduces_gram(model):
    g = nz.build_grid(2.0, 8, model)
    assert np.allclose(g.gram, g.gram.T)
    assert g.factor_error() < 1e-8
    assert np.linalg.eigvalsh(g.gram).min() > -1e-12 * np.trace(g.gram)


def test_bessel_gram_against_direct_quadrature():
    m = cv.bessel(1.5)
    g = nz.build_grid(1.0, 4, m)
    h = g.width
    val, _ = integrate.dblquad(lambda y, x: float(m.eval_gamma(x - y)) if x != y else 0.0, 0, h, h, 2 * h, epsabs=1e-11)
    assert g.gram[0, 1] == pytest.approx(val, rel=1e-6)


def test_grid_errors():
    with pytest.raises(ValueError):
        nz.build_grid(1.0, 1, HEAT)
    with pytest.raises(NotImplementedError):
        nz.build_grid(1.0, 4, cv.riesz(1.0, 2))
    g = nz.build_grid(1.0, 4, HEAT)
    with pytest.raises(ValueError):
        g.cell_index(1.5)


def test_grid_cache_round_trip(tmp_path):
    cache = ArrayCache(tmp_path)
    a = nz.build_grid(2.0, 10, RIESZ, cache=cache)
    assert len(list(tmp_path.glob("*.bin"))) == 1
    b = nz.build_grid(2.0, 10, RIESZ, cache=cache)
    assert np.array_equal(a.gram, b.gram) and np.array_equal(a.factor, b.factor)
    assert (a.clamped, a.min_eigenvalue) == (b.clamped, b.min_eigenvalue)


# -- projection -----------------------------------------------------------------------------


def test_white_first_order_coefficients_are_cell_averages():
    g = nz.build_grid(2.0, 16, WHITE)
    c = nz.project_kernel(ChaosKernel(1, 1.0), g)
    table = c.lookup()
    for i, x in enumerate(g.axis_centers):
        lo, hi = x - g.width / 2, x + g.width / 2
        avg, _ = integrate.quad(lambda z: 0.5 * max(1 - abs(z), 0), lo, hi)
        assert table.get((i,), 0.0) == pytest.approx(avg / g.width, abs=1e-14)


def test_zero_horizon_gives_zero_tensor():
    g = nz.build_grid(2.0, 8, HEAT)
    assert nz.project_kernel(ChaosKernel(2, 0.0), g).indices.shape[0] == 0
    with pytest.raises(ValueError):
        nz.project_kernel(ChaosKernel(5, 1.0), g)


@pytest.mark.parametrize("t", [1.0, 1.5])
def test_white_noise_projection_is_orthogonal(t):
    # the first-order kernel is piecewise linear with kinks on cell boundaries, so the
    # Gauss cell averages are exact and ||f||^2 = ||projection||^2 + ||f - projection||^2
    g = nz.build_grid(2.0, 16, WHITE)
    k = ChaosKernel(1, t)
    c = nz.project_kernel(k, g, quad_order=4)
    proj = nz.discrete_inner(c, c, g)
    err, _ = nz.reconstruction_error(k, c, g, quad_order=6)
    full = _symmetric_norm_sq(k, g)
    assert proj + err**2 == pytest.approx(full, rel=1e-12)
    assert full == pytest.approx(chaos.white_noise_norm_sq(1, t), rel=1e-12)


def _symmetric_norm_sq(kernel, grid, nodes=6):
    """``||f~_n||^2`` in L^2 by Gauss-Legendre on each cell block (exact for piecewise polynomials)."""
    from hamclt import kernels

    n, t = kernel.order, kernel.horizon
    qx, qw = np.polynomial.legendre.leggauss(nodes)
    qx, qw = qx * grid.width / 2, qw / 2
    cen = grid.axis_centers
    perms = np.array(list(itertools.permutations(range(n))))
    total = 0.0
    for idx in itertools.product(range(grid.cells), repeat=n):
        if max(abs(cen[list(idx)])) > t + grid.width:
            continue
        for nodes_ in itertools.product(range(len(qx)), repeat=n):
            p = cen[list(idx)] + qx[list(nodes_)]
            f = kernels.permutation_sum(kernels.ANCHORED, p[None, :], perms, (t, 0.0, 0.0))[0] / len(perms)
            total += float(np.prod(qw[list(nodes_)])) * grid.width**n * f * f
    return total


def test_reconstruction_error_is_first_order_in_cell_width():
    errs = []
    for M in (8, 16, 32):
        g = nz.build_grid(2.0, M, WHITE)
        k = ChaosKernel(1, 1.0, (0.1,))
        errs.append(nz.reconstruction_error(k, nz.project_kernel(k, g), g)[1])
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] / errs[2] > 1.5


def test_projected_isometry_matches_continuum_norm():
    g = nz.build_grid(3.0, 60, HEAT)
    k = ChaosKernel(1, 1.0)
    c = nz.project_kernel(k, g)
    mc = chaos.kernel_norm_sq(k, HEAT, count=200_000, rng=1)
    assert nz.sparse_inner(c, c, g) == pytest.approx(mc.value, rel=0.02)


# -- Wick and Hermite arithmetic ------------------------------------------------------------


def test_first_and_second_hermite_identities():
    g = nz.build_grid(1.0, 4, WHITE)
    zeta = np.random.default_rng(0).normal(size=(50, 4))
    h = g.width
    # basis vector e_k in orthonormal coordinates is 1_cell / sqrt(h)
    e = nz.ChaosCoefficients.from_entries(1, [[2]], [1 / math.sqrt(h)], 4)
    assert np.allclose(nz.evaluate_chaos(e, g, zeta), zeta[:, 2])
    ee = nz.ChaosCoefficients.from_entries(2, [[1, 1]], [1 / h], 4)
    assert np.allclose(nz.evaluate_chaos(ee, g, zeta), zeta[:, 1] ** 2 - 1)
    assert np.allclose(nz.to_orthonormal(ee, g).evaluate(zeta), zeta[:, 1] ** 2 - 1)


@pytest.mark.parametrize("model", [HEAT, RIESZ], ids=["heat", "riesz"])
def test_exact_isometry_and_orthogonality_small_basis(model):
    # basis size 8 (<= 16): Isserlis on the Wick form and Hermite moments in orthonormal coordinates
    g = nz.build_grid(1.0, 8, model)
    gen = np.random.default_rng(1)
    cs = {n: [random_coefficients(n, 8, gen) for _ in range(2)] for n in (1, 2, 3)}
    for n, m in itertools.product((1, 2, 3), repeat=2):
        f, h = cs[n][0], cs[m][1]
        expected = math.factorial(n) * nz.discrete_inner(f, h, g) if n == m else 0.0
        scale = max(1.0, abs(expected))
        via_wick = nz.isserlis_expectation(nz.wick_form(f, g), nz.wick_form(h, g), g.gram)
        via_hermite = nz.hermite_expectation(nz.to_orthonormal(f, g), nz.to_orthonormal(h, g))
        assert abs(via_wick - expected) <= 1e-10 * scale
        assert abs(via_hermite - expected) <= 1e-10 * scale


def test_monte_carlo_isometry_random_tensors():
    g = nz.build_grid(4.0, 24, HEAT)
    gen = np.random.default_rng(2)
    zeta = nz.draw_gaussians(g, 100_000, 3)
    vals = {}
    for n in (1, 2, 3):
        c = random_coefficients(n, 24, gen, density=0.05 if n == 3 else 0.5)
        vals[n] = (c, nz.evaluate_chaos(c, g, zeta))
    for n, (c, v) in vals.items():
        target = math.factorial(n) * (nz.sparse_inner(c, c, g) if n < 3 else nz.discrete_inner(c, c, g))
        est = Estimate.from_samples(v * v)
        assert abs(est.value - target) <= 3 * est.std_error
        assert abs(v.mean()) <= 3 * v.std() / math.sqrt(v.size)
    for n, m in ((1, 2), (1, 3), (2, 3)):
        cross = Estimate.from_samples(vals[n][1] * vals[m][1])
        assert abs(cross.value) <= 3 * cross.std_error


@given(st.integers(0, 2**31), st.integers(2, 3))
@settings(max_examples=25)
def test_symmetrization_contracts_the_norm(seed, n):
    gen = np.random.default_rng(seed)
    g = nz.build_grid(1.0, 5, RIESZ)
    for _ in range(40):
        a = gen.normal(size=(5,) * n)
        assert nz.tensor_inner(nz.symmetrize_tensor(a), nz.symmetrize_tensor(a), g.gram) <= nz.tensor_inner(a, a, g.gram) * (1 + 1e-12) + 1e-15


def test_sparse_and_dense_inner_agree():
    g = nz.build_grid(1.0, 6, HEAT)
    gen = np.random.default_rng(4)
    for n in (1, 2):
        a, b = random_coefficients(n, 6, gen), random_coefficients(n, 6, gen)
        assert nz.sparse_inner(a, b, g) == pytest.approx(nz.discrete_inner(a, b, g), rel=1e-12)


# -- solution samples -------------------------------------------------------------------------


def _point_coeffs(grid, xs, t, n_sim):
    return {n: [nz.project_kernel(ChaosKernel(n, t, (x,)), grid) for x in xs] for n in range(1, n_sim + 1)}


def test_solution_mean_is_one():
    g = nz.build_grid(3.0, 48, HEAT)
    xs = np.linspace(-1, 1, 5)
    s = nz.sample_solution(g, _point_coeffs(g, xs, 1.0, 3), xs, count=20_000, rng=5)
    se = s.values.std(axis=0, ddof=1) / math.sqrt(s.values.shape[0])
    assert np.all(np.abs(s.mean() - 1) <= 3 * se)


def test_spatial_integral_zero_and_centred():
    g = nz.build_grid(3.0, 48, HEAT)
    xs = np.linspace(-2, 2, 17)
    empty = {1: [nz.ChaosCoefficients.from_entries(1, np.zeros((0, 1)), [], g.size) for _ in xs]}
    s0 = nz.sample_solution(g, empty, xs, count=10, rng=1)
    assert np.all(nz.spatial_integral(s0, 2.0) == 0)
    s = nz.sample_solution(g, _point_coeffs(g, xs, 1.0, 1), xs, count=10_000, rng=6)
    F = nz.spatial_integral(s, 2.0, half_width=3.0)
    assert abs(F.mean()) <= 3 * F.std() / math.sqrt(F.size)
    with pytest.raises(ValueError):
        nz.spatial_integral(s, 4.0, half_width=3.0)


def test_first_chaos_ball_variance_matches_continuum():
    g = nz.build_grid(8.0, 128, RIESZ)
    disc = nz.discrete_covariance(g, 4.0, 1.0, 1.0, orders=(1,))
    cont = asy.first_chaos_covariance(4.0, 1.0, 1.0, RIESZ).value
    assert disc == pytest.approx(cont, rel=0.01)
    zeta = nz.draw_gaussians(g, 20_000, 7)
    F = nz.ball_average_samples(g, [4.0], [1.0], 1, zeta)[(4.0, 1.0)]
    est = Estimate.from_samples(F * F)
    assert abs(est.value - disc) <= 3 * est.std_error


def test_refinement_changes_variance_less_than_discretisation_error():
    cont = asy.first_chaos_covariance(4.0, 1.0, 1.0, HEAT).value
    coarse = nz.discrete_covariance(nz.build_grid(6.0, 24, HEAT), 4.0, 1.0, 1.0, orders=(1,))
    fine = nz.discrete_covariance(nz.build_grid(6.0, 48, HEAT), 4.0, 1.0, 1.0, orders=(1,))
    assert abs(fine - coarse) <= abs(coarse - cont)
    assert abs(fine - cont) < abs(coarse - cont)


# -- Malliavin derivatives --------------------------------------------------------------------


def test_first_order_derivative_is_kernel():
    # odd cell count puts x = 0 at a cell centre; midpoint coefficients are kernel values
    g = nz.build_grid(3.0, 15, WHITE)
    c = {1: nz.project_kernel(ChaosKernel(1, 2.0), g, quad_order=1)}
    d = nz.malliavin_derivative(c, g, 0.0)
    assert d.mean == pytest.approx(1.0, abs=1e-14) and d.l2_exact == pytest.approx(1.0, abs=1e-14)


def test_derivative_mean_is_first_kernel():
    g = nz.build_grid(3.0, 31, HEAT)
    coeffs = {n: nz.project_kernel(ChaosKernel(n, 1.0), g, quad_order=1) for n in (1, 2, 3)}
    zeta = nz.draw_gaussians(g, 20_000, 8)
    for z in (0.0, 0.4, -0.6):
        d = nz.malliavin_derivative(coeffs, g, z, zeta)
        centre = g.axis_centers[g.cell_index(z)]
        f1 = float(chaos.f_closed_form(ChaosKernel(1, 1.0), [centre]))
        assert d.mean == pytest.approx(f1, abs=1e-14)
        assert abs(d.values.mean() - f1) <= 3 * d.values.std() / math.sqrt(d.values.size)
        # exact L2 norm against the sample second moment
        m2 = Estimate.from_samples(d.values**2)
        assert abs(m2.value - d.l2_exact**2) <= 3 * m2.std_error


def test_derivative_lowers_chaos_order():
    g = nz.build_grid(1.0, 8, HEAT)
    c3 = nz.project_kernel(ChaosKernel(3, 1.0), g)
    sl = c3.slice([g.cell_index(0.1)])
    assert sl.order == 2
    gen = np.random.default_rng(9)
    form = nz.wick_form(sl, g)
    for m in (0, 1, 3):
        test = random_coefficients(m, 8, gen) if m else nz.ChaosCoefficients(0, np.zeros((1, 0), dtype=np.int64), np.array([1.0]), 8)
        assert abs(nz.isserlis_expectation(form, nz.wick_form(test, g), g.gram)) < 1e-13
    same = random_coefficients(2, 8, gen)
    assert abs(nz.isserlis_expectation(form, nz.wick_form(same, g), g.gram)) > 1e-8


def test_derivative_outside_domain():
    g = nz.build_grid(1.0, 8, HEAT)
    with pytest.raises(ValueError):
        nz.malliavin_derivative({1: nz.project_kernel(ChaosKernel(1, 1.0), g)}, g, 2.0)


def test_second_derivative_exact_ratio_two():
    g = nz.build_grid(3.0, 15, HEAT)
    coeffs = {n: nz.project_kernel(ChaosKernel(n, 1.0), g, quad_order=1) for n in (1, 2)}
    pts = g.axis_centers[5:10]
    rep = nz.second_derivative_bound_check(coeffs, g, pts, pts, 1.0, 0.0)
    finite = rep.ratios[np.isfinite(rep.ratios)]
    assert finite.size > 0
    assert np.all(np.abs(finite - 2.0) <= 1e-10)


def test_second_derivative_vanishes_outside_cones():
    g = nz.build_grid(3.0, 15, HEAT)
    coeffs = {n: nz.project_kernel(ChaosKernel(n, 1.0), g, quad_order=1) for n in (1, 2, 3)}
    mean, l2 = nz.second_derivative_l2(coeffs, g, 2.0, -2.0)
    assert mean == 0.0 and l2 == 0.0


def test_second_derivative_bounded_on_grid_three_orders():
    g = nz.build_grid(3.0, 31, HEAT)
    coeffs = {n: nz.project_kernel(ChaosKernel(n, 1.0), g, quad_order=1) for n in (1, 2, 3)}
    pts = g.axis_centers[np.linspace(10, 20, 5).astype(int)]
    rep = nz.second_derivative_bound_check(coeffs, g, pts, pts, 1.0, 0.0)
    assert np.isfinite(rep.max_ratio) and not np.any(np.isposinf(rep.ratios))
    assert rep.min_ratio >= 2.0 - 1e-12
