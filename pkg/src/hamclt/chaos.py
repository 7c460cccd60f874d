"""Chaos kernels of the solution and their pairings.

The order-``n`` kernel is

``f_n(x_1..x_n, x; t) = int_{0<t_1<...<t_n<t} prod_j G_{t_{j+1}-t_j}(x_{j+1} - x_j) dt``

with ``t_{n+1} = t`` and ``x_{n+1} = x``.  In one dimension it has the closed
form ``2^-n (t - L)_+^n / n!`` where ``L`` is the length of the chain
``x_1, ..., x_n, x``.

Covariance terms follow the convention

``alpha_n(z; t, s) = n! sum_rho < f_n(., z; t), f_n(., 0; s) o rho >``

so that ``E[u(t, x) u(s, y)] - 1 = sum_n alpha_n(x - y; t, s) / n!``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import kernels, wave
from ._pairing import fourier_samples, permutations, spatial_samples
from .covariance import CovarianceModel, Kind
from .estimate import Estimate
from .simplex import gauss_nodes, simplex_volume, uniform_nodes
from .streams import Stream, as_stream

N_MAX = 4


class OrderTooLarge(ValueError):
    """Raised when a permutation sum would exceed ``N_MAX``."""


def _check_order(n: int) -> None:
    if n < 1:
        raise ValueError("chaos order must be at least 1")
    if n > N_MAX:
        raise OrderTooLarge(f"order {n} exceeds the permutation-sum limit {N_MAX}")


@dataclass(frozen=True)
class ChaosKernel:
    order: int
    horizon: float
    anchor: tuple[float, ...] = (0.0,)

    @property
    def dimension(self) -> int:
        return len(self.anchor)


@dataclass(frozen=True)
class CovarianceSeriesTerm:
    order: int
    times: tuple[float, float]
    lag: tuple[float, ...]
    value: float
    mc_std_error: float


@dataclass(frozen=True)
class SeriesValue:
    """Truncated series with its Monte Carlo error and an analytic tail majorant."""

    value: float
    std_error: float
    tail_bound: float
    terms: tuple[Estimate, ...] = ()


# -- pointwise evaluation --------------------------------------------------------


def _points(kernel: ChaosKernel, points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    d = kernel.dimension
    if d == 1 and (p.ndim == 1 or p.shape[-1] != 1):
        p = p[..., None]
    if p.shape[-2:] != (kernel.order, d):
        raise ValueError(f"points must have shape (..., {kernel.order}, {d})")
    return p


def _chain(kernel: ChaosKernel, p: np.ndarray) -> np.ndarray:
    anchor = np.broadcast_to(np.asarray(kernel.anchor, dtype=float), p.shape[:-2] + (1, kernel.dimension))
    full = np.concatenate([p, anchor], axis=-2)
    return np.sqrt(np.sum(np.diff(full, axis=-2) ** 2, axis=-1))


def f_closed_form(kernel: ChaosKernel, points) -> np.ndarray:
    """One-dimensional closed form ``2^-n (t - chain length)_+^n / n!``."""
    if kernel.dimension != 1:
        raise ValueError("closed form exists for d = 1 only")
    n, t = kernel.order, kernel.horizon
    length = _chain(kernel, _points(kernel, points)).sum(axis=-1)
    return 0.5**n * np.clip(t - length, 0.0, None) ** n / math.factorial(n)


def _cone_volume(gaps: np.ndarray, budget: float, tol: float) -> float:
    """Volume of ``{u >= 0 : sum_j gaps_j cosh(u_j) < budget}``."""
    a = gaps[-1]
    if budget <= np.sum(gaps):
        return 0.0
    if gaps.size == 1:
        return math.acosh(budget / a) if a > 0 else math.inf
    if a == 0:
        raise ValueError("coincident consecutive points give a singular planar kernel")
    top = math.acosh(budget / a)
    val, err = integrate.quad(lambda u: _cone_volume(gaps[:-1], budget - a * math.cosh(u), tol), 0.0, top, epsabs=0, epsrel=tol, limit=200)
    return val


def eval_f_n(kernel: ChaosKernel, points, method: str = "auto", *, order: int = 24, count: int = 100_000, rng=None, tol: float = 1e-8):
    """Evaluate ``f_n`` at one or more point configurations.

    Parameters
    ----------
    kernel : ChaosKernel
    points : array
        Shape ``(..., n, d)``; for ``d = 1`` also ``(..., n)``.
    method : {"auto", "exact", "gauss", "mc", "cone"}
        ``exact`` is the one-dimensional closed form.  ``gauss`` and ``mc``
        integrate the product of wave kernels over the time simplex with a
        Gauss-Legendre tensor rule or sorted uniforms; they are meant for
        ``d = 1`` where the integrand is bounded.  ``cone`` is the planar
        reduction: substituting ``t_{j+1} - t_j = |x_{j+1} - x_j| cosh u_j``
        turns the time integral into ``(2 pi)^-n`` times the volume of
        ``{u >= 0 : sum_j |x_{j+1} - x_j| cosh u_j < t}``, integrated by
        nested adaptive quadrature.  ``auto`` picks ``exact`` or ``cone``.

    Returns
    -------
    ndarray or (ndarray, ndarray)
        Values, and for ``mc`` also standard errors.
    """
    n, t, d = kernel.order, kernel.horizon, kernel.dimension
    p = _points(kernel, points)
    if method == "auto":
        method = "exact" if d == 1 else "cone"
    if t <= 0:
        return np.zeros(p.shape[:-2])
    if method == "exact":
        return f_closed_form(kernel, p)
    gaps = _chain(kernel, p)
    flat = gaps.reshape(-1, n)
    if method == "cone":
        if d != 2:
            raise ValueError("the cone reduction is for d = 2")
        out = np.array([_cone_volume(g, t, tol) for g in flat]) / (2 * math.pi) ** n
        return out.reshape(gaps.shape[:-1])
    if method == "gauss":
        times, w = gauss_nodes(n, t, order)
        tau = np.diff(np.concatenate([times, np.full((times.shape[0], 1), t)], axis=1), axis=1)
        vals = np.empty(flat.shape[0])
        for i, g in enumerate(flat):
            vals[i] = np.sum(w * np.prod(wave.green(d, tau, g[None, :]), axis=1))
        return vals.reshape(gaps.shape[:-1])
    if method == "mc":
        stream = as_stream(rng)
        vals = np.empty(flat.shape[0])
        errs = np.empty(flat.shape[0])
        for i, g in enumerate(flat):
            samples = []
            for gen, _, size in stream.child(i).blocks(count):
                times, vol = uniform_nodes(gen, n, t, size)
                tau = np.diff(np.concatenate([times, np.full((size, 1), t)], axis=1), axis=1)
                samples.append(vol * np.prod(wave.green(d, tau, g[None, :]), axis=1))
            est = Estimate.from_samples(np.concatenate(samples))
            vals[i], errs[i] = est.value, est.std_error
        return vals.reshape(gaps.shape[:-1]), errs.reshape(gaps.shape[:-1])
    raise ValueError(f"unknown method {method!r}")


# -- norms and covariance terms ------------------------------------------------


def _resolve_route(route: str, model: CovarianceModel) -> str:
    if route == "auto":
        return "spatial" if model.dimension == 1 and model.integrable else "fourier"
    if route not in ("spatial", "fourier"):
        raise ValueError(f"unknown route {route!r}")
    if route == "spatial" and model.dimension != 1:
        raise ValueError("the spatial route is implemented for d = 1 only")
    return route


def norm_bound(n: int, t: float, model: CovarianceModel) -> float:
    """Majorant ``(t^n / n!)^2 (D_t C_mu)^n`` of ``||f_n(., x; t)||^2``."""
    return (t**n / math.factorial(n)) ** 2 * (wave.fourier_bound_constant(t) * model.dalang_constant) ** n


def white_noise_norm_sq(n: int, t: float) -> float:
    """Exact ``||f_n(., x; t)||^2`` for one-dimensional white noise.

    ``int (2^-n (t - L)_+^n / n!)^2`` over ``n`` signed gaps, which gives
    ``2^-n (2n)! t^(3n) / ((n!)^2 (3n)!)``.
    """
    return 0.5**n * math.factorial(2 * n) * t ** (3 * n) / (math.factorial(n) ** 2 * math.factorial(3 * n))


def kernel_norm_sq(kernel: ChaosKernel, model: CovarianceModel, count: int = 100_000, rng=None, route: str = "fourier", proposal: str = "default") -> Estimate:
    """Monte Carlo estimate of ``||f_n(., x; t)||^2`` in the noise's Hilbert norm."""
    n, t = kernel.order, kernel.horizon
    if kernel.dimension != model.dimension:
        raise ValueError("kernel and model dimensions differ")
    model.dalang_constant  # raises if the condition fails
    if t <= 0:
        return Estimate.exact(0.0)
    stream = as_stream(rng)
    if route == "fourier":
        x = fourier_samples(model, n, t, t, count, stream, permute=False, proposal=proposal)
    elif route == "spatial":
        anchor = kernel.anchor[0]
        x = spatial_samples(model, n, (kernels.ANCHORED, (t, anchor)), (kernels.ANCHORED, (t, anchor)), count, stream, permute=False)
    else:
        raise ValueError(f"unknown route {route!r}")
    return Estimate.from_samples(x)


def _check_lag(model: CovarianceModel, z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (model.dimension,):
        raise ValueError("lag must be a point of R^d")
    return z


def alpha_n(n: int, z, t: float, s: float, model: CovarianceModel, count: int = 100_000, rng=None, route: str = "auto") -> CovarianceSeriesTerm:
    """Covariance term ``alpha_n(z; t, s)``.

    The spatial route (default for integrable ``gamma`` in ``d = 1``) samples
    offsets proportionally to ``gamma``; the Fourier route works for every
    model.
    """
    _check_order(n)
    model.dalang_constant
    z = _check_lag(model, z)
    route = _resolve_route(route, model)
    stream = as_stream(rng)
    if np.linalg.norm(z) >= t + s or t <= 0 or s <= 0:
        return CovarianceSeriesTerm(n, (t, s), tuple(z), 0.0, 0.0)
    if route == "fourier":
        x = fourier_samples(model, n, t, s, count, stream, lag=z)
    else:
        x = spatial_samples(model, n, (kernels.ANCHORED, (t, z[0])), (kernels.ANCHORED, (s, 0.0)), count, stream)
    est = Estimate.from_samples(x).scale(math.factorial(n))
    return CovarianceSeriesTerm(n, (t, s), tuple(z), est.value, est.std_error)


def integrated_alpha(n: int, t: float, s: float, model: CovarianceModel, count: int = 100_000, rng=None, route: str = "auto") -> Estimate:
    """``int alpha_n(z; t, s) dz`` over ``R^d`` (requires integrable ``gamma``).

    For ``n = 1`` the value is ``||gamma|| t^2 s^2 / 4`` exactly and is returned
    as a deterministic estimate.
    """
    _check_order(n)
    if not model.integrable:
        raise ValueError("the lag integral of alpha_n needs an integrable covariance")
    if t <= 0 or s <= 0:
        return Estimate.exact(0.0)
    if n == 1:
        return Estimate.exact(first_order_lag_integral(t, s, model))
    route = _resolve_route(route, model)
    stream = as_stream(rng)
    if route == "fourier":
        x = fourier_samples(model, n, t, s, count, stream, pin_last=True)
    else:
        x = spatial_samples(model, n, (kernels.ANCHOR_INTEGRATED, (t,)), (kernels.ANCHORED, (s, 0.0)), count, stream)
    return Estimate.from_samples(x).scale(math.factorial(n))


def first_order_lag_integral(t: float, s: float, model: CovarianceModel) -> float:
    """``int alpha_1(z; t, s) dz = ||gamma|| (int f_1(.; t)) (int f_1(.; s)) = ||gamma|| t^2 s^2 / 4``."""
    return model.gamma_mass * (t * t / 2) * (s * s / 2)


def first_order_lag_integral_quadrature(t: float, s: float, model: CovarianceModel, tol: float = 1e-10) -> float:
    """Brute-force ``int dz int int f_1(x, z; t) f_1(y, 0; s) gamma(x - y) dx dy`` in one dimension.

    Substitutes ``x = z + a`` and ``y = b`` and integrates over ``(a, b, c)``
    with ``c = x - y``; the ``z`` integral is then ``int gamma(c) dc`` applied to
    the product of the first-order kernels, evaluated by a triple quadrature.
    """
    if model.dimension != 1:
        raise ValueError("brute-force quadrature is implemented for d = 1")
    f_t = lambda a: 0.5 * max(t - abs(a), 0.0)
    f_s = lambda b: 0.5 * max(s - abs(b), 0.0)
    if model.kind == Kind.WHITE:
        mass = 1.0
    else:
        mass, _ = integrate.quad(lambda c: float(model.eval_gamma(c)), -np.inf, np.inf, epsabs=0, epsrel=tol, limit=400)
    inner, _ = integrate.dblquad(lambda b, a: f_t(a) * f_s(b), -t, t, -s, s, epsabs=0, epsrel=tol)
    return mass * inner


def rho_tail_bound(t: float, s: float, model: CovarianceModel, N: int) -> float:
    """``sum_{n > N} x^n / n!`` with ``x = t s sqrt(D_t D_s) C_mu``.

    Each term bounds ``alpha_n / n! = n! <f~_n(t), f~_n(s)>`` through
    Cauchy-Schwarz, ``||f~_n|| <= ||f_n||`` and :func:`norm_bound`.
    """
    x = t * s * math.sqrt(wave.fourier_bound_constant(t) * wave.fourier_bound_constant(s)) * model.dalang_constant
    if x == 0:
        return 0.0
    return float(math.exp(x) * special.gammainc(N + 1, x))


def rho(t: float, s: float, z, model: CovarianceModel, N: int = 3, count: int = 100_000, rng=None, route: str = "auto") -> SeriesValue:
    """Truncated covariance series ``sum_{n <= N} alpha_n(z; t, s) / n!`` with tail majorant."""
    _check_order(N)
    stream = as_stream(rng)
    terms = []
    total = Estimate.exact(0.0)
    for n in range(1, N + 1):
        term = alpha_n(n, z, t, s, model, count, stream.child(n), route)
        est = Estimate(term.value / math.factorial(n), term.mc_std_error / math.factorial(n), count)
        terms.append(est)
        total = total + est
    return SeriesValue(total.value, total.std_error, rho_tail_bound(t, s, model, N), tuple(terms))


# -- symmetrization inequality -------------------------------------------------------


@dataclass(frozen=True)
class SymmetrizationCheck:
    holds: bool
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def symmetrize_measure(atoms, weights) -> tuple[np.ndarray, np.ndarray]:
    """Spread each atom's weight evenly over its coordinate permutations."""
    atoms = np.asarray(atoms, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = atoms.shape[1]
    perms = permutations(n)
    sym = atoms[:, perms].reshape(-1, *atoms.shape[1:])
    return sym, np.repeat(weights / len(perms), len(perms))


def _is_symmetric(atoms: np.ndarray, weights: np.ndarray, tol: float = 1e-12) -> bool:
    perms = permutations(atoms.shape[1])
    flat = atoms.reshape(atoms.shape[0], -1)
    for rho in perms[1:]:
        moved = atoms[:, rho].reshape(atoms.shape[0], -1)
        for i in range(atoms.shape[0]):
            hit = np.all(np.abs(flat - moved[i]) <= tol, axis=1)
            if not np.any(hit) or abs(weights[hit].sum() - weights[np.all(np.abs(flat - flat[i]) <= tol, axis=1)].sum()) > tol * max(1.0, abs(weights).sum()):
                return False
    return True


def check_symmetrization_bound(n: int, atoms, weights, h, t: float, s: float, order: int = 12, symmetrize: bool = False) -> SymmetrizationCheck:
    """Check the symmetrization inequality on a discrete symmetric measure.

    Verifies

    ``sum_rho int_{T_n(t)} int_{T_n(s)} sum_a w_a h(t., xi_a) h(s., xi_a o rho)
    <= (s^n + t^n) / 2 * int_{T_n(t)} sum_a w_a h(t., xi_a)^2``

    for ``0 < s <= t``, with both time integrals by Gauss-Legendre simplex
    rules and the permutation sum evaluated exhaustively.

    Parameters
    ----------
    atoms : array, shape (k, n, d)
    weights : array, shape (k,)
        Nonnegative atom weights.
    h : callable
        ``h(times, atoms)`` with ``times`` of shape ``(m, n)`` and ``atoms``
        of shape ``(k, n, d)`` returning nonnegative values of shape ``(m, k)``.
    symmetrize : bool
        Symmetrize the measure first; otherwise an asymmetric measure raises.
    """
    _check_order(n)
    if not 0 < s <= t:
        raise ValueError("need 0 < s <= t")
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim == 2:
        atoms = atoms[..., None]
    weights = np.asarray(weights, dtype=float)
    if atoms.shape[1] != n:
        raise ValueError("atoms must have n coordinates")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if symmetrize:
        atoms, weights = symmetrize_measure(atoms, weights)
    elif not _is_symmetric(atoms, weights):
        raise ValueError("the measure is not symmetric under coordinate permutations")
    tt, wt = gauss_nodes(n, t, order)
    ts, ws = gauss_nodes(n, s, order)
    ht = h(tt, atoms)
    H_t = wt @ ht
    lhs = 0.0
    for rho in permutations(n):
        H_s = ws @ h(ts, atoms[:, rho])
        lhs += float(np.sum(weights * H_t * H_s))
    rhs = (s**n + t**n) / 2 * float(np.sum(weights * (wt @ ht**2)))
    return SymmetrizationCheck(lhs <= rhs * (1 + 1e-12), lhs, rhs)
