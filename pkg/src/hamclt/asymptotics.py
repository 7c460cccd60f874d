"""Large-ball asymptotics of the spatial integral ``F_R(t) = int_{B_R} (u(t,x) - 1) dx``.

Chaos component ``J_{n,R}(t) = I_n(g_{n,R}(.; t))`` with
``g_{n,R}(.; t) = int_{B_R} f_n(., x; t) dx``; second moments follow the
convention ``E[J_n(t) J_n(s)] = sum_rho < g_{n,R}(t), g_{n,R}(s) o rho >``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats
from scipy.stats import qmc

from . import kernels, wave
from ._pairing import fourier_samples, spatial_samples
from .chaos import _check_order, first_order_lag_integral, integrated_alpha
from .covariance import CovarianceModel, Kind, ball_volume, riesz, sphere_area
from .estimate import Estimate
from .streams import Stream, as_stream


# -- limit constants -------------------------------------------------------------


def kappa_closed_form(beta: float) -> float:
    """``int_{[-1,1]^2} |x - y|^-beta dx dy = 2^(3-beta) / ((1-beta)(2-beta))``."""
    if not 0 < beta < 1:
        raise ValueError("need 0 < beta < 1 in one dimension")
    return 2.0 ** (3 - beta) / ((1 - beta) * (2 - beta))


def ball_overlap(d: int, r) -> np.ndarray:
    """Volume of ``B_1 cap (B_1 + v)`` with ``|v| = r``."""
    r = np.asarray(r, dtype=float)
    if d == 1:
        return np.clip(2.0 - r, 0.0, None)
    h = np.clip(r / 2, 0.0, 1.0)
    return np.where(r < 2, 2 * np.arccos(h) - 2 * h * np.sqrt(1 - h * h), 0.0)


def kappa_quadrature(beta: float, d: int, tol: float = 1e-12) -> float:
    """Radial quadrature ``|S^{d-1}| int_0^2 r^(d-1-beta) overlap(r) dr``."""
    if not 0 < beta < d:
        raise ValueError("kappa diverges unless 0 < beta < d")
    val, _ = integrate.quad(lambda r: float(ball_overlap(d, r)), 0.0, 2.0, weight="alg", wvar=(d - 1 - beta, 0.0), epsabs=0, epsrel=tol, limit=200)
    return sphere_area(d) * val


def kappa_mc(beta: float, d: int, count: int = 2**20, rng=None, replicates: int = 16) -> Estimate:
    """Randomised quasi-Monte Carlo estimate of ``int_{B_1^2} |x - y|^-beta``.

    The offset ``u = y - x`` is drawn with density proportional to
    ``|u|^-beta`` on ``B_2`` and ``x`` uniformly in ``B_1``, so the estimator
    is the bounded indicator ``Z omega_d 1{x + u in B_1}``.  Independent
    scrambled Sobol replicates give the standard error.
    """
    if not 0 < beta < d:
        raise ValueError("kappa diverges unless 0 < beta < d")
    stream = as_stream(rng)
    z_mass = sphere_area(d) * 2.0 ** (d - beta) / (d - beta)
    per = max(2, count // replicates)
    m = int(math.ceil(math.log2(per)))
    values = []
    for rep in range(replicates):
        seed = int(np.random.SeedSequence([stream.seed, stream.stream, rep]).generate_state(1)[0])
        v = qmc.Sobol(2 * d + (1 if d == 1 else 0), scramble=True, seed=seed).random_base2(m)
        if d == 1:
            x = 2 * v[:, 0] - 1
            r = 2 * v[:, 1] ** (1 / (1 - beta))
            u = np.where(v[:, 2] < 0.5, -r, r)
            hit = np.abs(x + u) < 1
        else:
            rx = np.sqrt(v[:, 0])
            ax = 2 * math.pi * v[:, 1]
            ru = 2 * v[:, 2] ** (1 / (2 - beta))
            au = 2 * math.pi * v[:, 3]
            px = rx * np.cos(ax) + ru * np.cos(au)
            py = rx * np.sin(ax) + ru * np.sin(au)
            hit = px * px + py * py < 1
        values.append(z_mass * ball_volume(d) * hit.mean())
    values = np.array(values)
    return Estimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(replicates)), int(per) * replicates)


def kappa(beta: float, d: int) -> float:
    return kappa_closed_form(beta) if d == 1 else kappa_quadrature(beta, d)


@dataclass(frozen=True)
class LimitConstants:
    """Limit constants at a pair of times.

    ``K`` is set for integrable covariances, ``Kprime`` and ``kappa`` for the
    Riesz kernel.
    """

    t: float
    s: float
    omega_d: float
    K: float | None = None
    K_std_error: float = 0.0
    K_tail_bound: float = 0.0
    K_terms: tuple = ()
    Kprime: float | None = None
    kappa: float | None = None


def limit_constant_Kprime(t: float, s: float, beta: float, d: int) -> LimitConstants:
    """``K'(t, s) = (t^2 s^2 / 4) kappa_{beta,d}`` for the Riesz kernel."""
    if not 0 < beta < min(d, 2):
        raise ValueError("need 0 < beta < min(d, 2)")
    k = kappa(beta, d)
    return LimitConstants(t, s, ball_volume(d), Kprime=t * t * s * s / 4 * k, kappa=k)


def lag_integral_tail_bound(t: float, s: float, model: CovarianceModel, N: int) -> float:
    """``sum_{n > N} (1/n!) T^(4+n) ||gamma|| (D_T C_mu)^(n-1)`` with ``T = max(t, s)``.

    Majorises the omitted terms ``int alpha_n dz / n!`` of the lag-integrated
    covariance series.
    """
    T = max(t, s)
    DC = wave.fourier_bound_constant(T) * model.dalang_constant
    x = T * DC
    return T**4 * model.gamma_mass / DC * float(math.exp(x) * special.gammainc(N + 1, x))


def limit_constant_K(t: float, s: float, model: CovarianceModel, N: int = 3, count: int = 100_000, rng=None, route: str = "auto") -> LimitConstants:
    """``K(t, s) = omega_d int rho_{t,s}(z) dz`` truncated at order ``N``.

    The first order is exact; higher orders are Monte Carlo estimates of
    ``int alpha_n dz``.  ``K_tail_bound`` majorises the omitted orders.
    """
    if not model.integrable:
        raise ValueError("gamma is not integrable; use limit_constant_Kprime")
    _check_order(N)
    stream = as_stream(rng)
    omega = ball_volume(model.dimension)
    terms = []
    total = Estimate.exact(0.0)
    for n in range(1, N + 1):
        est = integrated_alpha(n, t, s, model, count, stream.child(n), route).scale(omega / math.factorial(n))
        terms.append(est)
        total = total + est
    tail = omega * lag_integral_tail_bound(t, s, model, N)
    return LimitConstants(t, s, omega, K=total.value, K_std_error=total.std_error, K_tail_bound=tail, K_terms=tuple(terms))


# -- ball energy and first chaos -------------------------------------------------------


def ball_energy(R: float, model: CovarianceModel, tol: float = 1e-10) -> float:
    """``int_{B_R} int_{B_R} gamma(x - y) dx dy`` (equal to ``int |F 1_{B_R}|^2 d mu``)."""
    d = model.dimension
    if R <= 0:
        return 0.0
    if model.kind == Kind.WHITE:
        return 2.0 * R
    if model.kind == Kind.RIESZ:
        return kappa(model.beta, d) * R ** (2 * d - model.beta)
    if model.kind == Kind.FRACTIONAL and d == 1:
        h = model.hurst[0]
        return h * (2 * h - 1) * kappa(2 - 2 * h, 1) * R ** (2 * h)
    if d == 1:
        f = lambda u: 2.0 * float(model.eval_gamma(u)) * (2 * R - u)
        val, _ = integrate.quad(f, 0.0, 2 * R, epsabs=0, epsrel=tol, limit=400, points=[min(1.0, R)])
        return val
    if model.kind == Kind.FRACTIONAL:
        def inner(r):
            g, _ = integrate.quad(lambda a: float(model.eval_gamma([r * math.cos(a), r * math.sin(a)])), 0, math.pi / 2, epsrel=1e-9, limit=200)
            return 4 * g * r * R * R * float(ball_overlap(2, r / R))
        val, _ = integrate.quad(inner, 0.0, 2 * R, epsrel=1e-8, limit=200)
        return val
    f = lambda r: 2 * math.pi * r * float(model.eval_gamma(np.array([r, 0.0]))) * R * R * float(ball_overlap(2, r / R))
    val, _ = integrate.quad(f, 0.0, 2 * R, epsabs=0, epsrel=tol, limit=400, points=[min(1.0, R)])
    return val


def _tent_deltas(horizons_and_signs):
    """Second derivative of ``sum_k sign_k (t_k - |v|)_+ / 2`` as point masses."""
    pos, wts = [], []
    for t, sign in horizons_and_signs:
        if t <= 0:
            continue
        pos += [-t, 0.0, t]
        wts += [0.5 * sign, -1.0 * sign, 0.5 * sign]
    return np.array(pos), np.array(wts)


def _pair_kernel(first, second):
    """Autocorrelation-type kernel ``kappa(w) = int A(v) B(v - w) dv`` of two tents as a cubic spline."""
    pa, wa = _tent_deltas(first)
    pb, wb = _tent_deltas(second)
    p = (pa[:, None] - pb[None, :]).ravel()
    w = (wa[:, None] * wb[None, :]).ravel()
    reach = max([abs(t) for t, _ in first] + [0.0]) + max([abs(t) for t, _ in second] + [0.0])

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.sum(w * np.abs(x[..., None] - p) ** 3, axis=-1) / 12.0

    return value, np.unique(np.round(p, 14)), reach


def _first_chaos_1d(R, first, second, model, tol):
    kap, breaks, m = _pair_kernel(first, second)

    def Q(u):
        lo, hi = -m, m
        pts = [b for b in list(breaks) + [u, u - 2 * R, u + 2 * R] if lo < b < hi]
        f = lambda w: float(kap(w)) * max(2 * R - abs(u - w), 0.0)
        val, _ = integrate.quad(f, lo, hi, points=sorted(set(pts)) or None, epsabs=1e-15, epsrel=tol, limit=200)
        return val

    if model.kind == Kind.WHITE:
        return Q(0.0)
    top = 2 * R + m
    cuts = sorted({c for c in (m, 2 * R - m, 2 * R, 2 * R + m) if 0 < c < top} | {top})
    total = 0.0
    lo = 0.0
    for hi in cuts:
        if model.kind in (Kind.RIESZ, Kind.FRACTIONAL) and lo == 0.0:
            beta = model.beta if model.kind == Kind.RIESZ else 2 - 2 * model.hurst[0]
            c = 1.0 if model.kind == Kind.RIESZ else model.hurst[0] * (2 * model.hurst[0] - 1)
            val, _ = integrate.quad(lambda u: c * Q(u), lo, hi, weight="alg", wvar=(-beta, 0.0), epsabs=0, epsrel=tol, limit=200)
        else:
            pts = [p for p in (1.0,) if lo < p < hi]
            val, _ = integrate.quad(lambda u: float(model.eval_gamma(u)) * Q(u), lo, hi, points=pts or None, epsabs=0, epsrel=tol, limit=200)
        total += 2 * val
        lo = hi
    return total


def first_chaos_covariance(R: float, t: float, s: float, model: CovarianceModel, count: int = 400_000, rng=None, tol: float = 1e-9) -> Estimate:
    """``E[J_{1,R}(t) J_{1,R}(s)]``.

    In one dimension the value is ``int gamma(u) Q(u) du`` where ``Q`` is the
    autocorrelation of ``1_{[-R,R]}`` convolved with the pair kernel of two
    tents; ``Q`` is evaluated by adaptive quadrature around its breakpoints.
    In two dimensions a Monte Carlo estimator with bounded weights is used.
    """
    if R <= 0 or t <= 0 or s <= 0:
        return Estimate.exact(0.0)
    if model.dimension == 1:
        return Estimate.exact(_first_chaos_1d(R, [(t, 1.0)], [(s, 1.0)], model, tol))
    return _first_chaos_mc(R, t, s, model, count, as_stream(rng))


def _sample_first_kernel_offsets(gen, d, t, count):
    # f_1(., x; t) = int_0^t G_tau d tau: draw tau with density tau / (t^2 / 2), then G_tau / tau
    tau = t * np.sqrt(gen.random(count))
    return wave.sample_green_offsets(gen, d, tau, count)


def _first_chaos_mc(R, t, s, model, count, stream):
    d = model.dimension
    reach = 2 * R + t + s
    big = R + t
    area = ball_volume(d) * big**d
    out = []
    for gen, _, size in stream.blocks(count):
        rad = big * gen.random(size) ** (1.0 / d)
        a = rad[:, None] * _unit(gen, d, size)
        x = a + _sample_first_kernel_offsets(gen, d, t, size)
        if model.kind == Kind.WHITE:
            b = a
            wg = np.ones(size)
        else:
            prop = model.offset_proposal(reach)
            u = prop.sample(gen, size)
            b = a + u
            wg = model.eval_gamma(u) / prop.pdf(u)
        y = b + _sample_first_kernel_offsets(gen, d, s, size)
        inside = (np.sum(x * x, axis=1) < R * R) & (np.sum(y * y, axis=1) < R * R)
        out.append(area * (t * t / 2) * (s * s / 2) * wg * inside)
    return Estimate.from_samples(np.concatenate(out))


def _unit(gen, d, size):
    if d == 1:
        return np.where(gen.random(size) < 0.5, -1.0, 1.0)[:, None]
    a = gen.uniform(0, 2 * math.pi, size)
    return np.stack([np.cos(a), np.sin(a)], axis=1)


# -- higher chaoses ------------------------------------------------------------------


def chaos_moment(n: int, R: float, t: float, s: float, model: CovarianceModel, count: int = 100_000, rng=None, route: str = "auto") -> Estimate:
    """``E[J_{n,R}(t) J_{n,R}(s)]``.

    ``route="spatial"`` (default for ``d = 1``) samples chains; ``"fourier"``
    works in any dimension.  Order 1 in one dimension is deterministic.
    """
    _check_order(n)
    if R <= 0 or t <= 0 or s <= 0:
        return Estimate.exact(0.0)
    if route == "auto":
        route = "spatial" if model.dimension == 1 else "fourier"
    if n == 1 and route != "fourier":
        return first_chaos_covariance(R, t, s, model, rng=rng)
    stream = as_stream(rng)
    if route == "fourier":
        x = fourier_samples(model, n, t, s, count, stream, radius=R)
    else:
        x = spatial_samples(model, n, (kernels.BALL, (t, R)), (kernels.BALL, (s, R)), count, stream)
    return Estimate.from_samples(x)


def chaos_variance_bound(n: int, R: float, t: float, model: CovarianceModel) -> float:
    """Majorant ``t^(2n+2) (D_t C_mu)^(n-1) / n! * int |F 1_{B_R}|^2 d mu`` of ``E[J_{n,R}(t)^2]``."""
    DC = wave.fourier_bound_constant(t) * model.dalang_constant
    return t ** (2 * n + 2) * DC ** (n - 1) / math.factorial(n) * ball_energy(R, model)


def chaos_tail_bound(N: int, R: float, t: float, model: CovarianceModel) -> float:
    """``sum_{n > N}`` of :func:`chaos_variance_bound` in closed form."""
    DC = wave.fourier_bound_constant(t) * model.dalang_constant
    x = t * t * DC
    return t * t / DC * float(math.exp(x) * special.gammainc(N + 1, x)) * ball_energy(R, model)


@dataclass(frozen=True)
class VarianceEstimate:
    radius: float
    times: tuple[float, float]
    per_chaos: tuple[Estimate, ...]
    total: Estimate
    tail_bound: float


def variance_estimate(R: float, t: float, s: float | None, model: CovarianceModel, N: int = 3, count: int = 100_000, rng=None, route: str = "auto") -> VarianceEstimate:
    """Chaos-by-chaos decomposition of ``E[F_R(t) F_R(s)]`` up to order ``N``."""
    s = t if s is None else s
    _check_order(N)
    stream = as_stream(rng)
    per = tuple(chaos_moment(n, R, t, s, model, count, stream.child(n), route) for n in range(1, N + 1))
    total = Estimate.exact(0.0)
    for p in per:
        total = total + p
    tail = math.sqrt(chaos_tail_bound(N, R, t, model) * chaos_tail_bound(N, R, s, model))
    return VarianceEstimate(R, (t, s), per, total, tail)


def higher_chaos_decay(radii, t: float, model: CovarianceModel, orders=(2, 3, 4), count: int = 100_000, rng=None) -> dict[int, list[Estimate]]:
    """``E[J_{n,R}(t)^2] / R^(2d - beta)`` for each order and radius."""
    stream = as_stream(rng)
    expo = 2 * model.dimension - model.energy_exponent
    out: dict[int, list[Estimate]] = {}
    for n in orders:
        row = []
        for i, R in enumerate(radii):
            est = chaos_moment(n, R, t, t, model, count, stream.child(100 * n + i))
            row.append(est.scale(R ** (-expo)))
        out[n] = row
    return out


# -- increments --------------------------------------------------------------------


@dataclass(frozen=True)
class IncrementNorm:
    value: float
    std_error: float
    bound: float
    per_chaos: tuple[Estimate, ...] = ()


def increment_norm(R: float, t: float, s: float, model: CovarianceModel, N: int = 3, count: int = 100_000, rng=None, route: str = "auto") -> IncrementNorm:
    """``||F_R(t) - F_R(s)||_2`` truncated at order ``N`` with its analytic majorant.

    The majorant is ``sum_n (t-s) t^n (D_t C_mu)^((n-1)/2) / sqrt(n!)`` times
    ``sqrt(int |F 1_{B_R}|^2 d mu)``, summed over all orders.
    """
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    _check_order(N)
    DC = wave.fourier_bound_constant(t) * model.dalang_constant
    # majorant series; terms beyond n = 60 are below double precision
    series = sum((t - s) * t**n * DC ** ((n - 1) / 2) / math.sqrt(math.factorial(n)) for n in range(1, 60))
    bound = series * math.sqrt(ball_energy(R, model))
    if s == t:
        return IncrementNorm(0.0, 0.0, bound, tuple(Estimate.exact(0.0) for _ in range(N)))
    stream = as_stream(rng)
    if route == "auto":
        route = "spatial" if model.dimension == 1 else "fourier"
    per = []
    for n in range(1, N + 1):
        if n == 1 and model.dimension == 1 and route == "spatial":
            diff = [(t, 1.0), (s, -1.0)]
            per.append(Estimate.exact(_first_chaos_1d(R, diff, diff, model, 1e-10)))
            continue
        if route == "fourier":
            x = fourier_samples(model, n, t, t, count, stream.child(n), radius=R, t_minus=s, s_minus=s)
        else:
            kern = (kernels.BALL_DIFFERENCE, (t, R, s))
            x = spatial_samples(model, n, kern, kern, count, stream.child(n))
        per.append(Estimate.from_samples(x))
    total = Estimate.exact(0.0)
    for p in per:
        total = total + p
    value = math.sqrt(max(total.value, 0.0))
    err = total.std_error / (2 * value) if value > 0 else total.std_error
    return IncrementNorm(value, err, bound, tuple(per))


# -- exponent fits ---------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    half_width: float

    def contains(self, target: float, tol: float) -> bool:
        return abs(self.slope - target) <= tol


def exponent_fit(pairs, min_points: int = 4, min_span: float = 10.0) -> RateFit:
    """Least-squares slope of ``log y`` against ``log R``.

    ``half_width`` is the standard error of the slope.  At least
    ``min_points`` radii spanning a factor ``min_span`` are required.
    """
    pairs = [(float(r), float(v)) for r, v in pairs]
    if len(pairs) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(pairs)}")
    r = np.array([p[0] for p in pairs])
    v = np.array([p[1] for p in pairs])
    if np.any(r <= 0) or np.any(v <= 0):
        raise ValueError("log-log fit needs positive values")
    if r.max() / r.min() < min_span * (1 - 1e-12):
        raise ValueError(f"radii span {r.max() / r.min():.3g} is below {min_span}")
    res = stats.linregress(np.log(r), np.log(v))
    return RateFit(float(res.slope), float(res.intercept), float(res.stderr))
