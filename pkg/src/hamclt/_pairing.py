"""Monte Carlo engines for pairings of chaos kernels.

Two independent routes evaluate the same integrals.

* Fourier route: integrate ``prod g(xi_j)`` against products of simplex
  Fourier factors.  Frequencies are drawn in partial-sum coordinates
  ``eta_j = xi_1 + ... + xi_j`` from a defensive mixture (a family step
  from ``eta_{j-1}`` plus a Cauchy law centred at zero).
* Spatial route (d = 1): draw one chain from the density of the second
  kernel, add offsets drawn proportionally to ``gamma`` and sum the first
  kernel over all orderings of the shifted chain.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import special

from . import kernels
from .covariance import CauchyProposal, CovarianceModel, Kind
from .estimate import Estimate
from .streams import Stream


def permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64)


def ball_transform_sq(d: int, radius: float, k: np.ndarray) -> np.ndarray:
    """``|F 1_{B_R}(xi)|^2`` as a function of ``k = |xi|``."""
    k = np.asarray(k, dtype=float)
    small = k * radius < 1e-8
    ks = np.where(small, 1.0, k)
    if d == 1:
        val = (2 * np.sin(radius * ks) / ks) ** 2
        lim = (2 * radius) ** 2
    else:
        val = (2 * math.pi * radius * special.j1(radius * ks) / ks) ** 2
        lim = (math.pi * radius**2) ** 2
    return np.where(small, lim, val)


# -- Fourier route -------------------------------------------------------------


def fourier_samples(
    model: CovarianceModel,
    n: int,
    t: float,
    s: float,
    count: int,
    stream: Stream,
    *,
    permute: bool = True,
    lag=None,
    radius: float | None = None,
    pin_last: bool = False,
    proposal: str = "default",
    t_minus: float | None = None,
    s_minus: float | None = None,
) -> np.ndarray:
    """Per-sample values whose mean is

    ``sum_rho int W(eta_n) Phi_n(t; eta) Phi_n(s; eta^rho) prod g(xi_j) d xi``

    with ``W = cos(eta_n . lag)`` or ``|F 1_{B_R}(eta_n)|^2`` (or 1).  With
    ``pin_last`` the last partial sum is fixed at 0 and the integral over
    ``xi_n`` is replaced by ``(2 pi)^d g(-eta_{n-1})``, which integrates the
    lag out.  ``permute=False`` keeps the identity permutation only.
    ``t_minus`` (``s_minus``) replaces ``Phi_n(t)`` by ``Phi_n(t) - Phi_n(t_minus)``.
    """
    d = model.dimension
    step = model.spectral_proposal(proposal)
    origin = CauchyProposal(d, 1.0)
    perms = permutations(n) if permute else np.arange(n)[None, :]
    lag_vec = None if lag is None else np.atleast_1d(np.asarray(lag, dtype=float))
    out = []
    for gen, _, size in stream.blocks(count):
        eta = np.zeros((size, n, d))
        logw = np.zeros(size)
        prev = np.zeros((size, d))
        sampled = n - 1 if pin_last else n
        for j in range(sampled):
            comps = [(step, prev), (origin, np.zeros_like(prev))]
            weights = [0.5, 0.5]
            if radius is not None and j == n - 1:
                comps.append((CauchyProposal(d, 1.0 / radius), np.zeros_like(prev)))
                weights = [0.4, 0.3, 0.3]
            pick = gen.choice(len(comps), size=size, p=weights)
            cur = np.empty_like(prev)
            for c, (prop, centre) in enumerate(comps):
                sel = pick == c
                cur[sel] = centre[sel] + prop.sample(gen, int(sel.sum()))
            q = sum(w * prop.pdf(cur - centre) for w, (prop, centre) in zip(weights, comps))
            with np.errstate(divide="ignore"):
                logw += np.log(model.eval_spectral(cur - prev)) - np.log(q)
            eta[:, j] = cur
            prev = cur
        if pin_last:
            with np.errstate(divide="ignore"):
                logw += math.log((2 * math.pi) ** d) + np.log(model.eval_spectral(-prev))
        w = np.exp(logw)
        xi = np.diff(eta, axis=1, prepend=np.zeros((size, 1, d)))
        k_t = np.sqrt(np.sum(eta**2, axis=-1))
        phi_t = kernels.simplex_fourier(k_t, t)
        if t_minus is not None:
            phi_t = phi_t - kernels.simplex_fourier(k_t, t_minus)
        acc = np.zeros(size)
        for rho in perms:
            eta_r = np.cumsum(xi[:, rho], axis=1)
            k_r = np.sqrt(np.sum(eta_r**2, axis=-1))
            acc += kernels.simplex_fourier(k_r, s)
            if s_minus is not None:
                acc -= kernels.simplex_fourier(k_r, s_minus)
        factor = np.ones(size)
        if lag_vec is not None:
            factor = np.cos(eta[:, -1] @ lag_vec)
        if radius is not None:
            factor = factor * ball_transform_sq(d, radius, k_t[:, -1])
        out.append(w * factor * phi_t * acc)
    return np.concatenate(out)


# -- spatial route (d = 1) -----------------------------------------------------


def _dirichlet_gaps(gen, size, dims, tail_power, horizon):
    """Gap magnitudes with density proportional to ``(horizon - sum)^tail_power`` on the simplex."""
    alpha = np.ones(dims + 1)
    alpha[-1] = tail_power + 1
    draw = gen.dirichlet(alpha, size=size)[:, :dims] * horizon
    signs = np.where(gen.random((size, dims)) < 0.5, -1.0, 1.0)
    # normaliser of (horizon - sum)^p over the signed region
    log_norm = dims * math.log(2.0) + (dims + tail_power) * math.log(horizon) + special.gammaln(tail_power + 1) - special.gammaln(dims + tail_power + 1)
    return draw * signs, log_norm


def _offsets(model: CovarianceModel, gen, size, n, reach, spread):
    """Offsets ``u_1..u_n`` and log weights ``sum log gamma(u_k) - log q``.

    ``u_1`` follows the family proposal; later offsets mix a uniform window of
    half-width ``spread`` around ``u_1`` with the family proposal, which keeps
    the weights bounded when all offsets must be nearly equal.
    """
    if model.kind == Kind.WHITE:
        return np.zeros((size, n)), np.zeros(size)
    base = model.offset_proposal(reach)
    u = np.empty((size, n))
    u[:, 0] = base.sample(gen, size)[:, 0]
    with np.errstate(divide="ignore"):
        logw = np.log(model.eval_gamma(u[:, 0])) - np.log(base.pdf(u[:, :1]))
    for k in range(1, n):
        local = gen.random(size) < 0.5
        cand_local = u[:, 0] + gen.uniform(-spread, spread, size)
        cand_far = base.sample(gen, size)[:, 0]
        u[:, k] = np.where(local, cand_local, cand_far)
        q = 0.5 * (np.abs(u[:, k] - u[:, 0]) <= spread) / (2 * spread) + 0.5 * base.pdf(u[:, k : k + 1])
        with np.errstate(divide="ignore"):
            logw += np.log(model.eval_gamma(u[:, k])) - np.log(q)
    return u, logw


def spatial_samples(
    model: CovarianceModel,
    n: int,
    first: tuple,
    second: tuple,
    count: int,
    stream: Stream,
    *,
    permute: bool = True,
) -> np.ndarray:
    """Per-sample values whose mean is ``sum_rho int int A(x) B(y o rho) prod gamma(x_i - y_i)``.

    ``first`` and ``second`` describe one-dimensional chain kernels as
    ``(kind, params)`` with ``kind`` one of ``kernels.ANCHORED`` (params
    ``(t, anchor)``), ``kernels.BALL`` (params ``(t, R)``) or
    ``BALL_DIFFERENCE`` (``(t, R, t2)`` with ``t2 <= t``), plus for the first
    kernel also ``ANCHOR_INTEGRATED`` (``(t,)``).  All shapes use the closed form
    ``2^-n (T - chain length)_+^n / n!`` of the one-dimensional kernel.
    """
    if model.dimension != 1:
        raise ValueError("the spatial route is implemented for d = 1 only")
    a_kind, a_par = first
    b_kind, b_par = second
    a_params = tuple(a_par) + (0.0,) * (3 - len(a_par))
    b_params = tuple(b_par) + (0.0,) * (3 - len(b_par))
    horizon_a = max(a_params[0], a_params[2]) if a_kind == kernels.BALL_DIFFERENCE else a_params[0]
    s = b_params[0]
    spread = horizon_a + s
    if b_kind == kernels.ANCHORED:
        reach = abs(b_params[1]) + spread + (abs(a_params[1]) if a_kind == kernels.ANCHORED else 0.0)
    elif b_kind in (kernels.BALL, kernels.BALL_DIFFERENCE):
        reach = b_params[1] + spread + (a_params[1] if a_kind in (kernels.BALL, kernels.BALL_DIFFERENCE) else 0.0)
    else:
        raise ValueError("second kernel must be anchored or ball-integrated")
    if b_kind == kernels.BALL_DIFFERENCE and b_params[2] > b_params[0]:
        raise ValueError("difference kernels need the larger horizon first")
    if a_kind == kernels.ANCHOR_INTEGRATED and not model.integrable:
        raise ValueError("integrating over the lag needs an integrable covariance")
    perms = permutations(n) if permute else np.arange(n)[None, :]
    ident = np.arange(n)[None, :]
    out = []
    for gen, _, size in stream.blocks(count):
        if b_kind == kernels.ANCHORED:
            gaps, log_norm = _dirichlet_gaps(gen, size, n, n, s)
            # gaps[:, j] = y_{j+1} - y_j with y_{n+1} the anchor
            y = b_params[1] - np.cumsum(gaps[:, ::-1], axis=1)[:, ::-1]
            log_q = -log_norm + n * np.log(np.clip(s - np.abs(gaps).sum(axis=1), 1e-300, None))
        else:
            R = b_params[1]
            gaps, log_norm = _dirichlet_gaps(gen, size, n - 1, n + 1, s)
            last = gen.uniform(-R - s, R + s, size)
            y = np.empty((size, n))
            y[:, -1] = last
            if n > 1:
                y[:, :-1] = last[:, None] - np.cumsum(gaps[:, ::-1], axis=1)[:, ::-1]
            log_q = -log_norm + (n + 1) * np.log(np.clip(s - np.abs(gaps).sum(axis=1), 1e-300, None)) - math.log(2 * (R + s))
        # for difference kernels the chain law comes from the larger horizon, whose support covers both
        b_val = kernels.permutation_sum(b_kind, y, ident, b_params)
        u, logw = _offsets(model, gen, size, n, reach, spread)
        a_sum = kernels.permutation_sum(a_kind, y + u, perms, a_params)
        with np.errstate(divide="ignore"):
            ratio = np.where(b_val != 0, b_val * np.exp(logw - log_q), 0.0)
        out.append(ratio * a_sum)
    return np.concatenate(out)
