"""numba implementations of the hot loops."""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from ._common import COEF_TERMS, NODE_SPREAD, SERIES_CUTOFF, SERIES_TERMS, series_b

_B = series_b()


@njit(cache=True)
def _psi(u):
    if u < SERIES_CUTOFF:
        s = 0.0
        w = 1.0
        for j in range(SERIES_TERMS):
            s += w * _B[j]
            w *= u
        return s
    x = math.sqrt(u)
    return (1.0 - math.cos(x)) / u


@njit(cache=True)
def _taylor(c, a):
    m_max = a.shape[0]
    if c < SERIES_CUTOFF:
        for m in range(m_max):
            s = 0.0
            w = 1.0
            for j in range(m, SERIES_TERMS):
                s += w * _B[j]
                w *= c * (j + 1) / (j + 1 - m)
            a[m] = s
        return
    x = math.sqrt(c)
    cx = math.cos(x)
    sx = math.sin(x)
    a[0] = (1.0 - cx) / c
    a[1] = sx / (2.0 * x * c) - (1.0 - cx) / (c * c)
    for m in range(m_max - 2):
        r = 1.0 if m == 0 else 0.0
        r -= (8.0 * c * (m + 1) * m + 10.0 * c * (m + 1)) * a[m + 1]
        r -= (4.0 * m * (m - 1) + 10.0 * m + c + 2.0) * a[m]
        if m >= 1:
            r -= a[m - 1]
        a[m + 2] = r / (4.0 * c * c * (m + 2) * (m + 1))


@njit(cache=True)
def _divided_difference(u, a, g, tab):
    n = u.shape[0]
    for i in range(n):
        tab[i, i] = _psi(u[i])
    for span in range(1, n):
        for i in range(n - span):
            j = i + span
            if u[j] - u[i] <= NODE_SPREAD:
                c = 0.5 * (u[i] + u[j])
                _taylor(c, a)
                kmax = COEF_TERMS - span
                d0 = u[i] - c
                g[0] = 1.0
                for k in range(1, kmax):
                    g[k] = g[k - 1] * d0
                for p in range(i + 1, j + 1):
                    dp = u[p] - c
                    for k in range(1, kmax):
                        g[k] += dp * g[k - 1]
                s = 0.0
                for k in range(kmax):
                    s += a[k + span] * g[k]
                tab[i, j] = s
            else:
                tab[i, j] = (tab[i + 1, j] - tab[i, j - 1]) / (u[j] - u[i])
    return tab[0, n - 1]


@njit(cache=True, parallel=True)
def simplex_fourier(freq, horizon):
    rows, n = freq.shape
    out = np.empty(rows)
    sign = 1.0 if n % 2 == 1 else -1.0
    for r in prange(rows):
        a = np.empty(COEF_TERMS)
        g = np.empty(COEF_TERMS)
        tab = np.empty((n, n))
        t = horizon[r]
        u = np.empty(n)
        for k in range(n):
            u[k] = (t * freq[r, k]) ** 2
        u.sort()
        out[r] = sign * t ** (2 * n) * _divided_difference(u, a, g, tab)
    return out


@njit(cache=True)
def _chain_length(v, order):
    s = 0.0
    for k in range(order.shape[0] - 1):
        s += abs(v[order[k + 1]] - v[order[k]])
    return s


@njit(cache=True)
def _power_prim(w, T, n):
    # antiderivative of (T - |w|)_+^n vanishing at -infinity
    if w >= T:
        return 2.0 * T ** (n + 1) / (n + 1)
    if w <= -T:
        return 0.0
    if w >= 0.0:
        return (2.0 * T ** (n + 1) - (T - w) ** (n + 1)) / (n + 1)
    return (T + w) ** (n + 1) / (n + 1)


@njit(cache=True)
def _clipped_power(T, lo, hi, n):
    return _power_prim(hi, T, n) - _power_prim(lo, T, n)


@njit(cache=True)
def _chain_value(kind, v, order, p0, p1, p2, scale):
    # kind 0: anchored at p1, horizon p0
    # kind 1: anchor integrated out, horizon p0
    # kind 2: anchor integrated over [-p1, p1], horizon p0
    # kind 3: kind 2 at horizon p0 minus kind 2 at horizon p2
    n = order.shape[0]
    inner = _chain_length(v, order)
    last = v[order[n - 1]]
    if kind == 0:
        T = p0 - inner - abs(p1 - last)
        return scale * T**n if T > 0.0 else 0.0
    if kind == 1:
        T = p0 - inner
        return scale * 2.0 * T ** (n + 1) / (n + 1) if T > 0.0 else 0.0
    T = p0 - inner
    val = 0.0
    if T > 0.0:
        val = _clipped_power(T, -p1 - last, p1 - last, n)
    if kind == 3:
        T2 = p2 - inner
        if T2 > 0.0:
            val -= _clipped_power(T2, -p1 - last, p1 - last, n)
    return scale * val


@njit(cache=True, parallel=True)
def permutation_sum(kind, v, perms, params):
    rows = v.shape[0]
    n = v.shape[1]
    scale = 0.5**n / math.gamma(n + 1.0)
    out = np.empty(rows)
    for r in prange(rows):
        acc = 0.0
        for q in range(perms.shape[0]):
            acc += _chain_value(kind, v[r], perms[q], params[0], params[1], params[2], scale)
        out[r] = acc
    return out


@njit(cache=True, parallel=True)
def monomial_sum(x, idx, coef):
    rows = x.shape[0]
    out = np.empty(rows)
    for r in prange(rows):
        acc = 0.0
        for e in range(idx.shape[0]):
            p = coef[e]
            for k in range(idx.shape[1]):
                p *= x[r, idx[e, k]]
            acc += p
        out[r] = acc
    return out


@njit(cache=True, parallel=True)
def hermite_sum(z, idx, coef):
    rows = z.shape[0]
    n = idx.shape[1]
    out = np.empty(rows)
    for r in prange(rows):
        acc = 0.0
        for e in range(idx.shape[0]):
            p = coef[e]
            k = 0
            while k < n:
                m = 1
                while k + m < n and idx[e, k + m] == idx[e, k]:
                    m += 1
                x = z[r, idx[e, k]]
                h0 = 1.0
                h1 = x
                for q in range(1, m):
                    h0, h1 = h1, x * h1 - q * h0
                p *= h1
                k += m
            acc += p
        out[r] = acc
    return out
