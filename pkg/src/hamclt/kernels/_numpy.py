"""Pure-numpy implementations mirroring the numba kernels."""

from __future__ import annotations

import math

import numpy as np

from ._common import COEF_TERMS, NODE_SPREAD, SERIES_CUTOFF, SERIES_TERMS, series_b

_B = series_b()
_CHUNK = 4096


def _psi(u):
    out = np.empty_like(u)
    small = u < SERIES_CUTOFF
    us = u[small]
    acc = np.zeros_like(us)
    for b in _B[::-1]:
        acc = acc * us + b
    out[small] = acc
    ub = u[~small]
    out[~small] = (1.0 - np.cos(np.sqrt(ub))) / ub
    return out


def _taylor(c):
    """Taylor coefficients of psi at each centre, shape ``(len(c), COEF_TERMS)``."""
    a = np.empty((c.size, COEF_TERMS))
    small = c < SERIES_CUTOFF
    cs = c[small]
    if cs.size:
        for m in range(COEF_TERMS):
            s = np.zeros_like(cs)
            w = np.ones_like(cs)
            for j in range(m, SERIES_TERMS):
                s += w * _B[j]
                w = w * cs * ((j + 1) / (j + 1 - m))
            a[small, m] = s
    cb = c[~small]
    if cb.size:
        x = np.sqrt(cb)
        cx, sx = np.cos(x), np.sin(x)
        ab = np.empty((cb.size, COEF_TERMS))
        ab[:, 0] = (1.0 - cx) / cb
        ab[:, 1] = sx / (2.0 * x * cb) - (1.0 - cx) / cb**2
        for m in range(COEF_TERMS - 2):
            r = np.full_like(cb, 1.0 if m == 0 else 0.0)
            r -= (8.0 * cb * (m + 1) * m + 10.0 * cb * (m + 1)) * ab[:, m + 1]
            r -= (4.0 * m * (m - 1) + 10.0 * m + cb + 2.0) * ab[:, m]
            if m >= 1:
                r -= ab[:, m - 1]
            ab[:, m + 2] = r / (4.0 * cb**2 * (m + 2) * (m + 1))
        a[~small] = ab
    return a


def simplex_fourier(freq, horizon):
    rows, n = freq.shape
    u = np.sort((horizon[:, None] * freq) ** 2, axis=1)
    tab = {}
    for i in range(n):
        tab[i, i] = _psi(u[:, i])
    for span in range(1, n):
        for i in range(n - span):
            j = i + span
            spread = u[:, j] - u[:, i]
            val = np.empty(rows)
            near = spread <= NODE_SPREAD
            if near.any():
                un = u[near, i : j + 1]
                c = 0.5 * (un[:, 0] + un[:, -1])
                a = _taylor(c)
                kmax = COEF_TERMS - span
                d = un - c[:, None]
                g = d[:, :1] ** np.arange(kmax)[None, :]
                for p in range(1, span + 1):
                    for k in range(1, kmax):
                        g[:, k] += d[:, p] * g[:, k - 1]
                val[near] = np.einsum("rk,rk->r", a[:, span:], g)
            far = ~near
            if far.any():
                val[far] = (tab[i + 1, j][far] - tab[i, j - 1][far]) / spread[far]
            tab[i, j] = val
    sign = 1.0 if n % 2 == 1 else -1.0
    return sign * horizon ** (2 * n) * tab[0, n - 1]


def _power_prim(w, T, n):
    w = np.broadcast_to(w, T.shape)
    out = np.where(w >= T, 2.0 * T ** (n + 1), 0.0)
    mid_pos = (w >= 0.0) & (w < T)
    mid_neg = (w < 0.0) & (w > -T)
    out = np.where(mid_pos, 2.0 * T ** (n + 1) - np.clip(T - w, 0, None) ** (n + 1), out)
    out = np.where(mid_neg, np.clip(T + w, 0, None) ** (n + 1), out)
    return out / (n + 1)


def _chain_values(kind, x, params):
    # x: (..., n) ordered chains
    n = x.shape[-1]
    scale = 0.5**n / math.factorial(n)
    inner = np.abs(np.diff(x, axis=-1)).sum(axis=-1)
    last = x[..., -1]
    p0, p1, p2 = params
    if kind == 0:
        T = np.clip(p0 - inner - np.abs(p1 - last), 0.0, None)
        return scale * T**n
    if kind == 1:
        T = np.clip(p0 - inner, 0.0, None)
        return scale * 2.0 * T ** (n + 1) / (n + 1)
    T = np.clip(p0 - inner, 0.0, None)
    val = _power_prim(p1 - last, T, n) - _power_prim(-p1 - last, T, n)
    if kind == 3:
        T2 = np.clip(p2 - inner, 0.0, None)
        val = val - (_power_prim(p1 - last, T2, n) - _power_prim(-p1 - last, T2, n))
    return scale * val


def permutation_sum(kind, v, perms, params):
    out = np.empty(v.shape[0])
    for lo in range(0, v.shape[0], _CHUNK):
        blk = v[lo : lo + _CHUNK][:, perms]
        out[lo : lo + _CHUNK] = _chain_values(kind, blk, params).sum(axis=1)
    return out


def monomial_sum(x, idx, coef):
    out = np.empty(x.shape[0])
    step = max(1, 2_000_000 // max(1, idx.size))
    for lo in range(0, x.shape[0], step):
        xb = x[lo : lo + step]
        prod = np.ones((xb.shape[0], idx.shape[0]))
        for k in range(idx.shape[1]):
            prod *= xb[:, idx[:, k]]
        out[lo : lo + step] = prod @ coef
    return out


def _run_lengths(idx):
    """Per slot, the multiplicity if it starts a run of equal indices, else 0."""
    n = idx.shape[1]
    mult = np.zeros(idx.shape, dtype=np.int64)
    for k in range(n):
        start = np.ones(idx.shape[0], dtype=bool) if k == 0 else idx[:, k] != idx[:, k - 1]
        m = np.ones(idx.shape[0], dtype=np.int64)
        for q in range(k + 1, n):
            m += (idx[:, q] == idx[:, k]) & (m == q - k)
        mult[:, k] = np.where(start, m, 0)
    return mult


def hermite_sum(z, idx, coef):
    n = idx.shape[1]
    mult = _run_lengths(idx)
    out = np.empty(z.shape[0])
    step = max(1, 2_000_000 // max(1, idx.size))
    for lo in range(0, z.shape[0], step):
        zb = z[lo : lo + step]
        table = [np.ones_like(zb), zb]
        for q in range(1, n):
            table.append(zb * table[q] - q * table[q - 1])
        table = np.stack(table)  # (n+1, rows, K)
        prod = np.ones((zb.shape[0], idx.shape[0]))
        for k in range(n):
            prod *= table[mult[:, k], :, idx[:, k]].T
        out[lo : lo + step] = prod @ coef
    return out
