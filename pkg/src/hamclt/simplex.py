"""Quadrature on the ordered time simplex ``0 < t_1 < ... < t_n < t``."""

from __future__ import annotations

import math

import numpy as np


def simplex_volume(n: int, t: float) -> float:
    return t**n / math.factorial(n)


def gauss_nodes(n: int, t: float, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre rule mapped onto the ordered simplex.

    Uses ``t_n = t v_n`` and ``t_k = t_{k+1} v_k`` for ``v`` in the unit cube,
    whose Jacobian is ``t^n prod_k v_k^(k-1)``.  Returns ``(times, weights)``
    with ``times`` of shape ``(order**n, n)`` sorted increasingly along each row.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([x] * n), indexing="ij")
    wgrids = np.meshgrid(*([w] * n), indexing="ij")
    v = np.stack([g.ravel() for g in grids], axis=1)
    weight = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    times = np.empty_like(v)
    cur = np.full(v.shape[0], float(t))
    for k in range(n - 1, -1, -1):
        cur = cur * v[:, k]
        times[:, k] = cur
    jac = t**n * np.prod(v ** np.arange(n)[None, :], axis=1)
    return times, weight * jac


def uniform_nodes(gen: np.random.Generator, n: int, t: float, count: int) -> tuple[np.ndarray, float]:
    """Sorted uniforms: i.i.d. points on the simplex with constant weight ``t^n / n!``."""
    times = np.sort(gen.uniform(0.0, t, size=(count, n)), axis=1)
    return times, simplex_volume(n, t)
