"""Hot kernels with a numba implementation and a numpy fallback.

The backend is chosen by :mod:`hamclt._backend`; both produce the same values
up to floating point reassociation.
"""

from __future__ import annotations

import numpy as np

from .. import _backend
from . import _numpy

# kinds understood by :func:`permutation_sum`
ANCHORED, ANCHOR_INTEGRATED, BALL, BALL_DIFFERENCE = 0, 1, 2, 3


def _impl():
    if _backend.get_backend() == "numba":
        from . import _numba

        return _numba
    return _numpy


def simplex_fourier(freq, horizon) -> np.ndarray:
    """Integral over the ordered time simplex of a product of wave multipliers.

    Row ``r`` returns ``int_{0<s_1<...<s_n<t} prod_j sin((s_{j+1}-s_j) k_j) / k_j ds``
    with ``s_{n+1} = t``, where ``k_j = freq[r, j]`` (``>= 0``) and ``t = horizon[r]``.
    The value is ``(-1)^(n-1) t^(2n)`` times the divided difference of
    ``psi(u) = (1 - cos sqrt(u)) / u`` at the nodes ``(t k_j)^2``.
    """
    freq = np.ascontiguousarray(np.atleast_2d(np.asarray(freq, dtype=float)))
    horizon = np.broadcast_to(np.asarray(horizon, dtype=float), (freq.shape[0],))
    return _impl().simplex_fourier(freq, np.ascontiguousarray(horizon))


def permutation_sum(kind: int, v, perms, params) -> np.ndarray:
    """Sum over ``perms`` of a one-dimensional chain kernel evaluated at ``v[perm]``.

    ``kind`` selects the kernel (see module constants); ``params`` is
    ``(horizon, anchor_or_radius, second_horizon)``.
    """
    v = np.ascontiguousarray(np.asarray(v, dtype=float))
    perms = np.ascontiguousarray(np.asarray(perms, dtype=np.int64))
    params = np.asarray(params, dtype=float).reshape(3)
    return _impl().permutation_sum(int(kind), v, perms, params)


def monomial_sum(x, idx, coef) -> np.ndarray:
    """``sum_e coef[e] * prod_k x[:, idx[e, k]]`` for each row of ``x``."""
    x = np.ascontiguousarray(np.asarray(x, dtype=float))
    idx = np.ascontiguousarray(np.asarray(idx, dtype=np.int64))
    coef = np.ascontiguousarray(np.asarray(coef, dtype=float))
    if idx.shape[1] == 0:
        return np.full(x.shape[0], coef.sum())
    return _impl().monomial_sum(x, idx, coef)


def hermite_sum(z, idx, coef) -> np.ndarray:
    """``sum_e coef[e] * prod_runs He_m(z[:, i])`` over sorted multi-indices ``idx``.

    A run of ``m`` equal entries ``i`` in ``idx[e]`` contributes the
    probabilists' Hermite polynomial ``He_m(z[:, i])``.
    """
    z = np.ascontiguousarray(np.asarray(z, dtype=float))
    idx = np.ascontiguousarray(np.asarray(idx, dtype=np.int64))
    coef = np.ascontiguousarray(np.asarray(coef, dtype=float))
    if idx.shape[1] == 0:
        return np.full(z.shape[0], coef.sum())
    return _impl().hermite_sum(z, idx, coef)
