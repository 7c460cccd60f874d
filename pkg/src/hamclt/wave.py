"""Fundamental solution of the wave equation in one and two dimensions."""

from __future__ import annotations

import math

import numpy as np


def _radius(d: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return np.abs(x)
    return np.sqrt(np.sum(x * x, axis=-1))


def green(d: int, t, x) -> np.ndarray:
    """Wave kernel ``G_t(x)``; zero for ``t <= 0`` and outside the open cone ``|x| < t``.

    Parameters
    ----------
    d : int
        Spatial dimension, 1 or 2.
    t : float or array
        Time, broadcast against the points.
    x : array
        Points of shape ``(..., d)``; in one dimension plain scalars are accepted.
    """
    r = _radius(d, x)
    t = np.asarray(t, dtype=float)
    inside = r < t
    if d == 1:
        return np.where(inside, 0.5, 0.0)
    if d == 2:
        with np.errstate(invalid="ignore", divide="ignore"):
            val = 1.0 / (2 * math.pi * np.sqrt(np.where(inside, t * t - r * r, 1.0)))
        return np.where(inside, val, 0.0)
    raise ValueError("only d = 1 and d = 2 are supported")


def green_fourier(t, k) -> np.ndarray:
    """Fourier transform ``sin(t |xi|) / |xi|`` as a function of ``k = |xi|``.

    Identical in every dimension.  The removable singularity uses a two-term
    series when ``t k < 1e-6``.
    """
    t = np.asarray(t, dtype=float)
    k = np.abs(np.asarray(k, dtype=float))
    tk = t * k
    small = tk < 1e-6
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = np.sin(tk) / np.where(small, 1.0, k)
    series = t * (1.0 - tk * tk / 6.0)
    out = np.where(small, series, direct)
    return np.where(t > 0, out, 0.0)


def fourier_bound_constant(t: float) -> float:
    """``D_t = 2 max(t^2, 1)``, so that ``|FG_t(xi)|^2 <= D_t / (1 + |xi|^2)``."""
    return 2.0 * max(t * t, 1.0)


def green_lp_norm(t: float, p: float) -> float:
    """``int_{R^2} G_t(x)^p dx = (2 pi)^(1-p) t^(2-p) / (2 - p)`` for ``0 < p < 2``."""
    if not 0 < p < 2:
        raise ValueError("the L^p norm of the planar wave kernel is finite only for 0 < p < 2")
    if t <= 0:
        return 0.0
    return (2 * math.pi) ** (1 - p) * t ** (2 - p) / (2 - p)


def green_mass(d: int, t: float) -> float:
    """``int G_t = t`` for ``t > 0``."""
    return max(float(t), 0.0)


def sample_green_offsets(gen: np.random.Generator, d: int, t, count: int) -> np.ndarray:
    """Draw offsets with density ``G_t / t`` (the normalised wave kernel).

    In two dimensions the radius has density ``r / (t sqrt(t^2 - r^2))``
    and distribution function ``1 - sqrt(1 - r^2 / t^2)``, inverted as
    ``t sqrt(1 - v^2)`` with ``v`` uniform on ``(0, 1)``.
    """
    t = np.broadcast_to(np.asarray(t, dtype=float), (count,))
    if d == 1:
        return (t * gen.uniform(-1.0, 1.0, count))[:, None]
    v = gen.uniform(0.0, 1.0, count)
    r = t * np.sqrt(1.0 - v * v)
    phi = gen.uniform(0.0, 2 * math.pi, count)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)


def first_kernel(d: int, t, r) -> np.ndarray:
    """``int_0^t G_{t-s}(v) ds`` as a function of ``r = |v|``.

    Equals ``(t - r)_+ / 2`` for ``d = 1`` and ``arccosh(t / r) / (2 pi)`` for
    ``d = 2`` (logarithmically singular at ``r = 0``).
    """
    t = np.asarray(t, dtype=float)
    r = np.abs(np.asarray(r, dtype=float))
    if d == 1:
        return 0.5 * np.clip(t - r, 0.0, None)
    with np.errstate(divide="ignore"):
        ratio = np.where(r < t, t / np.where(r > 0, r, 1e-300), 1.0)
    return np.where(r < t, np.arccosh(ratio) / (2 * math.pi), 0.0)
