"""Monte Carlo evaluation of the four Stein-bound integrals.

Each integral is a product of six wave kernels and three covariance factors
over ten spatial points, four of which range over the ball ``B_R``, and six
times.  The integrand is a tree rooted at ``x_1``: a draw places ``x_1``
uniformly in the ball and then walks the edges, sampling every interior wave
edge from ``G_tau / tau`` (weight ``tau``) and every covariance edge from the
model's offset proposal (weight ``gamma / q``).  Leaves that must land in
``B_R`` contribute their exact clipped mass in one dimension and a sampled
indicator in two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import wave
from .asymptotics import variance_estimate
from .covariance import CovarianceModel, ball_volume
from .estimate import Estimate
from .streams import as_stream

# edges: (parent, child, kind, time label); kind "G" interior, "L" leaf in B_R, "g" covariance
# time labels refer to: t-r, r-th, t-rp, rp-thp, th-r, thp-rp, t-th, t-thp, t-s, t-sp
_TREES = {
    1: (
        "th<r", "thp<rp",
        [("x1", "z", "G", "t-r"), ("z", "w", "G", "r-th"), ("w", "wp", "g", None),
         ("wp", "y", "G", "rp-thp"), ("y", "x1p", "L", "t-rp"), ("z", "zp", "g", None),
         ("zp", "x2", "L", "t-s"), ("y", "yp", "g", None), ("yp", "x2p", "L", "t-sp")],
    ),
    2: (
        "th<r", "rp<thp",
        [("x1", "z", "G", "t-r"), ("z", "w", "G", "r-th"), ("w", "x1p", "L", "t-thp"),
         ("w", "wp", "g", None), ("wp", "y", "G", "thp-rp"), ("y", "yp", "g", None),
         ("yp", "x2p", "L", "t-sp"), ("z", "zp", "g", None), ("zp", "x2", "L", "t-s")],
    ),
    3: (
        "r<th", "thp<rp",
        [("x1", "w", "G", "t-th"), ("w", "z", "G", "th-r"), ("z", "zp", "g", None),
         ("zp", "x2", "L", "t-s"), ("w", "wp", "g", None), ("wp", "y", "G", "rp-thp"),
         ("y", "x1p", "L", "t-rp"), ("y", "yp", "g", None), ("yp", "x2p", "L", "t-sp")],
    ),
    4: (
        "r<th", "rp<thp",
        [("x1", "w", "G", "t-th"), ("w", "z", "G", "th-r"), ("z", "zp", "g", None),
         ("zp", "x2", "L", "t-s"), ("w", "wp", "g", None), ("wp", "x1p", "L", "t-thp"),
         ("wp", "y", "G", "thp-rp"), ("y", "yp", "g", None), ("yp", "x2p", "L", "t-sp")],
    ),
}


@dataclass(frozen=True)
class SteinBoundEstimate:
    radius: float
    time: float
    A_terms: tuple[Estimate, Estimate, Estimate, Estimate]
    A_total: Estimate
    variance: Estimate
    dtv_bound: float
    dtv_std_error: float


def _times(gen, size, t, first, second):
    """Uniform draws of ``s, s'`` in ``[0, t]`` and two ordered pairs in ``T_2(t)``."""
    s = gen.uniform(0, t, size)
    sp = gen.uniform(0, t, size)
    a = np.sort(gen.uniform(0, t, (size, 2)), axis=1)
    b = np.sort(gen.uniform(0, t, (size, 2)), axis=1)
    lab = {"s": s, "sp": sp}
    if first == "th<r":
        lab["th"], lab["r"] = a[:, 0], a[:, 1]
    else:
        lab["r"], lab["th"] = a[:, 0], a[:, 1]
    if second == "thp<rp":
        lab["thp"], lab["rp"] = b[:, 0], b[:, 1]
    else:
        lab["rp"], lab["thp"] = b[:, 0], b[:, 1]
    return lab


def _duration(label, lab, t):
    left, right = label.split("-")
    lv = t if left == "t" else lab[left]
    return lv - lab[right]


def _leaf_mass(gen, d, R, p, tau):
    """``int_{B_R} G_tau(x - p) dx``; exact in one dimension, one-sample estimate in two."""
    tau = np.clip(tau, 0.0, None)
    if d == 1:
        lo = np.maximum(p[:, 0] - tau, -R)
        hi = np.minimum(p[:, 0] + tau, R)
        return 0.5 * np.clip(hi - lo, 0.0, None)
    x = p + wave.sample_green_offsets(gen, d, np.maximum(tau, 1e-300), p.shape[0])
    return tau * (np.sum(x * x, axis=1) < R * R)


def stein_term_samples(term: int, R: float, t: float, model: CovarianceModel, count: int, rng=None) -> np.ndarray:
    """Per-sample values whose mean is the Stein integral number ``term``."""
    first, second, edges = _TREES[term]
    d = model.dimension
    stream = as_stream(rng)
    reach = 2 * R + 4 * t
    prop = None if model.kind.value == "white" else model.offset_proposal(reach)
    vol = ball_volume(d) * R**d * t**6 / 4
    out = []
    for gen, _, size in stream.blocks(count):
        lab = _times(gen, size, t, first, second)
        rad = R * gen.random(size) ** (1.0 / d)
        if d == 1:
            x1 = (rad * np.where(gen.random(size) < 0.5, -1.0, 1.0))[:, None]
        else:
            ang = gen.uniform(0, 2 * math.pi, size)
            x1 = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        pos = {"x1": x1}
        w = np.full(size, vol)
        for parent, child, kind, label in edges:
            p = pos[parent]
            if kind == "g":
                if prop is None:
                    pos[child] = p
                else:
                    u = prop.sample(gen, size)
                    w = w * model.eval_gamma(u) / prop.pdf(u)
                    pos[child] = p + u
                continue
            tau = _duration(label, lab, t)
            if kind == "G":
                tau_c = np.clip(tau, 0.0, None)
                pos[child] = p + wave.sample_green_offsets(gen, d, np.maximum(tau_c, 1e-300), size)
                w = w * tau_c
            else:
                w = w * _leaf_mass(gen, d, R, p, tau)
        out.append(w)
    return np.concatenate(out)


def stein_bound_A(R: float, t: float, model: CovarianceModel, count: int = 200_000, rng=None, variance=None, N: int = 3, variance_count: int = 100_000, rel_tol: float | None = None) -> SteinBoundEstimate:
    """Estimate the four Stein integrals and ``dtv_bound = 4 sqrt(A) / sigma_R^2``.

    Parameters
    ----------
    variance : Estimate, optional
        ``sigma_R^2(t)``; computed with :func:`variance_estimate` when omitted.
    rel_tol : float, optional
        Raise ``RuntimeError`` if the relative standard error of the total
        exceeds this value.
    """
    stream = as_stream(rng)
    terms = tuple(Estimate.from_samples(stein_term_samples(k, R, t, model, count, stream.child(k))) for k in (1, 2, 3, 4))
    total = terms[0] + terms[1] + terms[2] + terms[3]
    if rel_tol is not None and total.std_error > rel_tol * abs(total.value):
        raise RuntimeError(f"Stein integral relative error {total.std_error / total.value:.3g} exceeds {rel_tol}")
    if variance is None:
        variance = variance_estimate(R, t, t, model, N=N, count=variance_count, rng=stream.child(99)).total
    sig2 = variance.value
    dtv = 4 * math.sqrt(max(total.value, 0.0)) / sig2
    # delta method
    rel = math.hypot(total.std_error / (2 * total.value) if total.value > 0 else 0.0, variance.std_error / sig2)
    return SteinBoundEstimate(R, t, terms, total, variance, dtv, dtv * rel)
