"""Normality diagnostics for simulated spatial averages."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .asymptotics import exponent_fit
from .streams import as_stream


def _phi(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def ks_statistic(x) -> float:
    """Kolmogorov-Smirnov distance between the empirical law of ``x`` and ``N(0, 1)``."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    cdf = special.ndtr(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def ks_statistic_bruteforce(x) -> float:
    """Same distance from a double loop over the sample; ``O(n^2)``, for testing."""
    x = np.asarray(x, dtype=float)
    n = x.size
    best = 0.0
    for xi in x:
        below = 0
        at = 0
        for xj in x:
            below += xj < xi
            at += xj <= xi
        c = float(special.ndtr(xi))
        best = max(best, abs(at / n - c), abs(below / n - c))
    return best


def w1_normal(x) -> float:
    """Exact Wasserstein-1 distance between the empirical law of ``x`` and ``N(0, 1)``.

    Uses ``W1 = int_0^1 |Q_n(u) - Phi^{-1}(u)| du`` and
    ``int_a^b Phi^{-1} = phi(Phi^{-1}(a)) - phi(Phi^{-1}(b))`` on each quantile step.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    a = np.arange(n) / n
    b = np.arange(1, n + 1) / n
    m = np.clip(special.ndtr(x), a, b)

    def qint(lo, hi):
        return _phi(special.ndtri(lo)) - _phi(special.ndtri(hi))

    with np.errstate(invalid="ignore"):
        left = x * (m - a) - np.nan_to_num(qint(a, m))
        right = np.nan_to_num(qint(m, b)) - x * (b - m)
    return float(math.fsum(left + right))


def w1_two_sample(x, y) -> float:
    """Wasserstein-1 distance between two empirical laws."""
    return float(stats.wasserstein_distance(np.asarray(x, float), np.asarray(y, float)))


def gaussian_w1_floor(count: int, reps: int = 20, rng=None) -> tuple[float, float]:
    """Mean and spread of the W1 distance of ``count`` exact normal draws to ``N(0, 1)``."""
    stream = as_stream(rng)
    vals = np.array([w1_normal(stream.child(r).collect(count, lambda g, k: g.standard_normal(k))) for r in range(reps)])
    return float(vals.mean()), float(vals.std(ddof=1))


@dataclass(frozen=True)
class NormalityReport:
    count: int
    mean: float
    std: float
    ks_stat: float
    ks_pvalue: float
    w1: float
    skewness: float
    skewness_se: float
    excess_kurtosis: float
    excess_kurtosis_se: float

    def passes(self, level: float = 0.01) -> bool:
        return self.ks_pvalue > level


def normality_report(samples, scale: float | None = None, centre: float | None = None) -> NormalityReport:
    """Standardise ``samples`` and compare with ``N(0, 1)``.

    Without ``scale``/``centre`` the sample standard deviation and mean are
    used (the test then ignores the estimation of those two parameters).

    Raises
    ------
    ValueError
        With fewer than 100 samples or a sample of zero spread.
    """
    # sorted input makes every reduction, hence the report, independent of sample order
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 100:
        raise ValueError(f"normality checks need at least 100 samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    if np.ptp(x) == 0:
        raise ValueError("degenerate sample: zero variance")
    mu = float(x.mean()) if centre is None else float(centre)
    sd = float(x.std(ddof=1)) if scale is None else float(scale)
    z = (x - mu) / sd
    ks = stats.kstest(z, "norm")
    return NormalityReport(
        count=n,
        mean=float(x.mean()),
        std=float(x.std(ddof=1)),
        ks_stat=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        w1=w1_normal(z),
        skewness=float(stats.skew(z)),
        skewness_se=math.sqrt(6.0 / n),
        excess_kurtosis=float(stats.kurtosis(z)),
        excess_kurtosis_se=math.sqrt(24.0 / n),
    )


@dataclass(frozen=True)
class CovarianceComparison:
    empirical: np.ndarray
    std_error: np.ndarray
    target: np.ndarray
    tolerance: np.ndarray

    @property
    def z_scores(self) -> np.ndarray:
        return (self.empirical - self.target) / np.where(self.std_error > 0, self.std_error, np.inf)

    def within(self, sigmas: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.empirical - self.target) <= sigmas * self.std_error + self.tolerance))


def multi_time_gaussianity(samples, target, tolerance=0.0, normaliser: float = 1.0) -> CovarianceComparison:
    """Empirical covariance of the columns of ``samples / normaliser`` against ``target``.

    Standard errors of each entry are the sample standard deviation of the
    centred products divided by ``sqrt(count)``.
    """
    x = np.asarray(samples, dtype=float) / normaliser
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    prod = xc[:, :, None] * xc[:, None, :]
    emp = prod.sum(axis=0) / (n - 1)
    se = prod.std(axis=0, ddof=1) / math.sqrt(n)
    target = np.asarray(target, dtype=float)
    tol = np.broadcast_to(np.asarray(tolerance, dtype=float), target.shape).copy()
    return CovarianceComparison(emp, se, target, tol)


@dataclass(frozen=True)
class RateTable:
    radii: np.ndarray
    distances: np.ndarray
    bounds: np.ndarray
    slope: float
    slope_half_width: float
    strictly_decreasing: bool


def distance_rate_table(radii, distances, bounds=None) -> RateTable:
    """Tabulate measured distances against radius with a log-log slope (at least four radii)."""
    r = np.asarray(radii, dtype=float)
    d = np.asarray(distances, dtype=float)
    b = np.full_like(d, np.nan) if bounds is None else np.asarray(bounds, dtype=float)
    fit = exponent_fit(list(zip(r, d)), min_points=4, min_span=1.0)
    return RateTable(r, d, b, fit.slope, fit.half_width, bool(np.all(np.diff(d) < 0)))
