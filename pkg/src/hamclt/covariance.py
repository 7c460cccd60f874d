"""Spatial covariance kernels and their spectral densities.

Fourier convention: ``gamma(x) = int exp(-i xi.x) g(xi) d xi``, so white noise
has the flat density ``g = (2 pi)^-d``.  Every model provides the spatial
kernel, the spectral density, the Dalang constant
``C_mu = int g(xi) / (1 + |xi|^2) d xi`` and samplers used by the Monte Carlo
estimators elsewhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any

import numpy as np
from scipy import integrate, special


class DalangError(ValueError):
    """Raised when the Dalang constant is infinite."""


class Kind(str, Enum):
    HEAT = "heat"
    POISSON = "poisson"
    RIESZ = "riesz"
    BESSEL = "bessel"
    FRACTIONAL = "fractional"
    WHITE = "white"


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in ``R^d`` (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def riesz_constant(d: int, beta: float) -> float:
    """Constant ``C`` with ``int exp(-i xi.x) C |xi|^(beta-d) d xi = |x|^-beta``."""
    return (
        (2 * math.pi) ** (-d)
        * math.pi ** (d / 2)
        * 2.0 ** (d - beta)
        * math.gamma((d - beta) / 2)
        / math.gamma(beta / 2)
    )


def fractional_constant(hurst: float) -> float:
    """Spectral constant for ``H(2H-1)|x|^(2H-2)`` in one dimension."""
    return math.gamma(2 * hurst + 1) * math.sin(math.pi * hurst) / (2 * math.pi)


@dataclass(frozen=True)
class CovarianceModel:
    """An isotropic or product covariance on ``R^d``, ``d`` in {1, 2}.

    Build instances with the helper constructors (:func:`heat`,
    :func:`riesz`, ...) which validate parameters.
    """

    kind: Kind
    dimension: int
    a: float | None = None
    beta: float | None = None
    alpha: float | None = None
    hurst: tuple[float, ...] | None = None
    ell: float | None = field(default=None, compare=False)

    # -- basic properties -------------------------------------------------
    @property
    def integrable(self) -> bool:
        return self.kind in (Kind.HEAT, Kind.POISSON, Kind.BESSEL, Kind.WHITE)

    @property
    def gamma_l1_norm(self) -> float | None:
        """``||gamma||_L1``: 1 for the normalised kernels, ``inf`` for the
        power laws and ``None`` for white noise, whose kernel is a point mass."""
        if self.kind in (Kind.HEAT, Kind.POISSON, Kind.BESSEL):
            return 1.0
        if self.kind == Kind.WHITE:
            return None
        return math.inf

    @property
    def gamma_mass(self) -> float:
        """Total mass of ``gamma`` as a measure (1 for white noise)."""
        m = self.gamma_l1_norm
        return 1.0 if m is None else m

    def embed_exponent(self) -> float:
        """Integrability exponent ``q`` used for the two-dimensional derivative bounds.

        ``ell / (2 ell - 1)`` when ``gamma`` lies in ``L^ell`` for the stored
        ``ell > 1``; ``2 / (4 - beta)`` for the Riesz kernel.  Only defined for
        ``d = 2``.
        """
        if self.dimension != 2:
            raise ValueError("embedding exponent is only defined for d = 2")
        if self.kind == Kind.RIESZ:
            return 2.0 / (4.0 - self.beta)
        if self.ell is None or not self.ell > 1:
            raise ValueError("embedding exponent needs gamma in L^ell for some ell > 1")
        if self.kind in (Kind.WHITE, Kind.FRACTIONAL):
            raise ValueError(f"{self.kind.value} kernel is not in L^ell")
        return self.ell / (2.0 * self.ell - 1.0)

    @property
    def energy_exponent(self) -> float:
        """Exponent ``beta`` in the ball-energy growth ``R^(2d - beta)`` (``d`` if integrable)."""
        if self.kind == Kind.RIESZ:
            return float(self.beta)
        if self.kind == Kind.FRACTIONAL:
            return float(sum(2 - 2 * h for h in self.hurst))
        return float(self.dimension)

    def to_config(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kernel": self.kind.value, "dimension": self.dimension}
        for name in ("a", "beta", "alpha", "ell"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val
        if self.hurst is not None:
            out["hurst"] = list(self.hurst)
        return out

    # -- spatial kernel -----------------------------------------------------
    def _points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dimension == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if x.shape[-1] != self.dimension:
            raise ValueError(f"expected trailing dimension {self.dimension}, got {x.shape}")
        return x

    def eval_gamma(self, x) -> np.ndarray:
        """Covariance kernel at points ``x`` of shape ``(..., d)``.

        In one dimension a plain array of scalars is accepted too.  Singular
        kernels return ``inf`` at the origin; white noise raises.
        """
        x = self._points(x)
        d = self.dimension
        r = np.sqrt(np.sum(x * x, axis=-1))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.kind == Kind.HEAT:
                return (2 * math.pi * self.a) ** (-d / 2) * np.exp(-(r**2) / (2 * self.a))
            if self.kind == Kind.POISSON:
                c = math.gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2)
                return c * self.a * (self.a**2 + r**2) ** (-(d + 1) / 2)
            if self.kind == Kind.RIESZ:
                return np.where(r > 0, r ** (-self.beta), np.inf)
            if self.kind == Kind.BESSEL:
                return _bessel_kernel(r, d, self.alpha)
            if self.kind == Kind.FRACTIONAL:
                out = np.ones(x.shape[:-1])
                for i, h in enumerate(self.hurst):
                    ax = np.abs(x[..., i])
                    out = out * np.where(ax > 0, h * (2 * h - 1) * ax ** (2 * h - 2), np.inf)
                return out
        raise ValueError("white noise has no pointwise covariance kernel")

    def eval_spectral(self, xi) -> np.ndarray:
        """Spectral density ``g`` at frequencies of shape ``(..., d)``."""
        xi = self._points(xi)
        d = self.dimension
        k = np.sqrt(np.sum(xi * xi, axis=-1))
        norm = (2 * math.pi) ** (-d)
        if self.kind in (Kind.RIESZ, Kind.FRACTIONAL) and np.any(xi == 0 if self.kind == Kind.FRACTIONAL else k == 0):
            raise ValueError("spectral density is singular at the origin")
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == Kind.HEAT:
                return norm * np.exp(-self.a * k**2 / 2)
            if self.kind == Kind.POISSON:
                return norm * np.exp(-self.a * k)
            if self.kind == Kind.BESSEL:
                return norm * (1 + k**2) ** (-self.alpha / 2)
            if self.kind == Kind.WHITE:
                return np.full(k.shape, norm)
            if self.kind == Kind.RIESZ:
                c = riesz_constant(d, self.beta)
                return c * k ** (self.beta - d)
            out = np.ones(xi.shape[:-1])
            for i, h in enumerate(self.hurst):
                ax = np.abs(xi[..., i])
                out = out * fractional_constant(h) * ax ** (1 - 2 * h)
            return out

    # -- Dalang constant ----------------------------------------------------
    @cached_property
    def dalang_constant(self) -> float:
        """``C_mu = int g(xi) / (1 + |xi|^2) d xi``; raises :class:`DalangError` if infinite."""
        d = self.dimension
        if self.kind == Kind.WHITE:
            if d == 1:
                return 0.5
            raise DalangError("white noise violates Dalang's condition for d >= 2")
        if self.kind == Kind.BESSEL and d - self.alpha >= 2:
            raise DalangError("Bessel kernel needs d - alpha < 2")
        if self.kind == Kind.RIESZ:
            if not 0 < self.beta < 2:
                raise DalangError("Riesz kernel needs beta < 2")
            if self.beta >= d:
                raise ValueError("Riesz kernel needs beta < d to be locally integrable")
            # int_0^inf r^(beta-1) / (1 + r^2) dr = pi / (2 sin(pi beta / 2))
            return (
                riesz_constant(d, self.beta)
                * sphere_area(d)
                * math.pi
                / (2 * math.sin(math.pi * self.beta / 2))
            )
        if self.kind == Kind.FRACTIONAL:
            return _fractional_dalang(self.hurst)
        area = sphere_area(d)

        def radial(k):
            return area * k ** (d - 1) * float(self.eval_spectral(np.full(d, k / math.sqrt(d)))) / (1 + k * k)

        val, err = integrate.quad(radial, 0, math.inf, limit=400, epsabs=0, epsrel=1e-11)
        if not math.isfinite(val) or err > 1e-7 * abs(val):
            raise DalangError(f"quadrature did not converge (estimate {val}, error {err})")
        return val

    def dalang_check(self) -> bool:
        try:
            return math.isfinite(self.dalang_constant)
        except DalangError:
            return False

    # -- samplers ---------------------------------------------------------
    def spectral_proposal(self, kind: str = "default") -> "Proposal":
        """Proposal density on frequency space used for importance sampling."""
        d = self.dimension
        if kind == "cauchy":
            return CauchyProposal(d, 1.0)
        if kind != "default":
            raise ValueError(f"unknown proposal {kind!r}")
        if self.kind == Kind.HEAT:
            return GaussianProposal(d, 1.0 / math.sqrt(self.a))
        if self.kind == Kind.POISSON:
            return ExponentialRadialProposal(d, self.a)
        if self.kind == Kind.RIESZ:
            return PowerRadialProposal(d, self.beta)
        if self.kind == Kind.FRACTIONAL:
            return ProductProposal([PowerRadialProposal(1, 2 - 2 * h) for h in self.hurst])
        return CauchyProposal(d, 1.0)

    def offset_proposal(self, reach: float) -> "Proposal":
        """Proposal for spatial offsets ``u`` weighted by ``gamma(u)``.

        Normalisable kernels are sampled exactly; power laws are truncated to
        ``|u| <= reach`` (per coordinate for product kernels), which is exact
        whenever the integrand vanishes beyond ``reach``.
        """
        d = self.dimension
        if self.kind == Kind.HEAT:
            return GaussianProposal(d, math.sqrt(self.a))
        if self.kind == Kind.POISSON:
            return CauchyProposal(d, self.a)
        if self.kind == Kind.BESSEL:
            return BesselMixtureProposal(d, self.alpha)
        if self.kind == Kind.RIESZ:
            return TruncatedPowerProposal(d, self.beta, reach)
        if self.kind == Kind.FRACTIONAL:
            return ProductProposal([TruncatedPowerProposal(1, 2 - 2 * h, reach) for h in self.hurst])
        raise ValueError("white noise offsets are identically zero")


def _bessel_kernel(r, d, alpha):
    nu = (alpha - d) / 2
    pref = 2.0 / ((4 * math.pi) ** (d / 2) * math.gamma(alpha / 2))
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = pref * (r / 2) ** nu * special.kv(nu, r)
    if alpha > d:
        at0 = (4 * math.pi) ** (-d / 2) * math.gamma(nu) / math.gamma(alpha / 2)
    else:
        at0 = math.inf
    return np.where(r > 0, val, at0)


def _fractional_dalang(hurst):
    if len(hurst) == 1:
        s = 2 - 2 * hurst[0]
        return fractional_constant(hurst[0]) * math.pi / math.sin(math.pi * s / 2)
    (h1, h2) = hurst
    s2 = 2 - 2 * h2
    c1, c2 = fractional_constant(h1), fractional_constant(h2)
    # inner integral over xi_2 in closed form
    inner = 2 * c2 * math.pi / (2 * math.sin(math.pi * s2 / 2))

    def outer(x):
        return 2 * c1 * x ** (1 - 2 * h1) * inner * (1 + x * x) ** (s2 / 2 - 1)

    val, err = integrate.quad(outer, 0, 1, limit=200, epsrel=1e-11)
    val2, err2 = integrate.quad(outer, 1, math.inf, limit=200, epsrel=1e-11)
    total = val + val2
    if not math.isfinite(total) or (err + err2) > 1e-7 * total:
        raise DalangError("fractional Dalang constant is infinite")
    return total


# -- proposal densities ------------------------------------------------------


class Proposal:
    dimension: int

    def sample(self, gen: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _directions(gen, count, d):
    if d == 1:
        return np.where(gen.random(count) < 0.5, -1.0, 1.0)[:, None]
    theta = gen.uniform(0, 2 * math.pi, count)
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


@dataclass(frozen=True)
class GaussianProposal(Proposal):
    dimension: int
    scale: float

    def sample(self, gen, count):
        return gen.normal(0.0, self.scale, size=(count, self.dimension))

    def pdf(self, x):
        r2 = np.sum(np.square(x), axis=-1)
        s2 = self.scale**2
        return (2 * math.pi * s2) ** (-self.dimension / 2) * np.exp(-r2 / (2 * s2))


@dataclass(frozen=True)
class CauchyProposal(Proposal):
    """Isotropic multivariate Cauchy; equals the Poisson kernel with ``a = scale``."""

    dimension: int
    scale: float

    def sample(self, gen, count):
        z = gen.normal(size=(count, self.dimension))
        w = np.abs(gen.normal(size=(count, 1)))
        return self.scale * z / w

    def pdf(self, x):
        d = self.dimension
        c = math.gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2)
        r2 = np.sum(np.square(x), axis=-1)
        return c * self.scale * (self.scale**2 + r2) ** (-(d + 1) / 2)


@dataclass(frozen=True)
class ExponentialRadialProposal(Proposal):
    """Density proportional to ``exp(-a |x|)``."""

    dimension: int
    a: float

    def sample(self, gen, count):
        r = gen.gamma(self.dimension, 1.0 / self.a, size=count)
        return r[:, None] * _directions(gen, count, self.dimension)

    def pdf(self, x):
        d = self.dimension
        r = np.sqrt(np.sum(np.square(x), axis=-1))
        norm = self.a**d / (sphere_area(d) * math.gamma(d))
        return norm * np.exp(-self.a * r)


@dataclass(frozen=True)
class PowerRadialProposal(Proposal):
    """Radial law ``beta r^(beta-1)`` on ``[0, 1]`` mixed half and half with ``r^-2`` on ``[1, inf)``.

    Matches the ``|xi|^(beta-d)`` singularity of power-law spectra at the origin.
    """

    dimension: int
    beta: float

    def sample(self, gen, count):
        u = gen.random(count)
        low = gen.random(count) < 0.5
        r = np.where(low, u ** (1.0 / self.beta), 1.0 / np.maximum(u, 1e-300))
        return r[:, None] * _directions(gen, count, self.dimension)

    def pdf(self, x):
        d = self.dimension
        r = np.sqrt(np.sum(np.square(x), axis=-1))
        with np.errstate(divide="ignore"):
            pr = np.where(r <= 1, 0.5 * self.beta * r ** (self.beta - 1), 0.5 / r**2)
            return pr / (sphere_area(d) * r ** (d - 1))


@dataclass(frozen=True)
class TruncatedPowerProposal(Proposal):
    """Density proportional to ``|x|^-beta`` on the ball of radius ``reach``."""

    dimension: int
    beta: float
    reach: float

    @property
    def mass(self) -> float:
        d = self.dimension
        return sphere_area(d) * self.reach ** (d - self.beta) / (d - self.beta)

    def sample(self, gen, count):
        d = self.dimension
        r = self.reach * gen.random(count) ** (1.0 / (d - self.beta))
        return r[:, None] * _directions(gen, count, d)

    def pdf(self, x):
        r = np.sqrt(np.sum(np.square(x), axis=-1))
        with np.errstate(divide="ignore"):
            return np.where(r <= self.reach, r ** (-self.beta) / self.mass, 0.0)


@dataclass(frozen=True)
class BesselMixtureProposal(Proposal):
    """Exact sampler for the Bessel kernel as a Gaussian scale mixture."""

    dimension: int
    alpha: float

    def sample(self, gen, count):
        tau = gen.gamma(self.alpha / 2, 1.0, size=count)
        return gen.normal(size=(count, self.dimension)) * np.sqrt(2 * tau)[:, None]

    def pdf(self, x):
        r = np.sqrt(np.sum(np.square(x), axis=-1))
        return _bessel_kernel(r, self.dimension, self.alpha)


@dataclass(frozen=True)
class ProductProposal(Proposal):
    factors: tuple

    def __init__(self, factors):
        object.__setattr__(self, "factors", tuple(factors))

    @property
    def dimension(self) -> int:
        return len(self.factors)

    def sample(self, gen, count):
        return np.concatenate([f.sample(gen, count) for f in self.factors], axis=1)

    def pdf(self, x):
        out = np.ones(x.shape[:-1])
        for i, f in enumerate(self.factors):
            out = out * f.pdf(x[..., i : i + 1])
        return out


@dataclass(frozen=True)
class MixtureProposal(Proposal):
    """Finite mixture of proposals with fixed weights."""

    parts: tuple
    weights: tuple

    def __init__(self, parts, weights):
        w = np.asarray(weights, dtype=float)
        object.__setattr__(self, "parts", tuple(parts))
        object.__setattr__(self, "weights", tuple(w / w.sum()))

    @property
    def dimension(self) -> int:
        return self.parts[0].dimension

    def sample(self, gen, count):
        pick = gen.choice(len(self.parts), size=count, p=self.weights)
        out = np.empty((count, self.dimension))
        for i, part in enumerate(self.parts):
            sel = pick == i
            out[sel] = part.sample(gen, int(sel.sum()))
        return out

    def pdf(self, x):
        return sum(w * p.pdf(x) for w, p in zip(self.weights, self.parts))


def spectral_importance_sampler(model: CovarianceModel, gen: np.random.Generator, count: int, proposal: str = "default"):
    """Draw ``count`` frequencies and weights ``g(xi) / q(xi)``.

    ``mean(h(xi) * w)`` is then an unbiased estimate of ``int h g``.
    """
    q = model.spectral_proposal(proposal)
    xi = q.sample(gen, count)
    return xi, model.eval_spectral(xi) / q.pdf(xi)


# -- constructors --------------------------------------------------------------


def _check_dim(d):
    if d not in (1, 2):
        raise ValueError("dimension must be 1 or 2")


def heat(a: float = 1.0, dimension: int = 1) -> CovarianceModel:
    _check_dim(dimension)
    if not a > 0:
        raise ValueError("heat kernel needs a > 0")
    return CovarianceModel(Kind.HEAT, dimension, a=float(a))


def poisson(a: float = 1.0, dimension: int = 1) -> CovarianceModel:
    _check_dim(dimension)
    if not a > 0:
        raise ValueError("Poisson kernel needs a > 0")
    return CovarianceModel(Kind.POISSON, dimension, a=float(a))


def riesz(beta: float, dimension: int = 1) -> CovarianceModel:
    _check_dim(dimension)
    if not 0 < beta < min(2, dimension):
        raise ValueError("Riesz kernel needs 0 < beta < min(2, d)")
    return CovarianceModel(Kind.RIESZ, dimension, beta=float(beta))


def bessel(alpha: float, dimension: int = 1) -> CovarianceModel:
    _check_dim(dimension)
    if not alpha > 0:
        raise ValueError("Bessel kernel needs alpha > 0")
    return CovarianceModel(Kind.BESSEL, dimension, alpha=float(alpha))


def fractional(hurst, dimension: int | None = None) -> CovarianceModel:
    h = tuple(float(v) for v in np.atleast_1d(hurst))
    dimension = len(h) if dimension is None else dimension
    _check_dim(dimension)
    if len(h) != dimension:
        raise ValueError("need one Hurst index per coordinate")
    if not all(0.5 < v < 1 for v in h):
        raise ValueError("Hurst indices must lie in (1/2, 1)")
    if sum(h) <= dimension - 1:
        raise ValueError("Hurst indices violate Dalang's condition")
    return CovarianceModel(Kind.FRACTIONAL, dimension, hurst=h)


def white(dimension: int = 1) -> CovarianceModel:
    _check_dim(dimension)
    if dimension != 1:
        raise DalangError("white noise violates Dalang's condition for d >= 2")
    return CovarianceModel(Kind.WHITE, dimension)


def from_config(cfg: dict[str, Any]) -> CovarianceModel:
    """Build a model from a mapping such as ``{"kernel": "riesz", "beta": 0.5}``."""
    kind = Kind(cfg["kernel"])
    d = int(cfg.get("dimension", 1))
    if kind == Kind.HEAT:
        model = heat(cfg.get("a", 1.0), d)
    elif kind == Kind.POISSON:
        model = poisson(cfg.get("a", 1.0), d)
    elif kind == Kind.RIESZ:
        model = riesz(cfg["beta"], d)
    elif kind == Kind.BESSEL:
        model = bessel(cfg["alpha"], d)
    elif kind == Kind.FRACTIONAL:
        model = fractional(cfg["hurst"], d)
    else:
        model = white(d)
    if cfg.get("ell") is not None:
        if not float(cfg["ell"]) > 1:
            raise ValueError("ell must exceed 1")
        model = CovarianceModel(model.kind, model.dimension, model.a, model.beta, model.alpha, model.hurst, float(cfg["ell"]))
    return model
