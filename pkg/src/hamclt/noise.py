"""Discretised noise and chaos evaluation by Wick and Hermite arithmetic.

The noise is restricted to indicators of the cells of a uniform grid on
``[-L, L]^d``.  The Gaussian vector ``X_i = W(1_{cell_i})`` has covariance
``C`` (the Gram matrix), realised as ``X = A zeta`` with ``zeta`` standard
normal and ``A A^T = C``.  A chaos kernel is projected onto piecewise constant
functions, ``F = sum F_{i_1..i_n} 1_{cell_{i_1}} x ... x 1_{cell_{i_n}}`` with
``F_{i..}`` the cell averages, and stored sparsely on nondecreasing
multi-indices after symmetrisation.

``I_n(F)`` is then evaluated either as a Wick polynomial in ``X`` (scalable,
sparse) or, for small grids, as a Hermite form in the orthonormal
coordinates ``zeta``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import kernels, wave
from .chaos import ChaosKernel
from .covariance import CovarianceModel, Kind
from .streams import as_stream

N_SIM_MAX = 4


class GramError(RuntimeError):
    """The assembled Gram matrix is not positive semidefinite within tolerance."""


# -- grid -------------------------------------------------------------------------


def _second_antiderivative(model: CovarianceModel):
    """Even function ``Gamma2`` with ``Gamma2'' = gamma`` in one dimension, or ``None``."""
    if model.kind == Kind.RIESZ:
        b = model.beta
        return lambda u: np.abs(u) ** (2 - b) / ((1 - b) * (2 - b))
    if model.kind == Kind.FRACTIONAL:
        h = model.hurst[0]
        b = 2 - 2 * h
        return lambda u: h * (2 * h - 1) * np.abs(u) ** (2 - b) / ((1 - b) * (2 - b))
    if model.kind == Kind.POISSON:
        a = model.a
        return lambda u: (u * np.arctan(u / a) - 0.5 * a * np.log(a * a + u * u)) / math.pi
    if model.kind == Kind.HEAT:
        sa = math.sqrt(model.a)
        return lambda u: u * (special.ndtr(u / sa) - 0.5) + model.a * np.exp(-u * u / (2 * model.a)) / (sa * math.sqrt(2 * math.pi))
    return None


def _cell_covariance_1d(model: CovarianceModel, h: float, lags: np.ndarray) -> np.ndarray:
    """``int_{cell_0} int_{cell_k} gamma(x - y)`` for cells of width ``h`` at lags ``k h``."""
    if model.kind == Kind.WHITE:
        return np.where(lags == 0, h, 0.0)
    delta = lags * h
    g2 = _second_antiderivative(model)
    if g2 is not None:
        return g2(delta + h) - 2 * g2(delta) + g2(delta - h)
    from scipy import integrate

    out = np.empty(delta.shape)
    for i, dl in enumerate(delta.ravel()):
        f = lambda v: (h - abs(v)) * float(model.eval_gamma(dl + v))
        pts = [p for p in (-dl,) if -h < p < h]
        val, _ = integrate.quad(f, -h, h, points=pts or None, epsabs=1e-14, epsrel=1e-11, limit=200)
        out.ravel()[i] = val
    return out


@dataclass(frozen=True, eq=False)
class NoiseGrid:
    """Uniform cell grid on ``[-L, L]^d`` with the Gram matrix of its indicators."""

    model: CovarianceModel
    half_width: float
    cells: int
    gram: np.ndarray
    factor: np.ndarray
    clamped: int
    min_eigenvalue: float

    @property
    def dimension(self) -> int:
        return self.model.dimension

    @property
    def width(self) -> float:
        return 2 * self.half_width / self.cells

    @property
    def size(self) -> int:
        return self.cells**self.dimension

    @property
    def axis_centers(self) -> np.ndarray:
        return -self.half_width + self.width * (np.arange(self.cells) + 0.5)

    @property
    def centers(self) -> np.ndarray:
        c = self.axis_centers
        if self.dimension == 1:
            return c[:, None]
        g = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)
        return g.reshape(-1, 2)

    def cell_index(self, z) -> int:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (self.dimension,) or np.any(np.abs(z) > self.half_width):
            raise ValueError("point outside the grid domain")
        idx = np.minimum(((z + self.half_width) / self.width).astype(int), self.cells - 1)
        return int(idx[0]) if self.dimension == 1 else int(idx[0] * self.cells + idx[1])

    def factor_error(self) -> float:
        """Relative Frobenius error of ``A A^T`` against the Gram matrix."""
        return float(np.linalg.norm(self.factor @ self.factor.T - self.gram) / np.linalg.norm(self.gram))


def gram_matrix(model: CovarianceModel, half_width: float, cells: int) -> np.ndarray:
    h = 2 * half_width / cells
    lags = np.arange(cells)
    row = _cell_covariance_1d(model if model.dimension == 1 else _marginal(model, 0), h, lags.astype(float))
    c1 = row[np.abs(lags[:, None] - lags[None, :])]
    if model.dimension == 1:
        return c1
    if model.kind == Kind.HEAT:
        return np.kron(c1, c1)
    if model.kind == Kind.FRACTIONAL:
        row2 = _cell_covariance_1d(_marginal(model, 1), h, lags.astype(float))
        return np.kron(c1, row2[np.abs(lags[:, None] - lags[None, :])])
    raise NotImplementedError(f"two-dimensional grids need a product covariance, got {model.kind.value}")


def _marginal(model: CovarianceModel, axis: int) -> CovarianceModel:
    if model.kind == Kind.HEAT:
        return CovarianceModel(Kind.HEAT, 1, a=model.a)
    if model.kind == Kind.FRACTIONAL:
        return CovarianceModel(Kind.FRACTIONAL, 1, hurst=(model.hurst[axis],))
    raise NotImplementedError(f"{model.kind.value} covariance does not factor over coordinates")


def build_grid(half_width: float, cells: int, model: CovarianceModel, floor: float = 1e-12, tol: float = 1e-8, cache=None) -> NoiseGrid:
    """Assemble the Gram matrix of cell indicators and its spectral square root.

    Eigenvalues below ``floor * trace`` are clamped to zero; a negative
    eigenvalue below ``-tol * trace`` raises :class:`GramError`.  ``cache``
    is an optional :class:`~hamclt.cache.ArrayCache`.
    """
    if cells < 2:
        raise ValueError("need at least two cells per axis")
    if half_width <= 0:
        raise ValueError("half width must be positive")
    key = {"object": "grid", "model": model.to_config(), "half_width": float(half_width), "cells": int(cells), "floor": floor}
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return NoiseGrid(model, float(half_width), int(cells), hit["gram"], hit["factor"], int(hit["clamped"][0]), float(hit["min_eigenvalue"][0]))
    gram = gram_matrix(model, half_width, cells)
    gram = 0.5 * (gram + gram.T)
    lam, vec = np.linalg.eigh(gram)
    trace = float(np.trace(gram))
    if lam.min() < -tol * trace:
        raise GramError(f"Gram matrix has eigenvalue {lam.min():.3e} (trace {trace:.3e})")
    small = lam < floor * trace
    lam_c = np.where(small, 0.0, lam)
    factor = (vec * np.sqrt(lam_c)) @ vec.T
    grid = NoiseGrid(model, float(half_width), int(cells), gram, factor, int(small.sum()), float(lam.min()))
    if cache is not None:
        cache.put(key, {"gram": gram, "factor": factor, "clamped": np.array([grid.clamped]), "min_eigenvalue": np.array([grid.min_eigenvalue])})
    return grid


# -- coefficients ----------------------------------------------------------------------


def _multiplicity(idx: np.ndarray) -> np.ndarray:
    """``n! / prod m_k!`` for sorted multi-indices."""
    n = idx.shape[1]
    out = np.full(idx.shape[0], float(math.factorial(n)))
    if n == 0:
        return out
    run = np.ones(idx.shape[0])
    for k in range(1, n):
        same = idx[:, k] == idx[:, k - 1]
        run = np.where(same, run + 1, 1.0)
        out = out / np.where(same, run, 1.0)
    return out


@dataclass(frozen=True, eq=False)
class ChaosCoefficients:
    """Symmetric coefficient tensor over cell indicators, stored on sorted multi-indices."""

    order: int
    indices: np.ndarray
    values: np.ndarray
    size: int
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_entries(cls, order, indices, values, size, meta=None, prune: bool = True):
        indices = np.asarray(indices, dtype=np.int64).reshape(-1, order)
        values = np.asarray(values, dtype=float).reshape(-1)
        if indices.shape[0]:
            indices = np.sort(indices, axis=1)
            keys, inv = np.unique(indices, axis=0, return_inverse=True)
            summed = np.zeros(keys.shape[0])
            np.add.at(summed, inv.ravel(), values)
            indices, values = keys, summed
        if prune and values.size:
            keep = values != 0
            indices, values = indices[keep], values[keep]
        return cls(order, indices, values, size, dict(meta or {}))

    @property
    def multiplicity(self) -> np.ndarray:
        return _multiplicity(self.indices)

    def to_dense(self) -> np.ndarray:
        if self.size**self.order > 20_000_000:
            raise MemoryError("tensor too large for dense form")
        out = np.zeros((self.size,) * self.order)
        for perm in set(itertools.permutations(range(self.order))):
            out[tuple(self.indices[:, list(perm)].T)] = self.values
        return out

    def lookup(self) -> dict:
        return {tuple(int(v) for v in row): float(val) for row, val in zip(self.indices, self.values)}

    def slice(self, cells) -> "ChaosCoefficients":
        """Fix the given cells in as many slots; returns an order ``n - len(cells)`` tensor."""
        cells = [int(c) for c in np.atleast_1d(cells)]
        m = self.order - len(cells)
        if m < 0:
            raise ValueError("too many slots fixed")
        sel = np.ones(self.indices.shape[0], dtype=bool)
        rest = self.indices.copy()
        for c in cells:
            hit = rest == c
            has = hit.any(axis=1) & sel
            first = np.argmax(hit, axis=1)
            sel = has
            rest = np.where(np.arange(rest.shape[1])[None, :] == first[:, None], -1, rest)
        kept = rest[sel]
        kept = np.sort(kept, axis=1)[:, len(cells):]
        return ChaosCoefficients(m, kept, self.values[sel], self.size, dict(self.meta))

    def scaled(self, factor: float) -> "ChaosCoefficients":
        return ChaosCoefficients(self.order, self.indices, self.values * factor, self.size, dict(self.meta))


def add_coefficients(items, weights=None) -> ChaosCoefficients:
    """Weighted sum of coefficient tensors of equal order."""
    items = list(items)
    weights = np.ones(len(items)) if weights is None else np.asarray(weights, dtype=float)
    order = items[0].order
    idx = np.concatenate([c.indices for c in items], axis=0)
    val = np.concatenate([w * c.values for c, w in zip(items, weights)])
    return ChaosCoefficients.from_entries(order, idx, val, items[0].size, items[0].meta)


def _candidate_indices(grid: NoiseGrid, n: int, lo: int, hi: int, span: int) -> np.ndarray:
    """Sorted multi-indices in ``[lo, hi)`` whose entries lie within ``span`` cells of each other."""
    base = np.arange(lo, hi)
    if n == 1:
        return base[:, None]
    offs = [c for c in itertools.combinations_with_replacement(range(span + 1), n - 1)]
    offs = np.array(offs, dtype=np.int64)
    cand = np.concatenate([np.repeat(base, len(offs))[:, None], (base[:, None, None] + offs[None]).reshape(-1, n - 1)], axis=1)
    return cand[np.all(cand < hi, axis=1)]


def _quad_points(order: int, width: float):
    if order == 1:
        return np.array([0.0]), np.array([1.0])
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * width * x, 0.5 * w


def _project_1d(grid: NoiseGrid, n: int, kind: int, params, centre: float, reach: float, quad_order: int, meta) -> ChaosCoefficients:
    h = grid.width
    cen = grid.axis_centers
    lo = max(0, int(np.floor((centre - reach + grid.half_width) / h)) - 1)
    hi = min(grid.cells, int(np.ceil((centre + reach + grid.half_width) / h)) + 1)
    span = int(np.ceil(params[0] / h)) + 1
    idx = _candidate_indices(grid, n, lo, hi, span)
    if idx.size == 0:
        return ChaosCoefficients(n, np.zeros((0, n), dtype=np.int64), np.zeros(0), grid.size, meta)
    qx, qw = _quad_points(quad_order, h)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    vals = np.zeros(idx.shape[0])
    for nodes in itertools.product(range(len(qx)), repeat=n):
        pts = cen[idx] + qx[list(nodes)][None, :]
        wt = float(np.prod(qw[list(nodes)]))
        vals += wt * kernels.permutation_sum(kind, pts, perms, params)
    vals /= len(perms)
    keep = vals != 0
    return ChaosCoefficients(n, idx[keep], vals[keep], grid.size, meta)


def project_kernel(kernel: ChaosKernel, grid: NoiseGrid, quad_order: int = 2, n_max: int = N_SIM_MAX) -> ChaosCoefficients:
    """Cell averages of ``f_n(., x; t)``, symmetrised, on the grid.

    ``quad_order`` Gauss-Legendre points per cell and axis; ``1`` is the
    midpoint rule, whose coefficients equal the kernel at cell centres.
    Supported for ``d = 1`` (any order up to ``n_max``) and for ``n = 1`` in
    ``d = 2``.
    """
    n, t = kernel.order, kernel.horizon
    if n > n_max:
        raise ValueError(f"order {n} exceeds the simulation limit {n_max}")
    meta = {"kind": "point", "t": t, "anchor": kernel.anchor}
    if t <= 0:
        return ChaosCoefficients(n, np.zeros((0, n), dtype=np.int64), np.zeros(0), grid.size, meta)
    if grid.dimension == 1:
        return _project_1d(grid, n, kernels.ANCHORED, (t, kernel.anchor[0], 0.0), kernel.anchor[0], t, quad_order, meta)
    if n != 1:
        raise NotImplementedError("planar projection is available for the first order only")
    qx, qw = _quad_points(quad_order, grid.width)
    cen = grid.centers
    vals = np.zeros(grid.size)
    x = np.asarray(kernel.anchor)
    for i, j in itertools.product(range(len(qx)), repeat=2):
        p = cen + np.array([qx[i], qx[j]])
        vals += qw[i] * qw[j] * wave.first_kernel(2, t, np.linalg.norm(p - x, axis=1))
    keep = vals != 0
    return ChaosCoefficients(1, np.nonzero(keep)[0][:, None], vals[keep], grid.size, meta)


def project_ball_kernel(n: int, t: float, R: float, grid: NoiseGrid, quad_order: int = 2, n_max: int = N_SIM_MAX) -> ChaosCoefficients:
    """Cell averages of ``g_{n,R}(.; t) = int_{-R}^{R} f_n(., x; t) dx`` (``d = 1``)."""
    if grid.dimension != 1:
        raise NotImplementedError("ball kernels are projected in one dimension")
    if n > n_max:
        raise ValueError(f"order {n} exceeds the simulation limit {n_max}")
    if R > grid.half_width:
        raise ValueError("radius exceeds the grid domain")
    meta = {"kind": "ball", "t": t, "radius": R}
    if t <= 0 or R <= 0:
        return ChaosCoefficients(n, np.zeros((0, n), dtype=np.int64), np.zeros(0), grid.size, meta)
    return _project_1d(grid, n, kernels.BALL, (t, R, 0.0), 0.0, R + t, quad_order, meta)


def reconstruction_error(kernel: ChaosKernel, coeffs: ChaosCoefficients, grid: NoiseGrid, quad_order: int = 4) -> tuple[float, float]:
    """``L^2(dx)`` distance between ``f~_n`` and its piecewise constant reconstruction (``d = 1``).

    Returns ``(absolute, relative)``; the integral runs over all cell blocks in
    the kernel support, ``quad_order`` Gauss-Legendre points per cell and axis.
    """
    if grid.dimension != 1:
        raise NotImplementedError("reconstruction error is computed in one dimension")
    n, t = kernel.order, kernel.horizon
    if t <= 0:
        return 0.0, 0.0
    h = grid.width
    x0 = kernel.anchor[0]
    lo = max(0, int(np.floor((x0 - t + grid.half_width) / h)) - 1)
    hi = min(grid.cells, int(np.ceil((x0 + t + grid.half_width) / h)) + 1)
    idx = _candidate_indices(grid, n, lo, hi, int(np.ceil(t / h)) + 1)
    table = coeffs.lookup()
    F = np.array([table.get(tuple(int(v) for v in row), 0.0) for row in idx])
    qx, qw = _quad_points(quad_order, h)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    cen = grid.axis_centers
    err = np.zeros(idx.shape[0])
    ref = np.zeros(idx.shape[0])
    for nodes in itertools.product(range(len(qx)), repeat=n):
        pts = cen[idx] + qx[list(nodes)][None, :]
        f = kernels.permutation_sum(kernels.ANCHORED, pts, perms, (t, x0, 0.0)) / len(perms)
        wt = float(np.prod(qw[list(nodes)])) * h**n
        err += wt * (f - F) ** 2
        ref += wt * f**2
    mult = _multiplicity(idx)
    e2, r2 = float(mult @ err), float(mult @ ref)
    return math.sqrt(e2), math.sqrt(e2 / r2) if r2 > 0 else 0.0


# -- exact discrete inner products ----------------------------------------------------


def discrete_inner(f: ChaosCoefficients, g: ChaosCoefficients, grid: NoiseGrid) -> float:
    """``<f~, g~>`` in the noise inner product (Gram matrix per slot); dense evaluation."""
    if f.order != g.order:
        return 0.0
    n = f.order
    a, b = f.to_dense(), g.to_dense()
    for _ in range(n):
        b = np.tensordot(b, grid.gram, axes=([0], [0]))
    return float(np.sum(a * b))


def tensor_inner(a: np.ndarray, b: np.ndarray, gram: np.ndarray) -> float:
    """``<a, b>`` for dense (not necessarily symmetric) tensors with ``gram`` in every slot."""
    for _ in range(b.ndim):
        b = np.tensordot(b, gram, axes=([0], [0]))
    return float(np.sum(a * b))


def symmetrize_tensor(a: np.ndarray) -> np.ndarray:
    """Average of ``a`` over all permutations of its axes."""
    perms = list(itertools.permutations(range(a.ndim)))
    return sum(np.transpose(a, p) for p in perms) / len(perms)


def sparse_inner(f: ChaosCoefficients, g: ChaosCoefficients, grid: NoiseGrid) -> float:
    """Same as :func:`discrete_inner` for orders up to 2 without forming ``K^n`` arrays."""
    if f.order != g.order:
        return 0.0
    C = grid.gram
    if f.order == 1:
        return float(f.values @ C[f.indices[:, 0]][:, g.indices[:, 0]] @ g.values)
    if f.order == 2:
        def dense2(c):
            m = np.zeros((c.size, c.size))
            m[c.indices[:, 0], c.indices[:, 1]] = c.values
            m[c.indices[:, 1], c.indices[:, 0]] = c.values
            return m
        return float(np.sum(dense2(f) * (C @ dense2(g) @ C)))
    return discrete_inner(f, g, grid)


# -- Wick evaluation ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WickForm:
    """Polynomial in ``X`` as monomial groups ``(indices, coefficients)`` of decreasing degree."""

    terms: tuple

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape[0])
        for idx, coef in self.terms:
            out += kernels.monomial_sum(x, idx, coef)
        return out


def _expand(c: ChaosCoefficients):
    """All index permutations with the symmetric values (full tensor support)."""
    rows, vals = [], []
    for perm in itertools.permutations(range(c.order)):
        rows.append(c.indices[:, list(perm)])
        vals.append(c.values)
    idx = np.concatenate(rows)
    val = np.concatenate(vals)
    uniq, pos = np.unique(idx, axis=0, return_index=True)
    return uniq, val[pos]


def _contract_pair(c: ChaosCoefficients, gram: np.ndarray) -> ChaosCoefficients:
    """``G_{i_1..i_{n-2}} = sum_{a,b} F_{i_1..i_{n-2} a b} C_{ab}`` (symmetric)."""
    idx, val = _expand(c)
    w = val * gram[idx[:, -2], idx[:, -1]]
    rest = idx[:, :-2]
    m = c.order - 2
    if m == 0:
        return ChaosCoefficients(0, np.zeros((1, 0), dtype=np.int64), np.array([w.sum()]), c.size)
    # summing over full-support entries produces the full-tensor value at each ordered rest index
    uniq, inv = np.unique(rest, axis=0, return_inverse=True)
    summed = np.zeros(uniq.shape[0])
    np.add.at(summed, inv.ravel(), w)
    srt = np.sort(uniq, axis=1)
    is_sorted = np.all(uniq == srt, axis=1)
    return ChaosCoefficients(m, uniq[is_sorted], summed[is_sorted], c.size)


def wick_form(c: ChaosCoefficients, grid: NoiseGrid) -> WickForm:
    """``I_n(F)`` as a polynomial in ``X = W(1_cells)``.

    ``I_n(F) = sum_k (-1)^k n! / (k! 2^k (n-2k)!) <F contracted k times with C, X^(n-2k)>``.
    """
    n = c.order
    terms = []
    cur = c
    for k in range(n // 2 + 1):
        coef = (-1) ** k * math.factorial(n) / (math.factorial(k) * 2**k * math.factorial(n - 2 * k))
        if cur.indices.shape[0]:
            if cur.order == 0:
                terms.append((np.zeros((1, 0), dtype=np.int64), np.array([coef * cur.values.sum()])))
            else:
                terms.append((cur.indices, coef * cur.values * _multiplicity(cur.indices)))
        if k < n // 2:
            cur = _contract_pair(cur, grid.gram)
    return WickForm(tuple(terms))


def isserlis_expectation(p: WickForm, q: WickForm, gram: np.ndarray) -> float:
    """Exact ``E[p(X) q(X)]`` for centred Gaussian ``X`` with covariance ``gram``.

    Expands both forms into monomials and sums hafnians (Isserlis' theorem).
    """
    total = 0.0
    for ia, ca in p.terms:
        for ib, cb in q.terms:
            deg = ia.shape[1] + ib.shape[1]
            if deg % 2:
                continue
            if deg == 0:
                total += float(ca.sum() * cb.sum())
                continue
            pairings = list(_pairings(list(range(deg))))
            joint_a = np.repeat(ia, ib.shape[0], axis=0)
            joint_b = np.tile(ib, (ia.shape[0], 1))
            joint = np.concatenate([joint_a, joint_b], axis=1)
            weight = np.repeat(ca, ib.shape[0]) * np.tile(cb, ia.shape[0])
            haf = np.zeros(joint.shape[0])
            for pr in pairings:
                prod = np.ones(joint.shape[0])
                for a, b in pr:
                    prod *= gram[joint[:, a], joint[:, b]]
                haf += prod
            total += float(np.sum(weight * haf))
    return total


def _pairings(items):
    if not items:
        yield []
        return
    a = items[0]
    for i in range(1, len(items)):
        b = items[i]
        rest = items[1:i] + items[i + 1:]
        for p in _pairings(rest):
            yield [(a, b)] + p


# -- orthonormal (Hermite) evaluation ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HermiteForm:
    """``sum_e coef[e] prod He_{m}(zeta_i)`` over sorted multi-indices in orthonormal coordinates."""

    order: int
    indices: np.ndarray
    coef: np.ndarray

    def evaluate(self, zeta: np.ndarray) -> np.ndarray:
        if self.order == 0:
            return np.full(zeta.shape[0], self.coef.sum())
        return kernels.hermite_sum(zeta, self.indices, self.coef)


def to_orthonormal(c: ChaosCoefficients, grid: NoiseGrid, tol: float = 0.0) -> HermiteForm:
    """Coefficients ``b = F x_slot A`` in the orthonormal coordinates, as a Hermite form.

    Uses the dense tensor, so only small grids are supported.
    """
    b = c.to_dense() if c.order else np.array(c.values.sum())
    for _ in range(c.order):
        b = np.tensordot(b, grid.factor, axes=([0], [0]))
    n = c.order
    if n == 0:
        return HermiteForm(0, np.zeros((1, 0), dtype=np.int64), np.array([float(b)]))
    idx = np.array(list(itertools.combinations_with_replacement(range(grid.size), n)), dtype=np.int64)
    vals = b[tuple(idx.T)]
    keep = np.abs(vals) > tol
    idx, vals = idx[keep], vals[keep]
    return HermiteForm(n, idx, vals * _multiplicity(idx))


def _hermite_moment_table(max_deg: int) -> np.ndarray:
    """``E[He_a(Z) He_b(Z)]`` by Gauss-Hermite quadrature, exact for these degrees."""
    x, w = special.roots_hermitenorm(max_deg + 2)
    w = w / w.sum()
    he = [np.ones_like(x), x]
    for q in range(1, max_deg):
        he.append(x * he[q] - q * he[q - 1])
    he = np.array(he[: max_deg + 1])
    return (he * w) @ he.T


def hermite_expectation(p: HermiteForm, q: HermiteForm) -> float:
    """Exact ``E[p(zeta) q(zeta)]`` by factorising over coordinates."""
    max_deg = max(p.order, q.order, 1)
    table = _hermite_moment_table(max_deg)

    def runs(idx):
        out = []
        for row in idx:
            d = {}
            for v in row:
                d[int(v)] = d.get(int(v), 0) + 1
            out.append(d)
        return out

    ra, rb = runs(p.indices), runs(q.indices)
    total = 0.0
    for ca, da in zip(p.coef, ra):
        for cb, db in zip(q.coef, rb):
            prod = 1.0
            for k in set(da) | set(db):
                prod *= table[da.get(k, 0), db.get(k, 0)]
                if prod == 0.0:
                    break
            total += ca * cb * prod
    return float(total)


# -- sampling ------------------------------------------------------------------------------


def draw_gaussians(grid: NoiseGrid, count: int, rng=None) -> np.ndarray:
    """Standard normal coordinates, one row per sample, from the counter-based stream."""
    stream = as_stream(rng)
    return stream.collect(count, lambda gen, size: gen.standard_normal((size, grid.size)))


def evaluate_chaos(c: ChaosCoefficients, grid: NoiseGrid, zeta: np.ndarray, form: WickForm | None = None) -> np.ndarray:
    """``I_n(F)`` per sample row of ``zeta``."""
    form = wick_form(c, grid) if form is None else form
    return form.evaluate(zeta @ grid.factor.T)


@dataclass(frozen=True, eq=False)
class SolutionSample:
    """Truncated-chaos solution on an ``x`` grid, one row per sample."""

    gaussians: np.ndarray
    x_points: np.ndarray
    values: np.ndarray
    chaos_values: dict

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)


def sample_solution(grid: NoiseGrid, coeffs_by_order: dict, x_points, count: int = 1000, rng=None, zeta=None) -> SolutionSample:
    """Evaluate ``u_N(t, x) = 1 + sum_n I_n(F_n(x))`` on ``x_points``.

    ``coeffs_by_order[n]`` is a list with one coefficient set per ``x`` point.
    """
    x_points = np.asarray(x_points, dtype=float)
    zeta = draw_gaussians(grid, count, rng) if zeta is None else zeta
    X = zeta @ grid.factor.T
    vals = np.ones((zeta.shape[0], len(x_points)))
    per = {}
    for n, lst in sorted(coeffs_by_order.items()):
        if len(lst) != len(x_points):
            raise ValueError("need one coefficient set per x point")
        block = np.empty_like(vals)
        for j, c in enumerate(lst):
            block[:, j] = wick_form(c, grid).evaluate(X)
        per[n] = block
        vals += block
    return SolutionSample(zeta, x_points, vals, per)


def spatial_integral(sample: SolutionSample, R: float, weights=None, half_width: float | None = None) -> np.ndarray:
    """``int_{B_R} (u_N - 1) dx`` by the ``x``-grid quadrature ``weights`` restricted to ``|x| <= R``."""
    x = sample.x_points
    if half_width is not None and R > half_width:
        raise ValueError("radius exceeds the grid domain")
    if weights is None:
        if x.size < 2:
            raise ValueError("need quadrature weights")
        weights = np.full(x.size, x[1] - x[0])
    weights = np.asarray(weights, dtype=float)
    inside = np.abs(x) <= R
    return (sample.values[:, inside] - 1.0) @ weights[inside]


# -- Malliavin derivatives -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MalliavinSample:
    z: tuple
    values: np.ndarray
    mean: float
    l2_exact: float


def _derivative_parts(coeffs_by_order: dict, cells):
    k = len(cells)
    parts = {}
    for n, c in coeffs_by_order.items():
        if n < k:
            continue
        sl = c.slice(cells)
        parts[n] = (math.perm(n, k), sl)
    return parts


def _chaos_norm_sq(c: ChaosCoefficients, grid: NoiseGrid) -> float:
    if c.order == 0:
        return float(c.values.sum() ** 2)
    if c.order <= 2:
        return sparse_inner(c, c, grid)
    return discrete_inner(c, c, grid)


def malliavin_derivative(coeffs_by_order: dict, grid: NoiseGrid, z, zeta=None) -> MalliavinSample:
    """``D_z u_N = sum_n n I_{n-1}(F_n(., cell(z)))`` on the discrete structure.

    Coefficients are cell averages, so fixing the slot at ``z``'s cell is the
    derivative of the piecewise constant kernel at ``z``.  Returns per-sample
    values when ``zeta`` is given and always the exact mean and ``L^2`` norm.
    """
    cell = grid.cell_index(z)
    parts = _derivative_parts(coeffs_by_order, [cell])
    mean = 0.0
    l2 = 0.0
    values = None if zeta is None else np.zeros(zeta.shape[0])
    X = None if zeta is None else zeta @ grid.factor.T
    for n, (mult, sl) in parts.items():
        if sl.order == 0:
            v = float(sl.values.sum())
            mean += mult * v
            l2 += (mult * v) ** 2
            if values is not None:
                values += mult * v
            continue
        l2 += mult**2 * math.factorial(sl.order) * _chaos_norm_sq(sl, grid)
        if values is not None and sl.indices.shape[0]:
            values += mult * wick_form(sl, grid).evaluate(X)
    return MalliavinSample(tuple(np.atleast_1d(z)), values, mean, math.sqrt(l2))


def second_derivative_l2(coeffs_by_order: dict, grid: NoiseGrid, w, z) -> tuple[float, float]:
    """Mean and ``L^2`` norm of ``D^2_{w,z} u_N = sum_n n(n-1) I_{n-2}(F_n(., cell(w), cell(z)))``."""
    parts = _derivative_parts(coeffs_by_order, [grid.cell_index(w), grid.cell_index(z)])
    mean = 0.0
    l2 = 0.0
    for n, (mult, sl) in parts.items():
        if sl.order == 0:
            v = float(sl.values.sum())
            mean += mult * v
            l2 += (mult * v) ** 2
        else:
            l2 += mult**2 * math.factorial(sl.order) * _chaos_norm_sq(sl, grid)
    return mean, math.sqrt(l2)


def symmetrized_second_kernel(w: float, z: float, x: float, t: float) -> float:
    """``f~_2(w, z, x; t) = (f_2(w, z, x; t) + f_2(z, w, x; t)) / 2`` in one dimension."""
    k = ChaosKernel(2, t, (x,))
    from .chaos import f_closed_form

    return 0.5 * float(f_closed_form(k, [w, z]) + f_closed_form(k, [z, w]))


@dataclass(frozen=True)
class DerivativeBoundReport:
    ratios: np.ndarray
    max_ratio: float
    min_ratio: float
    fitted_constant: float


def second_derivative_bound_check(coeffs_by_order: dict, grid: NoiseGrid, w_points, z_points, t: float, x: float) -> DerivativeBoundReport:
    """Ratios ``||D^2_{w,z} u_N||_2 / f~_2(w, z, x; t)`` over a grid of ``(w, z)``.

    Pairs where the symmetrised kernel vanishes are reported as ``nan`` (and
    must then have a vanishing derivative up to rounding).
    """
    if max(coeffs_by_order) < 2:
        raise ValueError("need chaos orders up to at least 2")
    ratios = np.full((len(w_points), len(z_points)), np.nan)
    for i, w in enumerate(w_points):
        for j, z in enumerate(z_points):
            _, l2 = second_derivative_l2(coeffs_by_order, grid, w, z)
            ref = symmetrized_second_kernel(w, z, x, t)
            if ref > 0:
                ratios[i, j] = l2 / ref
            elif l2 > 1e-12:
                ratios[i, j] = np.inf
    finite = ratios[np.isfinite(ratios)]
    mx = float(finite.max()) if finite.size else 0.0
    mn = float(finite.min()) if finite.size else 0.0
    return DerivativeBoundReport(ratios, mx, mn, mx)


# -- spatial averages over balls -----------------------------------------------------------


def ball_average_samples(grid: NoiseGrid, radii, times, n_sim: int, zeta: np.ndarray, quad_order: int = 2) -> dict:
    """``F_R(t) = sum_{n <= n_sim} I_n(g_{n,R}(.; t))`` per sample, keyed by ``(R, t)``.

    The ball integral is taken exactly inside the kernel, so no ``x`` grid is
    involved.  All entries share the Gaussian draws ``zeta``.
    """
    X = zeta @ grid.factor.T
    out = {}
    for R in radii:
        for t in times:
            acc = np.zeros(zeta.shape[0])
            for n in range(1, n_sim + 1):
                c = project_ball_kernel(n, t, R, grid, quad_order)
                if c.indices.shape[0]:
                    acc += wick_form(c, grid).evaluate(X)
            out[(float(R), float(t))] = acc
    return out


def discrete_covariance(grid: NoiseGrid, R: float, t: float, s: float, orders=(1, 2), quad_order: int = 2) -> float:
    """Exact ``E[F_R(t) F_R(s)]`` of the discrete model restricted to the given chaos orders (at most 2)."""
    total = 0.0
    for n in orders:
        if n > 2:
            raise ValueError("exact discrete covariance is available for orders 1 and 2")
        a = project_ball_kernel(n, t, R, grid, quad_order)
        b = project_ball_kernel(n, s, R, grid, quad_order)
        total += math.factorial(n) * sparse_inner(a, b, grid)
    return total
