"""Univariate B-spline spaces on [0, 1] with uniform inner knots.

A space S(p, r, k) has degree ``p``, ``k`` equally spaced inner knots
``tau_j = j / (k + 1)`` of multiplicity ``p - r`` each, and an open knot
vector. Besides evaluation, the module offers exact conversions between such
spaces (``represent`` / ``multiply_embed``) and the three transversal
profile splines M0, M1, M2 used to build functions across an interface.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
import scipy.linalg
from numpy.polynomial import Polynomial

from .errors import InvalidParameterError, OutOfDomainError, RepresentationError

#: absolute threshold used to decide polynomial degrees
POLY_TOL = 1e-14


@dataclass(frozen=True)
class SplineSpace1D:
    """Spline space of degree ``p``, inner regularity ``C^r`` and ``k`` inner knots."""

    p: int
    r: int
    k: int

    @property
    def h(self) -> float:
        return 1.0 / (self.k + 1)

    @property
    def dim(self) -> int:
        return self.p + self.k * (self.p - self.r) + 1

    @functools.cached_property
    def knots(self) -> np.ndarray:
        inner = [float(Fraction(j, self.k + 1)) for j in range(1, self.k + 1)]
        mult = self.p - self.r
        kv = [0.0] * (self.p + 1)
        for t in inner:
            kv += [t] * mult
        kv += [1.0] * (self.p + 1)
        return np.array(kv)

    @functools.cached_property
    def greville(self) -> np.ndarray:
        p, kv = self.p, self.knots
        if p == 0:
            g = 0.5 * (kv[:-1] + kv[1:])
        else:
            g = np.array([kv[i + 1:i + p + 1].mean() for i in range(self.dim)])
        # Greville points only collide for knots of multiplicity > p
        for i in range(1, len(g)):
            if g[i] <= g[i - 1]:
                g[i] = g[i - 1] + self.h * 1e-6
        return g

    def __repr__(self):
        return f"SplineSpace1D(p={self.p}, r={self.r}, k={self.k})"


def make_space(p: int, r: int, k: int, strict: bool = True) -> SplineSpace1D:
    """Create the space S(p, r, k).

    With ``strict`` the restrictions of the main discretization spaces apply
    (``p >= 5`` and ``2 <= r <= p - 3`` when ``k >= 1``). Auxiliary spaces,
    e.g. the trace spaces of reduced degree, are created with
    ``strict=False`` which only requires ``-1 <= r <= p - 1``.
    """
    if k < 0:
        raise InvalidParameterError(f"number of inner knots must be >= 0, got {k}")
    if p < 0:
        raise InvalidParameterError(f"degree must be >= 0, got {p}")
    if strict:
        if p < 5:
            raise InvalidParameterError(f"degree p={p} < 5 is not supported")
        if k >= 1 and not (2 <= r <= p - 3):
            raise InvalidParameterError(f"regularity r={r} outside [2, p-3] for p={p}")
    elif k >= 1 and not (-1 <= r <= p - 1):
        raise InvalidParameterError(f"regularity r={r} outside [-1, p-1] for p={p}")
    return SplineSpace1D(int(p), int(r), int(k))


def find_spans(space: SplineSpace1D, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    spans = np.searchsorted(space.knots, xs, side="right") - 1
    return np.clip(spans, space.p, space.dim - 1)


def basis_ders(space: SplineSpace1D, xs, nd: int, spans=None):
    """Values and derivatives of the ``p + 1`` nonzero B-splines at each point.

    Returns ``(spans, ders)`` where ``ders[q, d, a]`` is the ``d``-th
    derivative of ``N_{spans[q] - p + a}`` at ``xs[q]``. Derivatives at inner
    knots are taken from the right (from the left at ``x = 1``).
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    p, kv = space.p, space.knots
    if spans is None:
        spans = find_spans(space, xs)
    n = len(xs)
    ndu = np.zeros((n, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((n, p + 1))
    right = np.zeros((n, p + 1))
    for j in range(1, p + 1):
        left[:, j] = xs - kv[spans + 1 - j]
        right[:, j] = kv[spans + j] - xs
        saved = np.zeros(n)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((n, nd + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    a = np.zeros((n, 2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:] = 0.0
        a[:, 0, 0] = 1.0
        for kk in range(1, min(nd, p) + 1):
            d = np.zeros(n)
            rk, pk = r - kk, p - kk
            if r >= kk:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d += a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = kk - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d += a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, kk] = -a[:, s1, kk - 1] / ndu[:, pk + 1, r]
                d += a[:, s2, kk] * ndu[:, r, pk]
            ders[:, kk, r] = d
            s1, s2 = s2, s1
    fac = p
    for kk in range(1, min(nd, p) + 1):
        ders[:, kk, :] *= fac
        fac *= p - kk
    return spans, ders


def eval_all(space: SplineSpace1D, xi: float, max_deriv: int = 0) -> np.ndarray:
    """Table ``T[d, i]`` of ``N_i^{(d)}(xi)`` for all ``i`` and ``d <= max_deriv``."""
    if not (0.0 <= xi <= 1.0):
        raise OutOfDomainError(f"parameter {xi} outside [0, 1]")
    if max_deriv > space.p:
        raise InvalidParameterError("max_deriv exceeds the degree")
    spans, ders = basis_ders(space, [xi], max_deriv)
    out = np.zeros((max_deriv + 1, space.dim))
    s = spans[0]
    out[:, s - space.p:s + 1] = ders[0]
    return out


def collocation_matrix(space: SplineSpace1D, xs, deriv: int = 0) -> np.ndarray:
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    spans, ders = basis_ders(space, xs, deriv)
    out = np.zeros((len(xs), space.dim))
    for q in range(len(xs)):
        out[q, spans[q] - space.p:spans[q] + 1] = ders[q, deriv]
    return out


class SplineVector1D:
    """A spline function given by its B-spline coefficients in ``space``."""

    def __init__(self, space: SplineSpace1D, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.dim,):
            raise InvalidParameterError(
                f"expected {space.dim} coefficients, got shape {coeffs.shape}")
        self.space = space
        self.coeffs = coeffs

    def __call__(self, xs, deriv: int = 0):
        xs = np.asarray(xs, dtype=float)
        flat = np.atleast_1d(xs).ravel()
        if deriv > self.space.p:
            return np.zeros_like(xs)
        spans, ders = basis_ders(self.space, flat, deriv)
        idx = spans[:, None] - self.space.p + np.arange(self.space.p + 1)
        vals = np.einsum("qa,qa->q", ders[:, deriv, :], self.coeffs[idx])
        return vals.reshape(xs.shape) if xs.ndim else vals[0]

    def __repr__(self):
        return f"SplineVector1D({self.space!r}, {self.coeffs!r})"


def unit(space: SplineSpace1D, j: int) -> SplineVector1D:
    """The B-spline ``N_j`` of ``space`` as a coefficient vector."""
    c = np.zeros(space.dim)
    c[j] = 1.0
    return SplineVector1D(space, c)


def derivative(f: SplineVector1D) -> SplineVector1D:
    """Exact derivative, as an element of the space S(p - 1, r - 1, k)."""
    sp = f.space
    p, kv, c = sp.p, sp.knots, f.coeffs
    dsp = make_space(p - 1, sp.r - 1, sp.k, strict=False)
    denom = kv[p + 1:p + sp.dim] - kv[1:sp.dim]
    dc = p * (c[1:] - c[:-1]) / denom
    return SplineVector1D(dsp, dc)


@functools.lru_cache(maxsize=128)
def _greville_lu(space: SplineSpace1D):
    A = collocation_matrix(space, space.greville)
    lu = scipy.linalg.lu_factor(A)
    if np.min(np.abs(np.diag(lu[0]))) < 1e-13:
        raise RepresentationError(f"singular collocation matrix for {space!r}")
    return lu


def _check_points(space: SplineSpace1D) -> np.ndarray:
    g = space.greville
    return np.concatenate([0.5 * (g[:-1] + g[1:]), [0.0, 1.0]])


def represent(target: SplineSpace1D, f: Callable, *, check: bool = True) -> SplineVector1D:
    """Coefficients of ``f`` in ``target`` by interpolation at the Greville abscissae.

    ``f`` maps an array of parameters to an array of values and must lie in
    ``target``; with ``check`` this is verified at points between the
    collocation points and a :class:`RepresentationError` is raised otherwise.
    """
    func = f
    g = target.greville
    vals = np.asarray(func(g), dtype=float)
    coeffs = scipy.linalg.lu_solve(_greville_lu(target), vals)
    out = SplineVector1D(target, coeffs)
    if check:
        xs = _check_points(target)
        ref = np.asarray(func(xs), dtype=float)
        scale = max(np.max(np.abs(vals)), np.max(np.abs(ref)), 1e-300)
        err = np.max(np.abs(out(xs) - ref))
        if err > 1e-9 * scale:
            raise RepresentationError(
                f"function is not an element of {target!r} (deviation {err:.3e})")
    return out


def poly_degree(q: Polynomial, tol: float = POLY_TOL) -> int:
    """Degree after stripping trailing coefficients with ``|c| < tol``."""
    c = np.asarray(q.coef, dtype=float)
    nz = np.nonzero(np.abs(c) >= tol)[0]
    return int(nz[-1]) if len(nz) else 0


def multiply_embed(f: SplineVector1D, q: Polynomial, target: SplineSpace1D) -> SplineVector1D:
    """Coefficients of the product ``q * f`` in the finer/higher-degree space ``target``."""
    sp = f.space
    deg = poly_degree(q)
    if sp.p + deg > target.p:
        raise InvalidParameterError(
            f"product degree {sp.p}+{deg} exceeds target degree {target.p}")
    if sp.k != target.k:
        raise InvalidParameterError("source and target spaces have different inner knots")
    if sp.r < target.r:
        raise InvalidParameterError(
            f"source regularity {sp.r} lower than target regularity {target.r}")
    return represent(target, lambda x: q(x) * f(x))


def m_functions(space: SplineSpace1D):
    """The profiles M0, M1, M2 with ``M_i^{(j)}(0) = delta_ij`` for ``i, j <= 2``."""
    p, h, n = space.p, space.h, space.dim
    if n < 3:
        raise InvalidParameterError("space too small for transversal profiles")
    m0, m1, m2 = np.zeros(n), np.zeros(n), np.zeros(n)
    m0[:3] = 1.0
    m1[1], m1[2] = h / p, 2.0 * h / p
    m2[2] = h * h / (p * (p - 1))
    return SplineVector1D(space, m0), SplineVector1D(space, m1), SplineVector1D(space, m2)
