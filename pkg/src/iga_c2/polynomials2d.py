"""Exact bivariate polynomials for manufactured solutions.

Coefficients are kept as :class:`fractions.Fraction` whenever the input is
exact, so that the sixth derivatives of the degree-18 test solutions carry
no cancellation error. Floating point only enters at evaluation time.
"""
from __future__ import annotations

import functools
from fractions import Fraction
from numbers import Number

import numpy as np

from .errors import InvalidParameterError


class Polynomial2D:
    """Polynomial in ``x1, x2`` stored as ``{(i, j): c}`` for the monomial ``x1**i * x2**j``."""

    def __init__(self, coeffs=None):
        out = {}
        for key, c in (coeffs or {}).items():
            if isinstance(c, float) and abs(c) < 1e-300:
                continue
            if c == 0:
                continue
            out[(int(key[0]), int(key[1]))] = c
        self.coeffs = out

    @classmethod
    def constant(cls, c):
        return cls({(0, 0): c})

    @classmethod
    def affine(cls, c0, c1, c2):
        """The polynomial ``c0 + c1 * x1 + c2 * x2``."""
        return cls({(0, 0): c0, (1, 0): c1, (0, 1): c2})

    @property
    def degree(self) -> int:
        return max((i + j for i, j in self.coeffs), default=0)

    def __add__(self, other):
        if isinstance(other, Number):
            other = Polynomial2D.constant(other)
        out = dict(self.coeffs)
        for key, c in other.coeffs.items():
            out[key] = out.get(key, 0) + c
        return Polynomial2D(out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial2D({k: -c for k, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            return Polynomial2D({k: c * other for k, c in self.coeffs.items()})
        out = {}
        for (i1, j1), a in self.coeffs.items():
            for (i2, j2), b in other.coeffs.items():
                key = (i1 + i2, j1 + j2)
                out[key] = out.get(key, 0) + a * b
        return Polynomial2D(out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = Polynomial2D.constant(1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial2D):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __repr__(self):
        terms = " + ".join(f"{c}*x1^{i}*x2^{j}" for (i, j), c in sorted(self.coeffs.items()))
        return f"Polynomial2D({terms or '0'})"

    @functools.cached_property
    def _dense(self) -> np.ndarray:
        n = self.degree + 1
        arr = np.zeros((n, n))
        for (i, j), c in self.coeffs.items():
            arr[i, j] = float(c)
        return arr

    def __call__(self, x1, x2):
        return np.polynomial.polynomial.polyval2d(
            np.asarray(x1, dtype=float), np.asarray(x2, dtype=float), self._dense)

    def translate(self, a1, a2) -> "Polynomial2D":
        """The polynomial ``x -> self(x - a)``."""
        y1 = Polynomial2D.affine(-a1, 1, 0)
        y2 = Polynomial2D.affine(-a2, 0, 1)
        out = Polynomial2D()
        for (i, j), c in self.coeffs.items():
            out = out + (y1 ** i) * (y2 ** j) * c
        return out


def differentiate(p: Polynomial2D, axis: int) -> Polynomial2D:
    """Exact partial derivative with respect to ``x1`` (axis 1) or ``x2`` (axis 2)."""
    if axis not in (1, 2):
        raise InvalidParameterError(f"axis must be 1 or 2, got {axis}")
    out = {}
    for (i, j), c in p.coeffs.items():
        if axis == 1 and i > 0:
            out[(i - 1, j)] = c * i
        elif axis == 2 and j > 0:
            out[(i, j - 1)] = c * j
    return Polynomial2D(out)


def partial(p: Polynomial2D, n1: int, n2: int) -> Polynomial2D:
    for _ in range(n1):
        p = differentiate(p, 1)
    for _ in range(n2):
        p = differentiate(p, 2)
    return p


def laplacian(p: Polynomial2D) -> Polynomial2D:
    return partial(p, 2, 0) + partial(p, 0, 2)


def triharmonic_rhs(u: Polynomial2D) -> Polynomial2D:
    """Right-hand side ``f = -Laplace^3 u``."""
    return -laplacian(laplacian(laplacian(u)))


F = Fraction


def _line(c0, c1, c2):
    return Polynomial2D.affine(F(c0), F(c1), F(c2))


def _solution_factors(sid: str):
    """Scale and affine factors; the solution is ``(scale * prod(factors))**3``."""
    if sid == "a":
        return F(1, 20), [
            _line(0, 0, 1),
            _line(0, F(12, 13), -1),
            _line(F(120, 7), F(-12, 7), -1),
        ]
    if sid == "b":
        return F(1, 20000), [
            _line(F(121, 15), F(8, 15), -1),
            _line(0, F(7, 2), 1),
            _line(0, 0, 1),
            _line(F(52, 3), F(-13, 6), 1),
            _line(F(31, 2), F(-9, 11), -1),
        ]
    if sid == "c":
        return F(1, 200000), [
            _line(F(55, 2), F(-5, 2), -1),
            _line(F(1799, 160), F(-7, 64), -1),
            _line(F(652, 61), F(78, 61), -1),
            _line(0, F(-18, 11), -1),
            _line(0, 0, 1),
            _line(-10, F(5, 3), -1),
        ]
    if sid == "d":
        return F(1, 20000), [
            _line(0, 0, 1),
            _line(F(405, 8), F(-27, 8), -1),
            _line(F(425, 38), F(4, 19), -1),
            _line(0, F(23, 3), -1),
        ]
    if sid == "box":
        # [0, 2] x [0, 1], the two-unit-square test domain; the last factor is
        # positive there and lifts the degree per variable to 9
        return F(1, 8), [_line(0, 1, 0), _line(2, -1, 0), _line(0, 0, 1), _line(1, 0, -1),
                         _line(3, 1, 2)]
    raise InvalidParameterError(f"unknown builtin solution {sid!r}")


BUILTIN_IDS = ("a", "b", "c", "d", "box")


def builtin_solution(sid: str) -> Polynomial2D:
    """Exact expansion of one of the manufactured solutions.

    ``"a"``, ``"b"``, ``"c"`` belong to the triangular, pentagonal and
    hexagonal test domains, ``"d"`` to the five-patch domain, and ``"box"``
    is ``(x1 (2 - x1) x2 (1 - x2) (3 + x1 + 2 x2) / 8)**3`` on the two-unit-square
    domain.
    """
    scale, factors = _solution_factors(sid)
    prod = Polynomial2D.constant(scale)
    for fac in factors:
        prod = prod * fac
    return prod ** 3


def solution_boundary_lines(sid: str):
    """Affine factors ``(c0, c1, c2)`` whose zero lines bound the solution's domain."""
    _, factors = _solution_factors(sid)
    if sid == "box":
        factors = factors[:4]
    return [(fac.coeffs.get((0, 0), 0), fac.coeffs.get((1, 0), 0), fac.coeffs.get((0, 1), 0))
            for fac in factors]
