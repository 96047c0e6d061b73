"""Gluing data of an interface and the G^2 (C^2) conditions across it.

All quantities are univariate polynomials in the interface parameter of a
:class:`~iga_c2.multipatch.Frame`; ``minus`` and ``plus`` refer to the two
sides of the frame (negative and positive edge determinant).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .bspline import POLY_TOL, SplineSpace1D, collocation_matrix, poly_degree
from .errors import InvalidInterfaceError
from .multipatch import Frame, MultiPatchDomain


@dataclass(frozen=True)
class InterfaceGluing:
    alpha_bar_minus: Polynomial
    alpha_bar_plus: Polynomial
    beta_bar: Polynomial
    beta_minus: Polynomial
    beta_plus: Polynomial
    gamma1: float
    gamma2: float = 1.0

    @property
    def alpha_minus(self) -> Polynomial:
        return self.gamma1 * self.alpha_bar_minus

    @property
    def alpha_plus(self) -> Polynomial:
        return self.gamma1 * self.alpha_bar_plus

    @property
    def alpha_hat_minus(self) -> Polynomial:
        return self.gamma2 * self.alpha_bar_minus

    @property
    def alpha_hat_plus(self) -> Polynomial:
        return self.gamma2 * self.alpha_bar_plus

    @property
    def beta(self) -> Polynomial:
        return self.gamma1 * self.beta_bar

    @property
    def d_alpha(self) -> int:
        return max(poly_degree(self.alpha_minus), poly_degree(self.alpha_plus))

    def alpha(self, side: str) -> Polynomial:
        return self.alpha_minus if side == "minus" else self.alpha_plus

    def beta_side(self, side: str) -> Polynomial:
        return self.beta_minus if side == "minus" else self.beta_plus

    # The transversal weights carry gamma1**2, matching the scaling of w by
    # alpha**2; with the cube of gamma1 pulled-back C^2 functions fail the
    # condition unless gamma1 = 1.
    @property
    def eta(self) -> Polynomial:
        return 2 * self.gamma2 * self.alpha_minus.deriv() * self.alpha_plus * self.beta / self.gamma1

    @property
    def theta(self) -> Polynomial:
        am, bm = self.alpha_minus, self.beta_minus
        return (2 * self.gamma2 * (am * bm.deriv() - am.deriv() * bm) * self.alpha_plus
                * self.beta / self.gamma1)


def _edge_data(view):
    """``D_{s1} F(0, t) = a + b t`` and the constant edge tangent ``e = D_{s2} F(0, t)``."""
    a = view.c10 - view.c00
    b = view.twist
    e = view.c01 - view.c00
    return a, b, e


def _cross(u, v):
    return u[0] * v[1] - u[1] * v[0]


def _side_polys(a, b, e):
    alpha_bar = Polynomial([_cross(a, e), _cross(b, e)])
    beta = Polynomial([a @ e, b @ e]) / (e @ e)
    return alpha_bar, beta


def optimal_gamma1(alpha_bar_minus: Polynomial, alpha_bar_plus: Polynomial) -> float:
    """Constant minimizing ``||g a_minus + 1||^2 + ||g a_plus - 1||^2`` on [0, 1]."""
    num = (alpha_bar_plus - alpha_bar_minus).integ()
    den = (alpha_bar_minus ** 2 + alpha_bar_plus ** 2).integ()
    return float((num(1.0) - num(0.0)) / (den(1.0) - den(0.0)))


def gamma_objective(glu: InterfaceGluing, gamma1: float) -> float:
    q = (gamma1 * glu.alpha_bar_minus + 1) ** 2 + (gamma1 * glu.alpha_bar_plus - 1) ** 2
    Q = q.integ()
    return float(Q(1.0) - Q(0.0))


def frame_gluing(domain: MultiPatchDomain, frame: Frame) -> InterfaceGluing:
    """Gluing data of a two-sided frame.

    One-sided frames (boundary edges of a vertex fan) get the uncoupled data
    ``alpha = -1 / +1`` and ``beta = 0``.
    """
    if frame.minus is None or frame.plus is None:
        one = Polynomial([1.0])
        zero = Polynomial([0.0])
        return InterfaceGluing(-one, one, zero, zero, zero, 1.0)
    vm = domain.patches[frame.minus].view(frame.minus_sym)
    vp = domain.patches[frame.plus].view(frame.plus_sym)
    am, bm, em = _edge_data(vm)
    ap, bp, ep = _edge_data(vp)
    if np.linalg.norm(em - ep) > 1e-9 * np.linalg.norm(em):
        raise InvalidInterfaceError("interface curves of the two sides do not coincide")
    abar_m, beta_m = _side_polys(am, bm, em)
    abar_p, beta_p = _side_polys(ap, bp, ep)
    for poly, sign, name in ((abar_m, -1, "minus"), (abar_p, 1, "plus")):
        ends = sign * np.array([poly(0.0), poly(1.0)])
        if np.any(ends <= 0):
            raise InvalidInterfaceError(f"alpha_bar on the {name} side changes sign or vanishes")
    beta_bar = Polynomial([
        _cross(am, ap),
        _cross(am, bp) + _cross(bm, ap),
        _cross(bm, bp),
    ])
    return InterfaceGluing(abar_m, abar_p, beta_bar, beta_m, beta_p,
                           optimal_gamma1(abar_m, abar_p))


def gluing_data(domain: MultiPatchDomain, s: int) -> InterfaceGluing:
    """Gluing data of interface ``s`` in its canonical frame."""
    return frame_gluing(domain, domain.interface_frame(s))


def _trace_derivs(space: SplineSpace1D, grid: np.ndarray, samples):
    """Derivatives of the std-frame function at ``(0, t)``, keyed by ``(d1, d2)``."""
    samples = np.asarray(samples, dtype=float)
    E = np.array([collocation_matrix(space, [0.0], d)[0] for d in range(3)])
    out = {}
    for d2 in range(3):
        B = collocation_matrix(space, samples, d2)
        for d1 in range(3 - d2):
            out[(d1, d2)] = B @ (grid.T @ E[d1])
    return out


def g2_residuals(phi, domain: MultiPatchDomain, s: int, samples, frame: Frame | None = None):
    """Residuals ``(rho0, rho1, rho2)`` of the three smoothness conditions at ``samples``.

    ``phi`` is anything with ``space`` and ``grid(patch)`` returning the native
    coefficient grid (zero for patches outside its support).
    """
    fr = frame or domain.interface_frame(s)
    glu = frame_gluing(domain, fr)
    gm = fr.minus_sym.grid_from_native(phi.grid(fr.minus))
    gp = fr.plus_sym.grid_from_native(phi.grid(fr.plus))
    Dm = _trace_derivs(phi.space, gm, samples)
    Dp = _trace_derivs(phi.space, gp, samples)
    t = np.asarray(samples, dtype=float)
    am, ap, beta = glu.alpha_minus(t), glu.alpha_plus(t), glu.beta(t)
    rho0 = Dm[(0, 0)] - Dp[(0, 0)]
    rho1 = ap * Dm[(1, 0)] - am * Dp[(1, 0)] + beta * Dm[(0, 1)]
    w = am ** 2 * Dp[(2, 0)] - (ap ** 2 * Dm[(2, 0)] + 2 * ap * beta * Dm[(1, 1)]
                                + beta ** 2 * Dm[(0, 2)])
    rho2 = glu.alpha_hat_minus(t) * w + glu.eta(t) * Dm[(1, 0)] + glu.theta(t) * Dm[(0, 1)]
    return np.stack([rho0, rho1, rho2], axis=-1)


__all__ = ["InterfaceGluing", "gluing_data", "frame_gluing", "g2_residuals",
           "optimal_gamma1", "gamma_objective", "POLY_TOL"]
