"""Quadrature, physical derivatives through bilinear maps and Galerkin assembly.

The stiffness matrix of the weak triharmonic form is assembled patch by
patch for the full tensor-product spline space, ``A = B^T W B`` with ``B``
holding the two components of ``grad(Laplace w)`` at the quadrature points,
and then restricted to the basis through the sparse coefficient matrices,
``S = sum_l C_l^T A_l C_l``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .basisspace import GlobalBasis, IsogeometricFunction
from .bspline import SplineSpace1D, basis_ders, collocation_matrix
from .errors import DegenerateGeometryError, InvalidParameterError
from .multipatch import BilinearPatch
from .polynomials2d import Polynomial2D


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule with ``q`` points on each knot span of ``[0, 1]``."""

    q: int
    points: np.ndarray  # (n_elements * q,)
    weights: np.ndarray
    n_elements: int

    def element(self, e: int) -> slice:
        return slice(e * self.q, (e + 1) * self.q)


def quadrature_rule(space: SplineSpace1D, q: int | None = None) -> QuadratureRule:
    """Default ``q = p + 4``: the integrands are rational through ``1 / det J`` and
    ``p + 2`` points leave a relative quadrature error near 1e-7 on skewed patches."""
    q = space.p + 4 if q is None else int(q)
    if q < 1:
        raise InvalidParameterError("need at least one quadrature point")
    x, w = np.polynomial.legendre.leggauss(q)
    nel = space.k + 1
    h = space.h
    lo = np.arange(nel)[:, None] * h
    pts = (lo + 0.5 * h * (x[None, :] + 1)).ravel()
    wts = np.tile(0.5 * h * w, nel)
    return QuadratureRule(q, pts, wts, nel)


# ---------------------------------------------------------------------------
# chain rule

def _second_derivative_of_map(patch: BilinearPatch) -> np.ndarray:
    d2F = np.zeros((2, 2, 2))
    d2F[:, 0, 1] = d2F[:, 1, 0] = patch.twist
    return d2F


def physical_jet(J, d2F, g1, g2=None, g3=None):
    """Physical derivatives from parametric ones through a map with zero third derivatives.

    ``J`` has shape ``(Q, 2, 2)`` and ``g1, g2, g3`` shapes ``(Q, F, 2)``,
    ``(Q, F, 2, 2)``, ``(Q, F, 2, 2, 2)``. Returns the list of gradient,
    Hessian and third-derivative tensors up to the highest given order.
    """
    K = np.linalg.inv(J)  # K[q, a, i] = d xi_a / d x_i
    grad = np.einsum("qfa,qai->qfi", g1, K)
    out = [grad]
    if g2 is None:
        return out
    Hp = g2 - np.einsum("qfm,mab->qfab", grad, d2F)
    hess = np.einsum("qfab,qai,qbj->qfij", Hp, K, K)
    out.append(hess)
    if g3 is None:
        return out
    Tp = g3 - (np.einsum("qfij,iac,qjb->qfabc", hess, d2F, J)
               + np.einsum("qfij,qia,jbc->qfabc", hess, J, d2F)
               + np.einsum("qfij,iab,qjc->qfabc", hess, d2F, J))
    out.append(np.einsum("qfabc,qai,qbj,qck->qfijk", Tp, K, K, K))
    return out


def _tensorize(P):
    """Symmetric derivative tensors from ``P[(a, b)]`` (``a`` xi1-, ``b`` xi2-derivatives)."""
    def pick(idx):
        return P[(idx.count(0), idx.count(1))]

    g1 = np.stack([pick((0,)), pick((1,))], axis=-1)
    g2 = np.stack([np.stack([pick((a, b)) for b in range(2)], axis=-1) for a in range(2)], axis=-2)
    g3 = np.stack([np.stack([np.stack([pick((a, b, c)) for c in range(2)], axis=-1)
                             for b in range(2)], axis=-2) for a in range(2)], axis=-3)
    return g1, g2, g3


def _check_det(det):
    if np.any(det <= 0):
        raise DegenerateGeometryError(f"det J <= 0 at a quadrature point (min {det.min():.3e})")


def physical_derivatives(phi: IsogeometricFunction, patch: BilinearPatch, patch_id: int,
                         xi, order: int = 3):
    """Value and physical derivative tensors up to ``order`` at parameters ``xi`` (shape (n, 2))."""
    if not 0 <= order <= 3:
        raise InvalidParameterError("order must be between 0 and 3")
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    space = phi.space
    G = phi.grid(patch_id)
    B1 = [collocation_matrix(space, xi[:, 0], d) for d in range(order + 1)]
    B2 = [collocation_matrix(space, xi[:, 1], d) for d in range(order + 1)]
    P = {}
    for a in range(order + 1):
        for b in range(order + 1 - a):
            P[(a, b)] = np.einsum("qi,ij,qj->q", B1[a], G, B2[b])[:, None]
    J = patch.jacobian(xi[:, 0], xi[:, 1])
    _check_det(np.linalg.det(J))
    out = [P[(0, 0)][:, 0]]
    if order == 0:
        return out
    for o in range(order + 1, 4):
        for a in range(o + 1):
            P[(a, o - a)] = np.zeros_like(P[(0, 0)])
    g1, g2, g3 = _tensorize(P)
    args = [g1, g2, g3][:order]
    jets = physical_jet(J, _second_derivative_of_map(patch), *args)
    return out + [t[:, 0] for t in jets]


# ---------------------------------------------------------------------------
# element loop

@dataclass
class ElementData:
    """Quadrature data of one knot-span element of a patch."""

    idx: np.ndarray  # flat indices (i * d + j) of the (p + 1)^2 active tensor B-splines
    values: np.ndarray  # (Q, nloc)
    derivs: dict  # (a, b) -> (Q, nloc) parametric derivatives
    J: np.ndarray
    det: np.ndarray
    weights: np.ndarray  # quadrature weight times |det J|
    points: np.ndarray  # physical quadrature points (Q, 2)
    d1: np.ndarray  # 1D tables (q, 4, p + 1) for the two directions
    d2: np.ndarray
    span1: int
    span2: int


def element_loop(patch: BilinearPatch, space: SplineSpace1D, rule: QuadratureRule,
                 max_order: int = 3):
    p, d = space.p, space.dim
    spans, ders = basis_ders(space, rule.points, max_order)
    a_loc = np.arange(p + 1)
    for e1 in range(rule.n_elements):
        s1 = rule.element(e1)
        sp1 = int(spans[s1][0])
        D1 = ders[s1]
        for e2 in range(rule.n_elements):
            s2 = rule.element(e2)
            sp2 = int(spans[s2][0])
            D2 = ders[s2]
            x1, x2 = np.meshgrid(rule.points[s1], rule.points[s2], indexing="ij")
            x1, x2 = x1.ravel(), x2.ravel()
            J = patch.jacobian(x1, x2)
            det = np.linalg.det(J)
            _check_det(det)
            w = (rule.weights[s1][:, None] * rule.weights[s2][None, :]).ravel() * det
            derivs = {}
            for a in range(max_order + 1):
                for b in range(max_order + 1 - a):
                    derivs[(a, b)] = np.einsum("xi,yj->xyij", D1[:, a], D2[:, b]).reshape(
                        len(w), -1)
            idx = ((sp1 - p + a_loc)[:, None] * d + (sp2 - p + a_loc)[None, :]).ravel()
            yield ElementData(idx, derivs[(0, 0)], derivs, J, det, w, patch(x1, x2),
                              D1, D2, sp1, sp2)


def grad_laplacian(el: ElementData, d2F: np.ndarray) -> np.ndarray:
    """``grad(Laplace N)`` of the element's active B-splines, shape ``(Q, nloc, 2)``."""
    g1, g2, g3 = _tensorize(el.derivs)
    _, _, u3 = physical_jet(el.J, d2F, g1, g2, g3)
    return np.einsum("qfijj->qfi", u3)


def patch_matrices(patch: BilinearPatch, space: SplineSpace1D, rhs: Polynomial2D | None = None,
                   rule: QuadratureRule | None = None):
    """Tensor-space stiffness ``A`` (sparse, d^2 x d^2) and load ``b`` on one patch."""
    rule = rule or quadrature_rule(space)
    d2 = space.dim ** 2
    d2F = _second_derivative_of_map(patch)
    rows, cols, vals = [], [], []
    b = np.zeros(d2)
    for el in element_loop(patch, space, rule):
        Bm = grad_laplacian(el, d2F)
        Ke = np.einsum("qnc,q,qmc->nm", Bm, el.weights, Bm)
        n = len(el.idx)
        rows.append(np.repeat(el.idx, n))
        cols.append(np.tile(el.idx, n))
        vals.append(Ke.ravel())
        if rhs is not None:
            fq = rhs(el.points[:, 0], el.points[:, 1])
            np.add.at(b, el.idx, el.values.T @ (el.weights * fq))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(d2, d2))
    return A, b


@dataclass
class LinearSystem:
    S: sp.csr_matrix
    f: np.ndarray
    basis: GlobalBasis

    @property
    def n(self) -> int:
        return self.S.shape[0]

    def symmetry_error(self) -> float:
        """``max|S - S^T| / max|S|``."""
        diff = abs(self.S - self.S.T)
        return float(diff.max() / abs(self.S).max()) if self.S.nnz else 0.0

    def export(self, matrix_path, rhs_path=None) -> None:
        scipy.io.mmwrite(str(matrix_path), self.S, symmetry="general")
        if rhs_path is not None:
            np.savetxt(rhs_path, self.f)


def assemble_system(basis: GlobalBasis, rhs: Polynomial2D | None = None,
                    q: int | None = None) -> LinearSystem:
    """Stiffness ``s_ij = int grad(Lap w_i) . grad(Lap w_j)`` and load ``f_i = int f w_i``."""
    if basis.dim == 0:
        raise InvalidParameterError("empty basis")
    space = basis.space
    rule = quadrature_rule(space, q)
    S = sp.csr_matrix((basis.dim, basis.dim))
    f = np.zeros(basis.dim)
    for pid, patch in enumerate(basis.domain.patches):
        A, b = patch_matrices(patch, space, rhs, rule)
        C = basis.coefficient_matrix(pid)
        S = S + (C.T @ A @ C).tocsr()
        f += C.T @ b
    S.sum_duplicates()
    return LinearSystem(S.tocsr(), f, basis)


__all__ = ["QuadratureRule", "quadrature_rule", "physical_jet", "physical_derivatives",
           "ElementData", "element_loop", "grad_laplacian", "patch_matrices",
           "LinearSystem", "assemble_system"]
