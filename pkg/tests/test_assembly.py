import json

import numpy as np
import pytest

from iga_c2.assembly import (assemble_system, patch_matrices, physical_derivatives,
                             quadrature_rule)
from iga_c2.basisspace import IsogeometricFunction
from iga_c2.bspline import collocation_matrix, make_space
from iga_c2.errors import DegenerateGeometryError
from iga_c2.multipatch import BilinearPatch, inverse_map, parse_domain
from iga_c2.polynomials2d import Polynomial2D, partial
from oracles import pullback

SKEW = BilinearPatch([0, 0], [2.0, 0.3], [2.4, 1.9], [-0.2, 1.2])


@pytest.mark.parametrize("p,k", [(5, 3), (6, 1), (7, 0)])
def test_gauss_exactness(p, k):
    rule = quadrature_rule(make_space(p, 2, k, strict=False))
    q = rule.q
    assert q == p + 4
    assert rule.weights @ rule.points ** (2 * q - 1) == pytest.approx(1 / (2 * q), abs=1e-14)
    assert np.all(rule.weights > 0)
    for e in range(rule.n_elements):
        assert rule.weights[rule.element(e)].sum() == pytest.approx(1 / (k + 1), abs=1e-15)


def test_bspline_integrals():
    sp = make_space(5, 2, 4)
    rule = quadrature_rule(sp)
    B = collocation_matrix(sp, rule.points)
    kv = sp.knots
    ref = (kv[sp.p + 1:] - kv[:sp.dim]) / (sp.p + 1)
    assert np.allclose(rule.weights @ B, ref, atol=1e-13)
    # tensor integral over the unit square
    I2 = np.einsum("a,ai,b,bj->ij", rule.weights, B, rule.weights, B)
    assert np.allclose(I2, np.outer(ref, ref), atol=1e-13)


def test_stiffness_on_unit_square_matches_tensor_oracle():
    # grad Lap (a(x) b(y)) = (a''' b + a' b'', a'' b' + a b''') turns every entry
    # into sums of products of 1D integrals
    sp = make_space(5, 2, 2)
    unit = BilinearPatch([0, 0], [1, 0], [1, 1], [0, 1])
    A, _ = patch_matrices(unit, sp)
    x, w = np.polynomial.legendre.leggauss(12)
    edges = np.linspace(0, 1, 2 * (sp.k + 1) + 1)
    pts = np.concatenate([(lo + hi) / 2 + (hi - lo) / 2 * x for lo, hi in zip(edges, edges[1:])])
    wts = np.concatenate([(hi - lo) / 2 * w for lo, hi in zip(edges, edges[1:])])
    D = [collocation_matrix(sp, pts, d) for d in range(4)]

    def M(a, b):
        return D[a].T @ (wts[:, None] * D[b])

    # component 1: a''' b + a' b''; component 2: a'' b' + a b'''
    terms1 = [((3, 0), 1.0), ((1, 2), 1.0)]
    terms2 = [((2, 1), 1.0), ((0, 3), 1.0)]
    d = sp.dim
    ref = np.zeros((d, d, d, d))
    for terms in (terms1, terms2):
        for (a1, b1), _ in terms:
            for (a2, b2), _ in terms:
                ref += np.einsum("ik,jl->ijkl", M(a1, a2), M(b1, b2))
    assert np.allclose(A.toarray(), ref.reshape(d * d, d * d), rtol=1e-11,
                       atol=1e-11 * np.abs(ref).max())


def _random_function(space, seed):
    rng = np.random.default_rng(seed)
    return IsogeometricFunction(space, "test", (0,), {0: rng.normal(size=(space.dim, space.dim))})


def test_physical_derivatives_identity_patch():
    sp = make_space(5, 2, 1)
    phi = _random_function(sp, 0)
    unit = BilinearPatch([0, 0], [1, 0], [1, 1], [0, 1])
    xi = np.array([[0.3, 0.7]])
    out = physical_derivatives(phi, unit, 0, xi)
    G = phi.grid(0)
    B = [collocation_matrix(sp, [0.3], d)[0] for d in range(4)]
    C = [collocation_matrix(sp, [0.7], d)[0] for d in range(4)]
    assert out[0][0] == pytest.approx(B[0] @ G @ C[0])
    assert out[1][0, 0] == pytest.approx(B[1] @ G @ C[0])
    assert out[2][0, 0, 1] == pytest.approx(B[1] @ G @ C[1])
    assert out[3][0, 0, 1, 1] == pytest.approx(B[1] @ G @ C[2])
    assert out[3][0, 1, 1, 1] == pytest.approx(B[0] @ G @ C[3])


def test_physical_derivatives_of_pulled_back_polynomials():
    # a physical polynomial of total degree 5 composed with a bilinear map is
    # in the spline space, so the chain rule must recover its exact derivatives
    sp = make_space(5, 2, 1)
    dom = parse_domain(json.dumps({"patches": [SKEW.corners.tolist()]}))
    rng = np.random.default_rng(7)
    u = Polynomial2D({(i, j): float(rng.normal()) for i in range(6) for j in range(6 - i)})
    phi = pullback(dom, sp, u)
    xi = rng.uniform(0, 1, size=(10, 2))
    out = physical_derivatives(phi, SKEW, 0, xi)
    x = SKEW(xi[:, 0], xi[:, 1])
    for order in range(4):
        for idx in np.ndindex(*(2,) * order):
            a = idx.count(0)
            ref = partial(u, a, order - a)(x[:, 0], x[:, 1])
            got = out[order][(slice(None),) + idx]
            assert np.allclose(got, ref, rtol=1e-8, atol=1e-8 * max(1, np.abs(ref).max()))


STENCILS = {
    0: np.array([0, 0, 0, 1, 0, 0, 0.0]),
    1: np.array([-1, 9, -45, 0, 45, -9, 1]) / 60,
    2: np.array([2, -27, 270, -490, 270, -27, 2]) / 180,
    3: np.array([1 / 8, -1, 13 / 8, 0, -13 / 8, 1, -1 / 8]),
}


def test_physical_derivatives_against_finite_differences():
    sp = make_space(5, 2, 1)
    phi = _random_function(sp, 11)
    G = phi.grid(0)
    xi0 = np.array([0.25, 0.3])
    x0 = SKEW(*xi0)
    step = 3e-3 * SKEW.diameter

    def u(x):
        s = inverse_map(SKEW, x)
        return collocation_matrix(sp, [s[0]])[0] @ G @ collocation_matrix(sp, [s[1]])[0]

    vals = np.array([[u(x0 + step * np.array([i, j])) for j in range(-3, 4)]
                     for i in range(-3, 4)])
    out = physical_derivatives(phi, SKEW, 0, xi0[None])
    scale = max(np.abs(t).max() for t in out)
    for order in range(1, 4):
        for a in range(order + 1):
            fd = STENCILS[a] @ vals @ STENCILS[order - a] / step ** order
            got = out[order][(0,) + (0,) * a + (1,) * (order - a)]
            assert got == pytest.approx(fd, rel=1e-5, abs=1e-5 * scale)


def test_degenerate_jacobian_detected():
    flat = BilinearPatch([0, 0], [1, 0], [1, 1], [0, 1])
    flat.c11 = np.array([0.0, 0.0])  # bypass validation: collapsed corner
    phi = _random_function(make_space(5, 2, 1), 0)
    with pytest.raises(DegenerateGeometryError):
        physical_derivatives(phi, flat, 0, [[1.0, 1.0]])


def test_system_properties(basis_k5):
    system = assemble_system(basis_k5)
    assert system.n == 718
    assert system.symmetry_error() < 1e-10
    assert np.all(system.S.diagonal() > 0)
    ev = np.linalg.eigvalsh(system.S.toarray())
    assert ev[0] > 0


def test_quadrature_refinement_invariance(basis_k3):
    S1 = assemble_system(basis_k3).S.toarray()
    S2 = assemble_system(basis_k3, q=2 * (basis_k3.p + 2)).S.toarray()
    assert np.max(np.abs(S1 - S2)) < 1e-10 * np.abs(S1).max()


def test_assembly_is_deterministic(basis_k3):
    f = Polynomial2D({(1, 1): 1.0})
    a = assemble_system(basis_k3, f)
    b = assemble_system(basis_k3, f)
    assert (a.S != b.S).nnz == 0
    assert np.array_equal(a.f, b.f)


def test_load_vector_of_constant(basis_k3):
    # f = 1 gives f_i = integral of w_i; compare against an independent quadrature
    system = assemble_system(basis_k3, Polynomial2D.constant(1.0))
    sp = basis_k3.space
    x, w = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(0, 1, sp.k + 2)
    pts = np.concatenate([(lo + hi) / 2 + (hi - lo) / 2 * x for lo, hi in zip(edges, edges[1:])])
    wts = np.concatenate([(hi - lo) / 2 * w for lo, hi in zip(edges, edges[1:])])
    B = collocation_matrix(sp, pts)
    ref = np.zeros(basis_k3.dim)
    for pid, patch in enumerate(basis_k3.domain.patches):
        s1, s2 = np.meshgrid(pts, pts, indexing="ij")
        det = np.linalg.det(patch.jacobian(s1, s2))
        W = np.outer(wts, wts) * det
        I = B.T @ W @ B  # integrals of N_i N_j |det J|
        ref += basis_k3.coefficient_matrix(pid).T @ I.ravel()
    assert np.allclose(system.f, ref, rtol=1e-12, atol=1e-14)


def test_matrix_export(tmp_path, basis_k3):
    import scipy.io
    system = assemble_system(basis_k3, Polynomial2D.constant(1.0))
    system.export(tmp_path / "S.mtx", tmp_path / "f.txt")
    S = scipy.io.mmread(str(tmp_path / "S.mtx"))
    assert abs(S - system.S).max() < 1e-12 * abs(system.S).max()
    assert np.allclose(np.loadtxt(tmp_path / "f.txt"), system.f)
