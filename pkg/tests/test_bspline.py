from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import Polynomial

from iga_c2.bspline import (derivative, eval_all, m_functions, make_space, multiply_embed,
                            represent, unit)
from iga_c2.errors import InvalidParameterError, OutOfDomainError, RepresentationError
from oracles import bspline, knot_vector, raise_regularity_coeffs

SPACES = [(5, 2, 0), (5, 2, 1), (5, 2, 5), (6, 3, 4), (7, 4, 3), (6, 2, 2)]


@pytest.mark.parametrize("p,r,k,dim", [(5, 2, 0, 6), (5, 2, 1, 9), (5, 2, 5, 21),
                                       (6, 3, 4, 19), (5, 2, 3, 15)])
def test_dimension(p, r, k, dim):
    sp = make_space(p, r, k)
    assert sp.dim == dim
    assert len(sp.knots) == dim + p + 1


@pytest.mark.parametrize("args", [(4, 1, 2), (5, 3, 2), (5, 1, 2), (5, 2, -1)])
def test_invalid_parameters(args):
    with pytest.raises(InvalidParameterError):
        make_space(*args)


def test_out_of_domain():
    sp = make_space(5, 2, 2)
    with pytest.raises(OutOfDomainError):
        eval_all(sp, 1.5)
    with pytest.raises(OutOfDomainError):
        eval_all(sp, -1e-3)


@pytest.mark.parametrize("p,r,k", SPACES)
def test_matches_cox_de_boor_oracle(p, r, k):
    sp = make_space(p, r, k, strict=False)
    kv = knot_vector(p, r, k)
    for x in (Fraction(0), Fraction(3, 17), Fraction(1, 2), Fraction(5, 7), Fraction(1)):
        T = eval_all(sp, float(x), 3)
        for d in range(4):
            ref = [float(bspline(kv, i, p, x, d)) for i in range(sp.dim)]
            assert np.allclose(T[d], ref, rtol=1e-11, atol=1e-9 * max(1, np.abs(ref).max()))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SPACES), st.floats(0.0, 1.0))
def test_partition_of_unity_and_derivative_sums(params, x):
    sp = make_space(*params, strict=False)
    T = eval_all(sp, x, 3)
    assert abs(T[0].sum() - 1.0) < 1e-13
    assert np.all(T[0] >= -1e-15)
    for d in (1, 2, 3):
        assert abs(T[d].sum()) <= 1e-11 * np.abs(T[d]).max()


def test_endpoint_derivatives():
    sp = make_space(5, 2, 5)
    T = eval_all(sp, 0.0, 2)
    assert T[1, 1] == pytest.approx(30.0, rel=1e-13)
    assert T[1, 0] == pytest.approx(-30.0, rel=1e-13)
    assert np.allclose(T[1, 2:], 0)
    assert T[2, 2] == pytest.approx(5 * 4 * 36, rel=1e-13)
    Tr = eval_all(sp, 1.0, 1)
    assert Tr[1, -2] == pytest.approx(-30.0, rel=1e-13)


def test_exact_derivative_matches_evaluation():
    sp = make_space(6, 3, 4)
    rng = np.random.default_rng(0)
    f = unit(sp, 0)
    f.coeffs[:] = rng.normal(size=sp.dim)
    df = derivative(f)
    xs = np.linspace(0, 1, 37)
    assert np.allclose(df(xs), f(xs, 1), rtol=1e-12, atol=1e-10)


@pytest.mark.parametrize("p,r_from,r_to,k", [(5, 3, 2, 3), (5, 4, 2, 2), (6, 5, 3, 3)])
def test_regularity_embedding_against_knot_insertion(p, r_from, r_to, k):
    coarse = make_space(p, r_from, k, strict=False)
    fine = make_space(p, r_to, k, strict=False)
    for j in range(coarse.dim):
        got = represent(fine, unit(coarse, j)).coeffs
        ref = raise_regularity_coeffs(p, r_from, r_to, k, j)
        assert np.allclose(got, ref, atol=1e-12)


def test_smooth_bspline_embedding_pattern():
    # N_3 of S(5, 4, 5) vanishes to third order at 0, so the first three coefficients vanish
    got = represent(make_space(5, 2, 5), unit(make_space(5, 4, 5, strict=False), 3)).coeffs
    assert np.allclose(got[:3], 0, atol=1e-13)
    assert got[3] == pytest.approx(1 / 6, rel=1e-12)
    ref = raise_regularity_coeffs(5, 4, 2, 5, 3)
    assert np.allclose(got, ref, atol=1e-12)


def test_multiply_embed_against_dense_fit():
    src = make_space(4, 2, 3, strict=False)
    tgt = make_space(5, 2, 3)
    rng = np.random.default_rng(1)
    f = unit(src, 0)
    f.coeffs[:] = rng.normal(size=src.dim)
    q = Polynomial([0.3, -1.2])
    got = multiply_embed(f, q, tgt)
    xs = np.linspace(0, 1, 400)
    from iga_c2.bspline import collocation_matrix
    ref, *_ = np.linalg.lstsq(collocation_matrix(tgt, xs), q(xs) * f(xs), rcond=None)
    assert np.allclose(got.coeffs, ref, atol=1e-10)


def test_multiply_constant_one_by_xi():
    # xi * 1 in S(5, 2, 3) has the Greville abscissae as coefficients
    src = make_space(4, 2, 3, strict=False)
    tgt = make_space(5, 2, 3)
    one = unit(src, 0)
    one.coeffs[:] = 1.0
    got = multiply_embed(one, Polynomial([0.0, 1.0]), tgt)
    kv = tgt.knots
    gre = np.array([kv[i + 1:i + 6].mean() for i in range(tgt.dim)])
    assert np.allclose(got.coeffs, gre, atol=1e-13)


def test_multiply_embed_rejects_degree_overflow():
    with pytest.raises(InvalidParameterError):
        multiply_embed(unit(make_space(5, 2, 3), 0), Polynomial([0, 0, 1]), make_space(6, 2, 3))
    with pytest.raises(InvalidParameterError):
        multiply_embed(unit(make_space(5, 1, 3, strict=False), 0), Polynomial([1]),
                       make_space(5, 2, 3))


def test_represent_rejects_non_members():
    with pytest.raises(RepresentationError):
        represent(make_space(5, 2, 3), lambda x: np.abs(x - 0.3))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(SPACES[1:]), st.integers(0, 2 ** 31 - 1))
def test_represent_round_trip(params, seed):
    sp = make_space(*params, strict=False)
    c = np.random.default_rng(seed).uniform(-1, 1, sp.dim)
    f = unit(sp, 0)
    f.coeffs[:] = c
    assert np.max(np.abs(represent(sp, f).coeffs - c)) < 1e-11


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 6), st.integers(0, 2 ** 31 - 1))
def test_represent_polynomials(k, seed):
    sp = make_space(5, 2, k)
    q = Polynomial(np.random.default_rng(seed).uniform(-1, 1, 6))
    f = represent(sp, q)
    xs = np.linspace(0, 1, 31)
    assert np.allclose(f(xs), q(xs), atol=1e-12)


@pytest.mark.parametrize("p,r,k", [(5, 2, 3), (5, 2, 5), (6, 3, 4), (7, 2, 1)])
def test_profiles_taylor_property(p, r, k):
    sp = make_space(p, r, k)
    M = m_functions(sp)
    for i, m in enumerate(M):
        for j in range(3):
            assert m(0.0, j) == pytest.approx(float(i == j), abs=1e-12)
        assert np.count_nonzero(m.coeffs) <= 3
        assert np.all(m.coeffs[3:] == 0)


@st.composite
def lemma_instance(draw, drop):
    p = draw(st.integers(3, 7))
    r = draw(st.integers(0, p - 1 - drop))
    k = draw(st.integers(0, 5))
    return p, r, k


@settings(max_examples=100, deadline=None)
@given(lemma_instance(2), st.integers(1, 2), st.data())
def test_embedding_zero_pattern(inst, extra, data):
    # N_j of the smoother space has no coefficients below index j in S(p, r, k)
    p, r, k = inst
    coarse = make_space(p, r + extra, k, strict=False)
    fine = make_space(p, r, k, strict=False)
    j = data.draw(st.integers(0, coarse.dim - 1))
    d = represent(fine, unit(coarse, j)).coeffs
    assert np.all(np.abs(d[:j]) < 1e-12)


@settings(max_examples=100, deadline=None)
@given(lemma_instance(1), st.floats(-3, 3), st.floats(-3, 3), st.data())
def test_linear_product_zero_pattern(inst, w0, w1, data):
    p, r, k = inst
    src = make_space(p - 1, r, k, strict=False)
    tgt = make_space(p, r, k, strict=False)
    j = data.draw(st.integers(0, src.dim - 1))
    q = Polynomial([w0, w1 - w0])  # w0 (1 - x) + w1 x
    d = multiply_embed(unit(src, j), q, tgt).coeffs
    assert np.all(np.abs(d[:j]) < 1e-12)
