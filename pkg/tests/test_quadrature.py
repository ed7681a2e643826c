import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from randaffine.errors import ConditioningError, DomainError, InvariantViolation
from randaffine.quadrature import (MAX_ORDER, RecurrenceCoefficients, gram_matrix, jacobi_matrix, quadrature_rule,
                                   recurrence_coefficients, tridiagonal_eigh)
from randaffine.randomizers import (Degenerate, Exponential, Gamma, Normal, ScaledNoncentralChiSquare,
                                    StandardNormalAffine, Uniform, raw_moment)


def test_gram_uniform():
    assert np.allclose(gram_matrix(Uniform(0, 1), 1), [[1, 0.5], [0.5, 1 / 3]], rtol=1e-15)


def test_gram_degenerate():
    assert np.allclose(gram_matrix(Degenerate(2), 1), [[1, 2], [2, 4]])


def test_gram_normal():
    assert np.array_equal(gram_matrix(StandardNormalAffine(0, 1), 2), [[1, 0, 1], [0, 1, 0], [1, 0, 3]])


def test_gram_exact_is_rational():
    from fractions import Fraction
    M = gram_matrix(Uniform(0, 1), 2, exact=True)
    assert M[1][1] == Fraction(1, 3)


@pytest.mark.parametrize("exact", [False, True])
def test_recurrence_legendre(exact):
    c = recurrence_coefficients(gram_matrix(Uniform(-1, 1), 2, exact=exact))
    assert np.allclose(c.alpha, [0, 0], atol=1e-14)
    assert c.beta[0] == pytest.approx(1 / 3, rel=1e-13)


@pytest.mark.parametrize("exact", [False, True])
def test_recurrence_hermite(exact):
    c = recurrence_coefficients(gram_matrix(StandardNormalAffine(0, 1), 2, exact=exact))
    assert np.allclose(c.alpha, [0, 0], atol=1e-14)
    assert c.beta[0] == pytest.approx(1.0, rel=1e-13)


@pytest.mark.parametrize("exact", [False, True])
def test_recurrence_degenerate_raises(exact):
    with pytest.raises(ConditioningError) as info:
        recurrence_coefficients(gram_matrix(Degenerate(2.0), 2, exact=exact))
    assert "N=2" in str(info.value)


def test_recurrence_deeper_legendre_betas():
    # monic Legendre: beta_j = j^2 / (4 j^2 - 1)
    c = recurrence_coefficients(gram_matrix(Uniform(-1, 1), 6, exact=True))
    assert np.allclose(c.beta, [j * j / (4 * j * j - 1) for j in range(1, 6)], rtol=1e-14)


def test_jacobi_examples():
    J = jacobi_matrix(RecurrenceCoefficients([0, 0], [1 / 3]))
    assert np.allclose(J, [[0, math.sqrt(1 / 3)], [math.sqrt(1 / 3), 0]])
    assert np.array_equal(jacobi_matrix(RecurrenceCoefficients([0.5], [])), [[0.5]])
    J3 = jacobi_matrix(RecurrenceCoefficients([0, 0, 0], [1, 2]))
    assert np.allclose(np.diag(J3, 1), [1, math.sqrt(2)])
    assert np.allclose(J3, J3.T)


def test_jacobi_negative_beta():
    with pytest.raises(InvariantViolation):
        jacobi_matrix(RecurrenceCoefficients([0, 0], [-1.0]))


def test_rule_examples():
    r = quadrature_rule(Uniform(0, 1), 1)
    assert np.allclose(r.nodes, [0.5]) and np.allclose(r.weights, [1.0])
    r = quadrature_rule(Uniform(-1, 1), 2)
    assert np.allclose(r.nodes, [-0.5773503, 0.5773503], atol=1e-7)
    assert np.allclose(r.weights, [0.5, 0.5], atol=1e-14)
    r = quadrature_rule(StandardNormalAffine(0, 1), 3)
    assert np.allclose(r.nodes, [-math.sqrt(3), 0, math.sqrt(3)], atol=1e-13)
    assert np.allclose(r.weights, [1 / 6, 2 / 3, 1 / 6], atol=1e-14)


def test_degenerate_rule_bypass():
    r = quadrature_rule(Degenerate(0.3), 6)
    assert list(r) == [(1.0, 0.3)]
    assert r.note


def test_order_cap():
    with pytest.raises(DomainError):
        quadrature_rule(Uniform(0, 1), MAX_ORDER + 1)
    with pytest.raises(DomainError):
        quadrature_rule(Uniform(0, 1), 0)


@pytest.mark.parametrize("N", range(1, 11))
def test_classical_legendre(N):
    x, w = special.roots_legendre(N)
    a, b = 0.1, 0.45
    r = quadrature_rule(Uniform(a, b), N)
    assert np.allclose(r.nodes, a + (b - a) * (x + 1) / 2, rtol=0, atol=1e-10)
    assert np.allclose(r.weights, w / 2, rtol=0, atol=1e-10)


@pytest.mark.parametrize("N", range(1, 11))
def test_classical_hermite(N):
    x, w = special.roots_hermitenorm(N)
    mu, s = 0.3, 0.2
    r = quadrature_rule(Normal(mu, s), N)
    assert np.allclose(r.nodes, mu + s * x, rtol=0, atol=1e-10)
    assert np.allclose(r.weights, w / w.sum(), rtol=0, atol=1e-10)


@pytest.mark.parametrize("N", range(1, 11))
def test_classical_laguerre(N):
    shape, scale = 2.55, 0.1
    x, w = special.roots_genlaguerre(N, shape - 1)
    r = quadrature_rule(Gamma(shape, scale), N)
    assert np.allclose(r.nodes, scale * x, rtol=1e-10, atol=1e-12)
    assert np.allclose(r.weights, w / w.sum(), rtol=0, atol=1e-10)


SPECS = [Uniform(0.1, 0.45), Gamma(2.55, 0.1), ScaledNoncentralChiSquare(0.088, 0.1662, 3.2417), Exponential(2.0),
         Normal(0.5, 0.1), Uniform(0.01, 2.3)]


@pytest.mark.parametrize("spec", SPECS)
@pytest.mark.parametrize("N", [1, 2, 5, 8])
def test_rule_invariants(spec, N):
    r = quadrature_rule(spec, N)
    assert abs(r.weights.sum() - 1) < 1e-12
    assert np.all(r.weights > 0)
    assert np.all(np.diff(r.nodes) > 0)
    assert all(spec.support().contains(t) for t in r.nodes)
    for k in range(2 * N):
        exact = raw_moment(spec, k)
        got = float(np.dot(r.weights, r.nodes ** k))
        assert got == pytest.approx(exact, rel=1e-8, abs=1e-14), k


@pytest.mark.parametrize("spec", SPECS[:4])
def test_interlacing(spec):
    for N in range(1, 9):
        a = quadrature_rule(spec, N).nodes
        b = quadrature_rule(spec, N + 1).nodes
        assert np.all(b[:-1] < a) and np.all(a < b[1:])


@pytest.mark.parametrize("spec", SPECS[:3])
def test_cholesky_route_matches_exact(spec):
    # the float route loses digits quickly with N (monomial Gram conditioning), so only low orders
    for N in (1, 2, 3, 4):
        e = quadrature_rule(spec, N)
        c = quadrature_rule(spec, N, method="cholesky")
        assert np.allclose(c.nodes, e.nodes, rtol=1e-7)
        assert np.allclose(c.weights, e.weights, rtol=1e-6)


def test_high_order_exact_route_stays_accurate():
    x, w = special.roots_legendre(20)
    r = quadrature_rule(Uniform(-1, 1), 20)
    assert np.allclose(r.nodes, x, atol=1e-12)
    assert np.allclose(r.weights, w / 2, atol=1e-12)


@given(a=st.floats(0.0, 1.0), width=st.floats(0.05, 3.0), N=st.integers(1, 10))
def test_uniform_moment_exactness_property(a, width, N):
    spec = Uniform(a, a + width)
    r = quadrature_rule(spec, N)
    for k in range(2 * N):
        assert float(np.dot(r.weights, r.nodes ** k)) == pytest.approx(raw_moment(spec, k), rel=1e-8, abs=1e-300)


@given(shape=st.floats(0.3, 8.0), scale=st.floats(0.01, 2.0), N=st.integers(1, 10))
def test_gamma_moment_exactness_property(shape, scale, N):
    spec = Gamma(shape, scale)
    r = quadrature_rule(spec, N)
    assert abs(r.weights.sum() - 1) < 1e-12
    for k in range(2 * N):
        assert float(np.dot(r.weights, r.nodes ** k)) == pytest.approx(raw_moment(spec, k), rel=1e-8)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=12), st.data())
def test_tridiagonal_eigh_matches_numpy(diag, data):
    off = data.draw(st.lists(st.floats(0.01, 3), min_size=len(diag) - 1, max_size=len(diag) - 1))
    vals, vecs = tridiagonal_eigh(np.array(diag), np.array(off))
    T = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    assert np.allclose(np.sort(vals), np.linalg.eigvalsh(T), atol=1e-10)
    assert np.allclose(T @ vecs, vecs * vals, atol=1e-9)


def test_rule_arrays_read_only():
    r = quadrature_rule(Uniform(0, 1), 3)
    with pytest.raises(ValueError):
        r.nodes[0] = 1.0


def test_rule_expectation():
    r = quadrature_rule(Gamma(2.0, 0.5), 4)
    assert r.expect(lambda t: t ** 3) == pytest.approx(raw_moment(Gamma(2.0, 0.5), 3), rel=1e-12)
