import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from gfspec.matrixlab import (ContourError, DenseOperatorPair, QuadratureError, decay_bound_check,
                              duhamel_partial_sum, dunford_projector, eigen_projector,
                              factorization_residuals, hille_laplace, matrix_exponential, resolvent,
                              separated_random_matrix, weyl_discrete_check)


def test_exponential_examples():
    assert np.array_equal(matrix_exponential(np.zeros((3, 3)), 2.0), np.eye(3))
    E = matrix_exponential(np.diag([1.0, -3.0]), 0.7)
    assert np.allclose(E, np.diag(np.exp([0.7, -2.1])), rtol=1e-12, atol=0)
    lam, t = -0.4, 1.9
    J = matrix_exponential(np.array([[lam, 1.0], [0.0, lam]]), t)
    exact = np.exp(t * lam) * np.array([[1.0, t], [0.0, 1.0]])
    assert np.max(np.abs(J - exact) / np.abs(np.where(exact == 0, 1, exact))) <= 1e-12


@settings(max_examples=40)
@given(st.integers(0, 2 ** 31), st.floats(0.01, 30.0))
def test_exponential_matches_scipy(seed, scale):
    M = np.random.default_rng(seed).standard_normal((6, 6))
    M *= scale / np.linalg.norm(M, 1)
    ref = expm(M)
    assert np.linalg.norm(matrix_exponential(M) - ref) <= 1e-12 * max(1.0, np.linalg.norm(ref)) * 10


@settings(max_examples=30)
@given(st.integers(0, 2 ** 31), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_semigroup_property(seed, s, t):
    M = np.random.default_rng(seed).standard_normal((5, 5))
    lhs = matrix_exponential(M, s + t)
    rhs = matrix_exponential(M, s) @ matrix_exponential(M, t)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(lhs))


def test_exponential_errors():
    with pytest.raises(OverflowError):
        matrix_exponential(np.array([[1e6]]), 1.0)
    with pytest.raises(ValueError):
        matrix_exponential(np.ones((2, 3)))
    with pytest.raises(ValueError):
        matrix_exponential(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        matrix_exponential(np.zeros((257, 257)))


def test_resolvent_examples():
    assert np.allclose(resolvent(np.zeros((2, 2)), 1.0), -np.eye(2), atol=1e-15)
    assert np.allclose(resolvent(np.array([[2.0]]), 3.0), [[-1.0]], atol=1e-15)
    with pytest.raises(ContourError):
        resolvent(np.diag([1.0, 2.0]), 2.0)


@pytest.mark.parametrize("seed", range(5))
def test_factorization_identities(seed):
    pair = DenseOperatorPair.random(8, seed)
    z = 3.0 + 1.5j
    left, right = factorization_residuals(pair, z)
    assert left <= 1e-10 and right <= 1e-10


def test_projector_examples():
    P = dunford_projector(np.diag([1.0, -1.0]), 1.0, 0.5)
    assert np.allclose(P, np.diag([1.0, 0.0]), atol=1e-12)
    J = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert np.allclose(dunford_projector(J, 1.0, 0.5), np.eye(2), atol=1e-12)
    with pytest.raises(ContourError):
        dunford_projector(np.diag([1.0, -1.0]), 0.0, 1.0)
    with pytest.raises(ValueError):
        dunford_projector(np.eye(2), 0.0, -1.0)


@pytest.mark.parametrize("seed", range(10))
def test_projector_matches_eigendecomposition(seed):
    M = separated_random_matrix(10, seed)
    P = dunford_projector(M, 0.0, 1.0)
    assert np.linalg.norm(P - eigen_projector(M, 0.0, 1.0)) <= 1e-8
    assert np.linalg.norm(P @ P - P) <= 1e-8
    assert np.linalg.norm(M @ P - P @ M) <= 1e-8 * np.linalg.norm(M)
    assert np.trace(P) == pytest.approx(3.0, abs=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_projectors_partition_identity(seed):
    M = separated_random_matrix(10, seed)
    total = sum(dunford_projector(M, c, r) for c, r in [(0.0, 1.0), (3.5, 1.8), (-3.5, 1.8)])
    assert np.linalg.norm(total - np.eye(10)) <= 1e-8


def test_decay_bound_examples():
    M = np.diag([1.0, -2.0])
    P = np.diag([1.0, 0.0])
    ts = np.arange(0.0, 10.01, 0.5)
    assert decay_bound_check(M, P, -1.0, ts) == pytest.approx(1.0, abs=1e-12)
    assert decay_bound_check(M, np.eye(2), -1.0, ts) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_decay_bound_normal_matrix(seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    eigs = np.concatenate([[0.5], -rng.uniform(0.5, 3.0, 5)])
    M = Q @ np.diag(eigs) @ Q.T
    P = np.outer(Q[:, 0], Q[:, 0])
    a = eigs[1:].max() + 0.1
    C = decay_bound_check(M, P, a, np.arange(0.0, 10.01, 0.5))
    assert C <= 1.0 + 1e-10


def test_duhamel_a_zero():
    B = np.diag([-1.0, 0.5]) + np.array([[0.0, 0.3], [0.0, 0.0]])
    res = duhamel_partial_sum(DenseOperatorPair(np.zeros((2, 2)), B), 1.5, 1)
    assert np.allclose(res.partial, expm(1.5 * B), atol=1e-12)
    assert np.max(np.abs(res.remainder)) <= 1e-12


def test_duhamel_b_zero():
    A = np.array([[-0.5, 1.0], [0.2, -1.0]])
    res = duhamel_partial_sum(DenseOperatorPair(A, np.zeros((2, 2))), 1.2, 1)
    assert np.allclose(res.partial, np.eye(2), atol=1e-12)
    # with B = 0 the remainder is int_0^t exp(sA) A ds = exp(tA) - I
    assert np.max(np.abs(res.direct_remainder - (expm(1.2 * A) - np.eye(2)))) <= 1e-8


def test_duhamel_commuting_diagonals():
    a, b, t, n = np.array([0.7, -1.2, 1.5]), np.array([-0.4, 0.3, -1.8]), 1.3, 3
    res = duhamel_partial_sum(DenseOperatorPair(np.diag(a), np.diag(b)), t, n)
    # term l is exp(bt) (at)^l / l!, so the partial sum truncates exp(at)
    partial = np.exp(b * t) * sum((a * t) ** k / math.factorial(k) for k in range(n))
    assert np.max(np.abs(np.diag(res.partial) - partial)) <= 1e-8
    assert np.max(np.abs(np.diag(res.direct_remainder) - (np.exp((a + b) * t) - partial))) <= 1e-8


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("n", [1, 2, 3])
def test_duhamel_random_pairs(seed, n):
    res = duhamel_partial_sum(DenseOperatorPair.random(8, seed), 2.0, n)
    assert res.error <= 1e-6


def test_duhamel_errors():
    pair = DenseOperatorPair.random(4, 0)
    with pytest.raises(ValueError):
        duhamel_partial_sum(pair, 1.0, 0)
    with pytest.raises(ValueError):
        duhamel_partial_sum(pair, 1.0, 1, quad_nodes=32)
    with pytest.raises(QuadratureError):
        duhamel_partial_sum(DenseOperatorPair.random(4, 0, norm=20.0), 2.0, 2, quad_nodes=64)
    with pytest.raises(ValueError):
        DenseOperatorPair(np.eye(2), np.eye(3))


def test_weyl_examples():
    pair = DenseOperatorPair(np.diag([1.0, -1.0, -3.0]), np.zeros((3, 3)))
    rep = weyl_discrete_check(pair, 0.0)
    assert rep.count == 1 and rep.eigs == [1.0] and rep.all_discrete
    assert weyl_discrete_check(pair, 2.0).count == 0
    assert weyl_discrete_check(pair, 2.0).max_modulus == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_weyl_low_rank_perturbation(seed):
    rng = np.random.default_rng(seed)
    B = -np.eye(20) + 0.2 * rng.standard_normal((20, 20)) / np.sqrt(20)
    U = rng.standard_normal((20, 2))
    A = 2.0 * U @ U.T / np.linalg.norm(U) ** 2 * 3.0
    rep = weyl_discrete_check(DenseOperatorPair(A, B), -0.5)
    oracle = np.linalg.eigvals(A + B)
    assert rep.count == int(np.sum(oracle.real > -0.5))
    assert rep.count >= 1


@pytest.mark.parametrize("seed", range(4))
def test_hille_identity(seed):
    M = np.random.default_rng(seed).standard_normal((6, 6))
    xi = float(np.max(np.linalg.eigvals(M).real)) + 1.5 + 0.5j
    assert np.max(np.abs(hille_laplace(M, xi) + resolvent(M, xi))) <= 1e-6


def test_spectral_mapping():
    M = separated_random_matrix(8, 3) / 5.0
    t = 0.8
    mapped = np.exp(t * np.linalg.eigvals(M))
    direct = np.linalg.eigvals(matrix_exponential(M, t))
    for mu in mapped:
        assert np.min(np.abs(direct - mu)) <= 1e-8 * max(1.0, abs(mu))
