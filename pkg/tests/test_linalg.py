import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spectral_parareal.linalg import (
    EUCLIDEAN,
    DimensionMismatch,
    InnerProduct,
    SingularMatrix,
    dense_svd,
    dot,
    factorize,
    mgs_orthonormalize,
    norm,
    solve_multi,
)

from oracles import p1_matrices_1d

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_euclidean_dot():
    assert dot(EUCLIDEAN, [1.0, 2.0], [3.0, 4.0]) == 11.0


def test_identity_weight_matches_euclidean():
    rng = np.random.default_rng(0)
    v, w = rng.standard_normal((2, 7))
    ip = InnerProduct(sp.identity(7))
    assert ip.dot(v, w) == pytest.approx(v @ w, rel=1e-15)


def test_mass_weight_total_measure():
    M, _ = p1_matrices_1d(100)
    ip = InnerProduct(M)
    ones = np.ones(101)
    assert ip.dot(ones, ones) == pytest.approx(1.0, rel=1e-13)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        dot(EUCLIDEAN, np.ones(3), np.ones(4))
    ip = InnerProduct(sp.identity(5))
    with pytest.raises(DimensionMismatch):
        ip.dot(np.ones(4), np.ones(4))


def test_weight_must_be_spd():
    with pytest.raises(ValueError):
        InnerProduct(sp.diags([1.0, -1.0, 1.0]))


@settings(max_examples=40, deadline=None)
@given(arrays(float, (3, 6), elements=finite), st.floats(-5, 5), st.floats(-5, 5))
def test_dot_symmetric_bilinear(vecs, a, b):
    u, v, w = vecs
    _, A = p1_matrices_1d(5)
    ip = InnerProduct(A + np.eye(6))
    scale = (1 + norm(ip, u)) * (1 + norm(ip, v)) * (1 + norm(ip, w)) * (1 + abs(a) + abs(b))
    assert abs(ip.dot(v, w) - ip.dot(w, v)) <= 1e-13 * scale
    assert abs(ip.dot(a * u + b * v, w) - a * ip.dot(u, w) - b * ip.dot(v, w)) <= 1e-12 * scale


def test_norm_nonnegative_and_zero_only_for_zero():
    ip = InnerProduct(p1_matrices_1d(10)[0])
    assert norm(ip, np.zeros(11)) == 0.0
    rng = np.random.default_rng(1)
    for v in rng.standard_normal((10, 11)):
        assert norm(ip, v) == pytest.approx(np.sqrt(ip.dot(v, v)))
        assert norm(ip, v) > 0


class TestFactorization:
    def test_identity(self):
        b = np.arange(5.0)
        assert np.array_equal(factorize(sp.identity(5, format="csr")).solve(b), b)

    def test_manufactured_quadratic(self):
        n = 50
        h = 1.0 / n
        x = np.linspace(0, 1, n + 1)
        A = sp.diags([-np.ones(n), 2 * np.ones(n + 1), -np.ones(n)], [-1, 0, 1]).tolil() / h**2
        for i in (0, n):
            A[i, :] = 0
            A[i, i] = 1
        q = x * (1 - x)
        b = A.tocsr() @ q
        assert np.abs(factorize(A.tocsr()).solve(b) - q).max() <= 1e-10

    def test_multi_equals_single_bitwise(self):
        rng = np.random.default_rng(2)
        A = sp.random(30, 30, density=0.2, random_state=3) + 10 * sp.identity(30)
        F = factorize(A.tocsr())
        rhs = rng.standard_normal((3, 30))
        multi = solve_multi(F, rhs)
        for r, x in zip(rhs, multi):
            assert np.array_equal(F.solve(r), x)

    def test_block_solve_residual(self):
        rng = np.random.default_rng(4)
        A = (sp.random(40, 40, density=0.1, random_state=5) + 5 * sp.identity(40)).tocsr()
        B = rng.standard_normal((40, 6))
        X = factorize(A).solve_block(B)
        assert np.linalg.norm(A @ X - B) <= 1e-10 * np.linalg.norm(B)
        Xt = factorize(A).solve_block(B, transpose=True)
        assert np.linalg.norm(A.T @ Xt - B) <= 1e-10 * np.linalg.norm(B)

    def test_singular(self):
        with pytest.raises(SingularMatrix):
            factorize(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])))


class TestMGS:
    def test_already_orthonormal(self):
        Q = np.linalg.qr(np.random.default_rng(6).standard_normal((8, 4)))[0].T
        out = mgs_orthonormalize(Q)
        assert np.abs(np.abs(out) - np.abs(Q)).max() <= 1e-14

    def test_textbook_pair(self):
        out = mgs_orthonormalize(np.array([[1.0, 0.0], [1.0, 1.0]]))
        assert np.allclose(out, np.eye(2), atol=1e-15)

    def test_random_gram_identity(self):
        out = mgs_orthonormalize(np.random.default_rng(7).standard_normal((5, 10)))
        assert np.abs(out @ out.T - np.eye(5)).max() <= 1e-12

    def test_drops_dependent_vectors(self):
        rng = np.random.default_rng(8)
        a, b = rng.standard_normal((2, 12))
        out = mgs_orthonormalize(np.array([a, b, a + 2 * b, 3 * a]))
        assert out.shape == (2, 12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 50), st.integers(0, 2**32 - 1))
    def test_weighted_gram_identity(self, count, seed):
        dim = 60
        rng = np.random.default_rng(seed)
        M, _ = p1_matrices_1d(dim - 1)
        ip = InnerProduct(M)
        out = mgs_orthonormalize(rng.standard_normal((count, dim)), ip)
        assert out.shape == (count, dim)
        assert np.abs(ip.gram(out, out) - np.eye(count)).max() <= 1e-12


class TestDenseSVD:
    def test_diagonal(self):
        _, S, _ = dense_svd(np.diag([3.0, 1.0]))
        assert np.allclose(S, [3.0, 1.0])

    def test_rotation(self):
        c, s = np.cos(0.3), np.sin(0.3)
        _, S, _ = dense_svd(np.array([[c, -s], [s, c]]))
        assert np.allclose(S, [1.0, 1.0], atol=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, (6, 6), elements=st.floats(-10, 10)))
    def test_reconstruction_and_conventions(self, M):
        U, S, Vt = dense_svd(M)
        assert np.all(np.diff(S) <= 0) and np.all(S >= 0)
        assert np.linalg.norm(U * S @ Vt - M) <= 1e-12 * max(np.linalg.norm(M), 1e-300) + 1e-300
        assert np.abs(U.T @ U - np.eye(6)).max() <= 1e-12
        assert np.abs(Vt @ Vt.T - np.eye(6)).max() <= 1e-12
        assert np.allclose(np.sort(dense_svd(M.T)[1]), np.sort(S), atol=1e-13 * max(S[0], 1.0))
        for row in Vt:
            assert row[np.argmax(np.abs(row))] > 0
