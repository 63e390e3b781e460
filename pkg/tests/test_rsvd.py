import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_parareal.fem import assemble, build_problem
from spectral_parareal.linalg import EUCLIDEAN, InnerProduct
from spectral_parareal.propagators import AffinePropagator, make_propagators
from spectral_parareal.rsvd import (
    OracleTooLarge,
    RsvdConfig,
    TruncatedSVD,
    WeightNotSPD,
    dense_operator_matrix,
    exact_truncated_svd,
    interval_seed,
    random_probe,
    randomized_svd,
)

from oracles import DenseOperator, discrete_dirichlet_sigma, p1_matrices_1d, weighted_singular_values


@pytest.fixture(scope="module")
def exp1_fine():
    p = build_problem("exp1_dirichlet", T=8)
    s = assemble(p)
    return s, make_propagators(s, p)[0]


class TestProbes:
    def test_deterministic(self):
        assert np.array_equal(random_probe(50, 7, 3), random_probe(50, 7, 3))

    def test_index_changes_vector(self):
        assert not np.array_equal(random_probe(50, 7, 3), random_probe(50, 7, 4))

    def test_standard_normal_moments(self):
        v = random_probe(10_000, 123, 0)
        assert abs(v.mean()) <= 0.05
        assert abs(v.var() - 1) <= 0.05

    def test_interval_keys_differ(self):
        assert interval_seed(0, 1) != interval_seed(0, 2)
        assert interval_seed(5, 1) == interval_seed(5, 1)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            random_probe(0, 1, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        RsvdConfig(rank=-1)
    assert RsvdConfig(3, 2).n_probes == 5


def test_rank_one_operator_recovered():
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal((2, 20))
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    op = DenseOperator(2.5 * np.outer(v, u))
    svd = randomized_svd(op, RsvdConfig(1, 2, seed=1))
    assert svd.sigmas[0] == pytest.approx(2.5, rel=1e-10)
    assert abs(abs(svd.left[0] @ v) - 1) <= 1e-10
    assert abs(abs(svd.right[0] @ u) - 1) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31))
def test_full_rank_matches_dense(dim, seed):
    rng = np.random.default_rng(seed)
    Q1, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    Q2, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    sig = np.geomspace(1.0, 1e-3, dim)
    A = Q1 @ np.diag(sig) @ Q2.T
    svd = randomized_svd(DenseOperator(A), RsvdConfig(dim, 0, seed=seed))
    assert np.allclose(svd.sigmas, sig, rtol=1e-9)


def test_singular_triples_relation():
    # F' phi_r = sigma_r psi_r and F'^* psi_r = sigma_r phi_r
    rng = np.random.default_rng(3)
    M, _ = p1_matrices_1d(24)
    ip = InnerProduct(M)
    # rank 8, so 4 + 6 probes capture the range exactly
    A = rng.standard_normal((25, 8)) @ rng.standard_normal((8, 25))
    op = DenseOperator(A, W=M)
    svd = randomized_svd(op, RsvdConfig(4, 6, seed=2), ip)
    assert np.allclose(svd.sigmas, weighted_singular_values(A, M)[:4], rtol=1e-10)
    for s, psi, phi in zip(svd.sigmas, svd.left, svd.right):
        assert np.linalg.norm(A @ phi - s * psi) <= 1e-9 * svd.sigmas[0]
        assert np.linalg.norm(op.apply_adjoint(psi) - s * phi) <= 1e-9 * svd.sigmas[0]
    assert np.abs(ip.gram(svd.left, svd.left) - np.eye(4)).max() <= 1e-10
    assert np.abs(ip.gram(svd.right, svd.right) - np.eye(4)).max() <= 1e-10


def test_exp1_matches_discrete_oracle(exp1_fine):
    s, F = exp1_fine
    exact = exact_truncated_svd(dense_operator_matrix(F), rank=3)
    for r in (1, 2):
        assert exact.sigma(r) == pytest.approx(discrete_dirichlet_sigma(r, 0.01, 0.01, 80), rel=1e-6)
    rand = randomized_svd(F, RsvdConfig(3, 1, seed=0))
    for r in range(1, rand.rank + 1):
        if exact.sigma(r) > 1e-10 * exact.sigma(1):
            assert exact.sigma(r) / 2 <= rand.sigma(r) <= 2 * exact.sigma(r)
    # continuum rate of the leading mode, exp(-pi^2 * 0.8) = 3.73e-4
    assert 3.73e-4 / 1.5 <= rand.sigma(1) <= 3.73e-4 * 1.5


def test_interlacing_and_determinism():
    p = build_problem("exp2")
    s = assemble(p)
    for ip in (EUCLIDEAN, InnerProduct(s.l2_weight(), name="l2")):
        F = make_propagators(s, p, ip=ip)[4]
        exact = exact_truncated_svd(dense_operator_matrix(F), ip)
        for seed in range(5):
            a = randomized_svd(F, RsvdConfig(5, 1, seed=seed), ip, interval=5)
            b = randomized_svd(F, RsvdConfig(5, 1, seed=seed), ip, interval=5)
            assert np.array_equal(a.sigmas, b.sigmas) and np.array_equal(a.left, b.left)
            assert np.all(a.sigmas <= exact.sigmas[: a.rank] + 1e-10)


def test_power_iterations_sharpen_estimates():
    rng = np.random.default_rng(5)
    Q1, _ = np.linalg.qr(rng.standard_normal((40, 40)))
    Q2, _ = np.linalg.qr(rng.standard_normal((40, 40)))
    sig = 1.0 / np.arange(1, 41)
    A = Q1 @ np.diag(sig) @ Q2.T
    err = []
    for q in (0, 2):
        svd = randomized_svd(DenseOperator(A), RsvdConfig(3, 1, q, seed=9))
        assert np.all(svd.sigmas <= sig[:3] + 1e-10)
        err.append(np.abs(svd.sigmas - sig[:3]).max())
    assert err[1] < err[0]


def test_zero_operator_gives_empty_result():
    svd = randomized_svd(DenseOperator(np.zeros((6, 6))), RsvdConfig(2, 1))
    assert svd.rank == 0 and svd.n_sampled == 3
    assert svd.sigma(2) == 0.0
    with pytest.raises(IndexError):
        svd.sigma(4)


def test_keep_all_returns_oversampled_direction():
    A = np.diag(np.geomspace(1, 1e-4, 10))
    svd = randomized_svd(DenseOperator(A), RsvdConfig(2, 2, seed=0), keep_all=True)
    assert svd.rank == 4
    assert svd.truncate(2).rank == 2
    assert svd.sigma(3) <= A[2, 2] + 1e-10


class TestDenseOperatorMatrix:
    def test_zero_steps_is_identity(self):
        s = assemble(build_problem("exp2"))
        F = AffinePropagator(s, 0.0, 0.0, 0)
        assert np.array_equal(dense_operator_matrix(F), np.eye(s.n))

    def test_linearity_and_adjoint(self):
        p = build_problem("exp2")
        s = assemble(p)
        ip = InnerProduct(s.l2_weight(), name="l2")
        F = make_propagators(s, p, ip=ip)[0]
        A = dense_operator_matrix(F)
        v = np.random.default_rng(1).standard_normal(s.n)
        assert np.allclose(A @ v, F.apply_linear(v), rtol=1e-12, atol=1e-12)
        W = ip.weight.toarray()
        adj = F.apply_adjoint(np.eye(s.n)).T
        assert np.allclose(adj, np.linalg.solve(W, A.T @ W), atol=1e-11)

    def test_cap(self):
        s = assemble(build_problem("exp2"))
        with pytest.raises(OracleTooLarge):
            dense_operator_matrix(AffinePropagator(s, 0, 0.1, 1), cap=50)


class TestExactSVD:
    def test_diagonal(self):
        svd = exact_truncated_svd(np.diag([3.0, 1.0]), rank=1)
        assert np.allclose(svd.sigmas, [3.0])

    def test_identity_weight(self):
        A = np.random.default_rng(2).standard_normal((8, 8))
        a = exact_truncated_svd(A)
        b = exact_truncated_svd(A, InnerProduct(sp.identity(8)))
        assert np.allclose(a.sigmas, b.sigmas, rtol=1e-13)

    def test_self_adjoint_eigen_oracle(self):
        M, K = p1_matrices_1d(30)
        S = K + 3 * M
        T = np.linalg.solve(M, S)  # self-adjoint in the M inner product
        lam = scipy.linalg.eigh(S, M, eigvals_only=True)
        svd = exact_truncated_svd(T, InnerProduct(M))
        assert np.allclose(svd.sigmas, np.sort(np.abs(lam))[::-1], rtol=1e-11)

    def test_weighted_against_independent_oracle(self):
        rng = np.random.default_rng(3)
        M, _ = p1_matrices_1d(12)
        A = rng.standard_normal((13, 13))
        svd = exact_truncated_svd(A, InnerProduct(M))
        assert np.allclose(svd.sigmas, weighted_singular_values(A, M), rtol=1e-10)
        ip = InnerProduct(M)
        assert np.abs(ip.gram(svd.left, svd.left) - np.eye(13)).max() <= 1e-10
        assert np.abs(ip.gram(svd.right, svd.right) - np.eye(13)).max() <= 1e-10

    def test_weight_not_spd(self):
        bad = InnerProduct(sp.diags([1.0, -1.0]), check=False)
        with pytest.raises(WeightNotSPD):
            exact_truncated_svd(np.eye(2), bad)

    def test_cap(self):
        with pytest.raises(OracleTooLarge):
            exact_truncated_svd(np.eye(5), cap=4)


def test_truncated_svd_apply():
    svd = TruncatedSVD(np.array([2.0]), np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]]), EUCLIDEAN, 1)
    assert np.allclose(svd.apply(np.array([3.0, 5.0])), [0.0, 6.0])
