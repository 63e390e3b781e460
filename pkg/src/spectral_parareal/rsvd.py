"""Randomized and exact truncated SVDs of transfer operators.

The randomized algorithm works matrix-free on an :class:`AffinePropagator`
(or anything with ``dim``, ``apply_linear`` and ``apply_adjoint``):

1. apply ``F'`` to ``R + p`` Gaussian probes,
2. orthonormalize the images (basis ``w``),
3. apply the adjoint ``F'^*`` to ``w``,
4. orthonormalize those (basis ``v``),
5. take the SVD of the small matrix ``M[i, j] = (F'^* w_i, v_j)``,
6. lift the singular vectors back with the bases.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linalg import EUCLIDEAN, dense_svd, mgs_orthonormalize

__all__ = [
    "OracleTooLarge",
    "WeightNotSPD",
    "RsvdConfig",
    "TruncatedSVD",
    "interval_seed",
    "random_probe",
    "randomized_svd",
    "dense_operator_matrix",
    "exact_truncated_svd",
    "ORACLE_CAP",
]

ORACLE_CAP = 2000


class OracleTooLarge(ValueError):
    pass


class WeightNotSPD(ValueError):
    pass


@dataclass(frozen=True)
class RsvdConfig:
    rank: int
    oversampling: int = 0
    power_iterations: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.rank < 0 or self.oversampling < 0 or self.power_iterations < 0:
            raise ValueError("rank, oversampling and power_iterations must be >= 0")

    @property
    def n_probes(self):
        return self.rank + self.oversampling


@dataclass(frozen=True)
class TruncatedSVD:
    """Singular triples ``F' v ~ sum_r left[r] * sigmas[r] * (right[r], v)``.

    ``n_sampled`` is the number of directions the decomposition was computed
    from; when it exceeds ``len(sigmas)`` the missing singular values are
    numerically zero.
    """

    sigmas: np.ndarray
    left: np.ndarray
    right: np.ndarray
    ip: object = EUCLIDEAN
    n_sampled: int = 0

    @property
    def rank(self):
        return len(self.sigmas)

    def truncate(self, rank):
        rank = min(rank, self.rank)
        return TruncatedSVD(
            self.sigmas[:rank].copy(), self.left[:rank].copy(), self.right[:rank].copy(), self.ip, self.n_sampled
        )

    def sigma(self, r):
        """``r``-th singular value (1-based), 0.0 when known to vanish."""
        if r <= self.rank:
            return float(self.sigmas[r - 1])
        if r <= self.n_sampled:
            return 0.0
        raise IndexError(f"singular value {r} not available (sampled {self.n_sampled} directions)")

    def apply(self, v):
        coeffs = self.ip.gram(self.right, v)[:, 0] if self.rank else np.zeros(0)
        return (self.sigmas * coeffs) @ self.left if self.rank else np.zeros_like(v, dtype=float)


def _empty_svd(dim, ip, n_sampled):
    return TruncatedSVD(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim)), ip, n_sampled)


def interval_seed(base_seed, interval):
    """128-bit Philox key for interval ``interval`` derived from ``base_seed``."""
    state = np.random.SeedSequence([int(base_seed) & (2**64 - 1), int(interval)]).generate_state(2, np.uint64)
    return int(state[0]) | (int(state[1]) << 64)


def random_probe(dim, seed, index):
    """Standard normal vector determined by ``(seed, index)`` alone.

    Uses a counter-based generator (Philox); ``index`` selects an
    independent counter block, so probes can be drawn in any order or on
    any worker.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    key = int(seed) % (2**128)
    bitgen = np.random.Philox(key=key, counter=[0, 0, int(index), 0])
    return np.random.Generator(bitgen).standard_normal(dim)


def randomized_svd(op, cfg, ip=EUCLIDEAN, interval=0, keep_all=False):
    """Randomized truncated SVD of the linear operator ``op``.

    Returns at most ``cfg.rank`` triples (all ``rank + p`` computed ones
    when ``keep_all``); directions lost to rank deficiency shorten the
    result.  Probes depend only on ``(cfg.seed, interval, probe index)``.
    """
    k = cfg.n_probes
    if k == 0 or (cfg.rank == 0 and not keep_all):
        return _empty_svd(op.dim, ip, k)
    key = interval_seed(cfg.seed, interval)
    omega = np.array([random_probe(op.dim, key, i) for i in range(k)])

    Y = op.apply_linear(omega)
    for _ in range(cfg.power_iterations):
        Q = mgs_orthonormalize(Y, ip)
        if Q.shape[0] == 0:
            break
        Y = op.apply_linear(op.apply_adjoint(Q))
    W = mgs_orthonormalize(Y, ip)
    if W.shape[0] == 0:
        return _empty_svd(op.dim, ip, k)
    Z = op.apply_adjoint(W)
    V = mgs_orthonormalize(Z, ip)
    if V.shape[0] == 0:
        return _empty_svd(op.dim, ip, k)
    M = ip.gram(Z, V)
    U, S, Vt = dense_svd(M)
    keep = int(np.count_nonzero(S > 0))
    if not keep_all:
        keep = min(keep, cfg.rank)
    left = U[:, :keep].T @ W
    right = Vt[:keep] @ V
    return TruncatedSVD(S[:keep].copy(), left, right, ip, k)


def dense_operator_matrix(op, cap=ORACLE_CAP):
    """Matrix of the linear part of ``op``: column ``j`` is ``F' e_j``."""
    if op.dim > cap:
        raise OracleTooLarge(f"dimension {op.dim} exceeds oracle cap {cap}")
    return np.ascontiguousarray(op.apply_linear(np.eye(op.dim)).T)


def _weight_cholesky(ip):
    W = ip.weight.toarray()
    try:
        return scipy.linalg.cholesky(W, lower=True)
    except np.linalg.LinAlgError as exc:
        raise WeightNotSPD(str(exc)) from exc


def exact_truncated_svd(A, ip=EUCLIDEAN, rank=None, cap=ORACLE_CAP):
    """Generalized SVD of the dense matrix ``A`` in the inner product ``ip``.

    For a weight ``W = L L^T`` the SVD of ``L^T A L^{-T}`` is mapped back
    with ``L^{-T}``.  ``rank=None`` keeps every singular value.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n > cap:
        raise OracleTooLarge(f"dimension {n} exceeds oracle cap {cap}")
    if ip.is_euclidean:
        U, S, Vt = dense_svd(A)
        left, right = U.T, Vt
    else:
        L = _weight_cholesky(ip)
        LtA = L.T @ A
        Ahat = scipy.linalg.solve_triangular(L, LtA.T, lower=True).T
        U, S, Vt = dense_svd(Ahat)
        left = scipy.linalg.solve_triangular(L.T, U, lower=False).T
        right = scipy.linalg.solve_triangular(L.T, Vt.T, lower=False).T
    if rank is not None:
        left, S, right = left[:rank], S[:rank], right[:rank]
    return TruncatedSVD(S.copy(), np.ascontiguousarray(left), np.ascontiguousarray(right), ip, n)
