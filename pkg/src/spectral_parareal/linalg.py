"""Linear algebra kernels: inner products, sparse LU, Gram-Schmidt, small SVDs.

Vectors are 1D float64 arrays; collections of vectors are 2D arrays whose
*rows* are the vectors (shape ``(count, dim)``).  Sparse matrices are
``scipy.sparse.csr_matrix``.
"""

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "DimensionMismatch",
    "SingularMatrix",
    "SvdNoConvergence",
    "InnerProduct",
    "EUCLIDEAN",
    "Factorization",
    "factorize",
    "solve_multi",
    "dot",
    "norm",
    "mgs_orthonormalize",
    "dense_svd",
    "as_csr",
]

MGS_DROPTOL = 1e-12


class DimensionMismatch(ValueError):
    pass


class SingularMatrix(ArithmeticError):
    pass


class SvdNoConvergence(ArithmeticError):
    pass


def as_csr(A):
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def _as_block(vectors):
    V = np.asarray(vectors, dtype=float)
    if V.ndim == 1:
        V = V[np.newaxis, :]
    return V


class InnerProduct:
    """Euclidean or weight-matrix inner product ``(v, w) = v^T W w``.

    Parameters
    ----------
    weight : sparse or dense matrix, optional
        Symmetric positive definite weight.  ``None`` gives the Euclidean
        product.
    name : str
        Label used in reports (``"euclidean"``, ``"l2"``, ...).
    check : bool
        Probe the weight for symmetry and positivity on random vectors.
    """

    def __init__(self, weight=None, name=None, check=True):
        if weight is not None:
            weight = as_csr(weight)
            if weight.shape[0] != weight.shape[1]:
                raise DimensionMismatch(f"weight must be square, got {weight.shape}")
        self.weight = weight
        self.name = name or ("euclidean" if weight is None else "weighted")
        self._weight_lu = None
        if check and weight is not None:
            self._probe()

    @property
    def is_euclidean(self):
        return self.weight is None

    @property
    def dim(self):
        return None if self.weight is None else self.weight.shape[0]

    def _probe(self, count=4):
        rng = np.random.default_rng(12345)
        W = self.weight
        asym = abs(W - W.T).max() if W.nnz else 0.0
        if asym > 1e-12 * max(abs(W).max(), 1e-300):
            raise ValueError("inner-product weight is not symmetric")
        for _ in range(count):
            v = rng.standard_normal(W.shape[0])
            if not v @ (W @ v) > 0:
                raise ValueError("inner-product weight is not positive definite")

    def _check(self, n):
        if self.weight is not None and self.weight.shape[0] != n:
            raise DimensionMismatch(
                f"vector dimension {n} does not match weight dimension {self.weight.shape[0]}"
            )

    def apply_weight(self, V):
        """Return ``W v`` (row-wise for blocks)."""
        if self.weight is None:
            return np.array(V, dtype=float, copy=True)
        V = np.asarray(V, dtype=float)
        self._check(V.shape[-1])
        return np.asarray((self.weight @ V.T).T)

    def solve_weight(self, V):
        """Return ``W^{-1} v`` (row-wise for blocks)."""
        if self.weight is None:
            return np.array(V, dtype=float, copy=True)
        if self._weight_lu is None:
            self._weight_lu = factorize(self.weight)
        V = np.asarray(V, dtype=float)
        if V.ndim == 1:
            return self._weight_lu.solve(V)
        return self._weight_lu.solve_block(V.T).T

    def gram(self, V, W):
        """Matrix of pairwise products ``G[i, j] = (V[i], W[j])``."""
        V, W = _as_block(V), _as_block(W)
        if V.shape[1] != W.shape[1]:
            raise DimensionMismatch(f"dimensions {V.shape[1]} and {W.shape[1]} differ")
        self._check(V.shape[1])
        return V @ self.apply_weight(W).T

    def dot(self, v, w):
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        if v.shape != w.shape:
            raise DimensionMismatch(f"shapes {v.shape} and {w.shape} differ")
        self._check(v.shape[-1])
        if self.weight is None:
            return float(v @ w)
        return float(v @ (self.weight @ w))

    def norm(self, v):
        return float(np.sqrt(max(self.dot(v, v), 0.0)))

    def norms(self, V):
        V = _as_block(V)
        self._check(V.shape[1])
        WV = self.apply_weight(V)
        return np.sqrt(np.maximum(np.einsum("ij,ij->i", V, WV), 0.0))

    def __repr__(self):
        return f"InnerProduct({self.name!r})"


EUCLIDEAN = InnerProduct()


def dot(ip, v, w):
    return ip.dot(v, w)


def norm(ip, v):
    return ip.norm(v)


class Factorization:
    """Sparse LU factorization (SuperLU, COLAMD ordering) of a square matrix.

    ``solve`` and ``solve_multi`` are bitwise consistent with each other.
    ``solve_block`` uses SuperLU's blocked kernel on a 2D right-hand side;
    it agrees with ``solve_multi`` to rounding but not necessarily bitwise.
    """

    def __init__(self, A):
        A = sp.csc_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        try:
            self._lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc
        pivots = np.abs(self._lu.U.diagonal())
        if pivots.size and pivots.min() <= 1e-14 * pivots.max():
            raise SingularMatrix(
                f"pivot ratio {pivots.min() / pivots.max():.3e} below threshold"
            )

    def solve(self, b, transpose=False):
        b = np.asarray(b, dtype=float)
        if b.shape != (self.shape[0],):
            raise DimensionMismatch(f"rhs shape {b.shape} does not match {self.shape}")
        return self._lu.solve(b, trans="T" if transpose else "N")

    def solve_multi(self, rhs, transpose=False):
        return [self.solve(b, transpose) for b in rhs]

    def solve_block(self, B, transpose=False):
        """Solve for all columns of ``B`` at once."""
        B = np.asfortranarray(B, dtype=float)
        if B.ndim == 1:
            return self.solve(B, transpose)
        if B.shape[0] != self.shape[0]:
            raise DimensionMismatch(f"rhs shape {B.shape} does not match {self.shape}")
        if B.shape[1] == 0:
            return B.copy()
        return self._lu.solve(B, trans="T" if transpose else "N")


def factorize(A):
    return Factorization(A)


def solve_multi(F, rhs):
    return F.solve_multi(rhs)


def mgs_orthonormalize(vectors, ip=EUCLIDEAN, droptol=MGS_DROPTOL, passes=2):
    """Orthonormalize ``vectors`` with modified Gram-Schmidt in ``ip``.

    Each vector is projected against the already accepted ones ``passes``
    times (re-orthogonalization).  A vector whose remaining norm is below
    ``droptol`` times its original norm is dropped, so the result may be
    shorter than the input.

    Returns
    -------
    ndarray, shape (rank, dim)
    """
    V = np.array(_as_block(vectors), dtype=float, copy=True)
    if V.shape[0] == 0:
        raise ValueError("mgs_orthonormalize needs at least one vector")
    original = ip.norms(V)
    basis = []
    for i in range(V.shape[0]):
        v = V[i]
        if not original[i] > 0:
            continue
        for _ in range(passes):
            for q in basis:
                v = v - ip.dot(q, v) * q
        nv = ip.norm(v)
        if nv <= droptol * original[i]:
            continue
        basis.append(v / nv)
    if not basis:
        return np.zeros((0, V.shape[1]))
    return np.array(basis)


def dense_svd(M):
    """SVD ``M = U diag(S) Vt`` with a deterministic sign convention.

    The largest-magnitude entry of every right-singular vector (row of
    ``Vt``) is made positive; the matching column of ``U`` is flipped too.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {M.shape}")
    if min(M.shape) == 0:
        k = min(M.shape)
        return np.zeros((M.shape[0], k)), np.zeros(k), np.zeros((k, M.shape[1]))
    try:
        U, S, Vt = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        try:
            U, S, Vt = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise SvdNoConvergence(str(exc)) from exc
    idx = np.argmax(np.abs(Vt), axis=1)
    signs = np.sign(Vt[np.arange(Vt.shape[0]), idx])
    signs[signs == 0] = 1.0
    return U * signs, S, Vt * signs[:, np.newaxis]
