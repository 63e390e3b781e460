"""Parareal iteration, sequential reference and error bounds.

The iteration is

    u^{k+1}_{n+1} = F_{n+1} u^k_n + G_{n+1} u^{k+1}_n - G_{n+1} u^k_n,

with ``u^k_0 = u_0`` and ``u^0_{n+1} = G_{n+1} u^0_n``.  Fine solvers need
``apply_full`` (and ``trajectory`` for reporting); coarse solvers need
``apply``.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import EUCLIDEAN

__all__ = [
    "NotSelfAdjoint",
    "PararealState",
    "BoundsInput",
    "sequential_reference",
    "initialize",
    "iterate",
    "apriori_bound",
    "aposteriori_bound",
    "efficiency",
    "SubspaceReport",
    "invariant_subspace_check",
    "FLOOR",
]

# errors below this are treated as floating-point noise when judging bounds
FLOOR = 1e-13


class NotSelfAdjoint(ValueError):
    pass


def _map(executor, fn, items):
    if executor is None:
        return [fn(x) for x in items]
    return list(executor.map(fn, items))


def sequential_reference(u0, fine, trajectories=False, executor=None):
    """Fine sequence ``u_{n+1} = F_{n+1} u_n``.

    Returns the array of ``u_0 .. u_N`` (rows) and, with ``trajectories``,
    the list of per-interval fine trajectories.
    """
    U = [np.asarray(u0, dtype=float)]
    trajs = []
    for F in fine:
        if trajectories:
            tr = F.trajectory(U[-1])
            trajs.append(tr)
            U.append(tr[-1])
        else:
            U.append(F.apply_full(U[-1]))
    U = np.array(U)
    return (U, trajs) if trajectories else U


@dataclass
class PararealState:
    """Iterate ``k``: ``u[n] = u^k_n`` for ``n = 0..N``.

    ``coarse_values[n]`` caches ``G_{n+1} u^k_n`` for the next correction;
    ``update_norms[n-1] = ||u^k_n - u^{k-1}_n||`` (absent for ``k = 0``).
    """

    k: int
    u: np.ndarray
    coarse_values: np.ndarray
    previous: Optional[np.ndarray] = None
    update_norms: Optional[np.ndarray] = None

    @property
    def N(self):
        return self.u.shape[0] - 1


def initialize(u0, coarse):
    """Sequential coarse sweep ``u^0_{n+1} = G_{n+1} u^0_n``."""
    u0 = np.asarray(u0, dtype=float)
    U = np.empty((len(coarse) + 1, u0.size))
    U[0] = u0
    for n, G in enumerate(coarse):
        U[n + 1] = G.apply(U[n])
    return PararealState(0, U, U[1:].copy())


def iterate(state, fine, coarse, fine_values=None, executor=None, ip=EUCLIDEAN):
    """One Parareal iteration.

    ``fine_values[n]`` may supply the already computed ``F_{n+1} u^k_n``;
    otherwise the ``N`` fine solves run as independent tasks on
    ``executor``.  Update norms are measured in ``ip``.
    """
    U = state.u
    N = state.N
    if fine_values is None:
        fine_values = _map(executor, lambda n: fine[n].apply_full(U[n]), range(N))
    new = np.empty_like(U)
    new[0] = U[0]
    g_new = np.empty_like(state.coarse_values)
    for n in range(N):
        g = coarse[n].apply(new[n])
        g_new[n] = g
        new[n + 1] = fine_values[n] + (g - state.coarse_values[n])
    updates = ip.norms(new[1:] - U[1:])
    return PararealState(state.k + 1, new, g_new, previous=U, update_norms=updates)


# ---------------------------------------------------------------------------
# bounds


@dataclass(frozen=True)
class BoundsInput:
    """Constants of the convergence bounds.

    ``offset_norms[m] = ||b_m||`` for ``m = 0..N`` with ``b_0 = u_0``.
    ``coarse_offset`` tells whether the coarse solvers carry ``b_n``; without
    it the initial error picks up the full fine offsets.
    """

    delta: float
    eps: float
    offset_norms: np.ndarray
    coarse_offset: bool = True

    def __post_init__(self):
        if self.delta < 0 or self.eps < 0:
            raise ValueError("delta and eps must be non-negative")

    @property
    def N(self):
        return len(self.offset_norms) - 1


def _log(x):
    return math.log(x) if x > 0 else -math.inf


def _log_binom(n, k):
    if k < 0 or k > n:
        return -math.inf
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _log_pow(base, exponent):
    if exponent == 0:
        return 0.0
    return exponent * _log(base)


def _sum_exp(logs):
    logs = [x for x in logs if x > -math.inf]
    if not logs:
        return 0.0
    top = max(logs)
    total = sum(math.exp(x - top) for x in logs)
    try:
        return math.exp(top + math.log(total))
    except OverflowError:
        return math.inf


def _initial_error_bound(bi, n):
    d, e, b = bi.delta, bi.eps, bi.offset_norms
    if bi.coarse_offset:
        return sum(min(2 * d, (n - m) * e) * d ** (n - m - 1) * b[m] for m in range(n))
    head = min(2 * d, n * e) * d ** (n - 1) * b[0]
    return head + sum(d ** (n - m) * b[m] for m in range(1, n + 1))


def apriori_bound(bi, n, k):
    """A-priori bound on ``||e^k_n||``.

    ``k = 0``: ``sum_m min(2 delta, (n-m) eps) delta^(n-m-1) ||b_m||``.
    ``k >= 1``: ``2 eps^k sum_{m=0}^{n-k-1} C(n-m, k) delta^(n-m-k) ||b_m||``.
    Without coarse offsets the ``k >= 1`` bound is propagated from the
    initial-error bound with the binomial recursion instead.
    """
    if n < 1 or n > bi.N:
        raise IndexError(f"time index {n} outside 1..{bi.N}")
    if k == 0:
        return _initial_error_bound(bi, n)
    if k >= n or bi.eps == 0:
        return 0.0
    d, e = bi.delta, bi.eps
    if bi.coarse_offset:
        logs = [
            math.log(2.0) + k * _log(e) + _log_binom(n - m, k) + _log_pow(d, n - m - k) + _log(bi.offset_norms[m])
            for m in range(n - k)
        ]
    else:
        logs = [
            k * _log(e) + _log_binom(n - m, k - 1) + _log_pow(d, n - m - k) + _log(_initial_error_bound(bi, m))
            for m in range(1, n - k + 1)
        ]
    return _sum_exp(logs)


def aposteriori_bound(bi, update_norms):
    """A-posteriori bounds from the updates ``||u^k_m - u^{k-1}_m||``.

    Returns ``(per_n, sup)``: ``per_n[n-1] = eps sum_{m<n} delta^(n-m-1)
    ||update_m||`` for ``n = 1..N`` and ``sup = eps / (1 - delta) *
    max ||update||``, the latter ``None`` unless ``delta < 1``.
    """
    upd = np.asarray(update_norms, dtype=float)
    N = upd.size
    per_n = np.zeros(N)
    acc = 0.0
    for n in range(2, N + 1):
        acc = acc * bi.delta + upd[n - 2]
        per_n[n - 1] = bi.eps * acc
    sup = bi.eps / (1.0 - bi.delta) * float(upd.max(initial=0.0)) if bi.delta < 1 else None
    return per_n, sup


def efficiency(max_error, apost_per_n):
    """``eta^k`` = max-over-time error / max over ``1 <= n < N`` of the bound.

    Returns ``(eta, below_floor)``.
    """
    denom = float(np.max(np.asarray(apost_per_n)[:-1], initial=0.0))
    if max_error == 0:
        eta = 0.0
    elif denom == 0:
        eta = math.inf
    else:
        eta = max_error / denom
    return eta, bool(max_error < FLOOR)


# ---------------------------------------------------------------------------
# invariant-subspace check


class _DenseAffine:
    def __init__(self, A, b):
        self.A, self.b = A, b

    def apply_full(self, v):
        return self.A @ v + self.b

    apply = apply_full


@dataclass
class SubspaceReport:
    errors: np.ndarray
    predicted: np.ndarray
    max_deviation: float
    sigma_next: float
    contraction_ratios: list = field(default_factory=list)
    identity_ok: bool = False
    contraction_ok: bool = False

    @property
    def ok(self):
        return self.identity_ok and self.contraction_ok


def invariant_subspace_check(F_dense, R, N, K, seed=0, tol=1e-10):
    """Run Parareal with ``G' = P F' P`` (top-``R`` spectral projection).

    Compares every error ``e^k_n`` with ``(F' - G')^k e^0_{n-k}`` (zero for
    ``n <= k``) and checks ``max_n ||e^k_n|| <= sigma_{R+1}^k max_{n <= N-k}
    ||e^0_n||``.
    """
    F = np.asarray(F_dense, dtype=float)
    scale = max(np.abs(F).max(), 1e-300)
    if F.shape[0] != F.shape[1] or np.abs(F - F.T).max() > 1e-12 * scale:
        raise NotSelfAdjoint("invariant-subspace check needs a symmetric operator")
    dim = F.shape[0]
    lam, Q = np.linalg.eigh(F)
    order = np.argsort(-np.abs(lam), kind="stable")
    lam, Q = lam[order], Q[:, order]
    P = Q[:, :R] @ Q[:, :R].T
    G = P @ F @ P
    sigma_next = float(abs(lam[R])) if R < dim else 0.0

    rng = np.random.default_rng(seed)
    u0 = rng.standard_normal(dim)
    offsets = rng.standard_normal((N, dim))
    fine = [_DenseAffine(F, offsets[n]) for n in range(N)]
    coarse = [_DenseAffine(G, offsets[n]) for n in range(N)]
    ref = sequential_reference(u0, fine)

    state = initialize(u0, coarse)
    errors = [state.u - ref]
    for _ in range(K):
        state = iterate(state, fine, coarse)
        errors.append(state.u - ref)
    errors = np.array(errors)

    D = F - G
    predicted = np.zeros_like(errors)
    for k in range(K + 1):
        Dk = np.linalg.matrix_power(D, k)
        for n in range(k + 1, N + 1):
            predicted[k, n] = Dk @ errors[0, n - k]
    deviation = float(np.abs(errors - predicted).max())

    e0 = np.linalg.norm(errors[0], axis=1)
    ratios = []
    ok = True
    for k in range(1, K + 1):
        lhs = float(np.linalg.norm(errors[k, 1:], axis=1).max())
        ref_max = float(e0[1 : N - k + 1].max()) if N - k >= 1 else 0.0
        rhs = sigma_next**k * ref_max
        ratios.append(lhs / rhs if rhs > 0 else (0.0 if lhs <= tol else math.inf))
        ok &= lhs <= rhs * (1 + 1e-10) + tol
    return SubspaceReport(errors, predicted, deviation, sigma_next, ratios, deviation <= tol, ok)
