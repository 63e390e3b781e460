"""Backward-Euler fine solvers as affine operators on one time interval."""

import threading

import numpy as np

from .linalg import EUCLIDEAN, DimensionMismatch, factorize

__all__ = ["AffinePropagator", "make_propagators"]


class AffinePropagator:
    """Fine solver ``F_n v = F_n' v + b_n`` over ``[t_start, t_end]``.

    ``n_steps`` backward-Euler steps

        (M + dt A(t_{j+1})) u_{j+1} = M u_j + dt l(t_{j+1})

    are taken with Dirichlet rows and columns eliminated.  The per-step
    factorizations are computed on first use and shared by all later
    applications (single vectors or blocks of row vectors).

    ``ip`` defines the adjoint returned by :meth:`apply_adjoint`.
    """

    def __init__(self, system, t_start, t_end, n_steps, ip=EUCLIDEAN, index=None):
        if n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        self.system = system
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.n_steps = int(n_steps)
        self.ip = ip
        self.index = index
        self.dim = system.n
        self.dt = (self.t_end - self.t_start) / n_steps if n_steps else 0.0
        self._B = system.step_rhs_matrix()
        self._BT = self._B.T.tocsr()
        self._lock = threading.Lock()
        self._factors = None
        self._loads = None
        self._offset = None
        self.counts = {"fine": 0, "adjoint": 0}

    def step_times(self):
        return self.t_start + self.dt * np.arange(1, self.n_steps + 1)

    def _setup(self):
        if self._factors is None:
            with self._lock:
                if self._factors is None:
                    sys = self.system
                    times = self.step_times()
                    self._loads = [sys.step_load(t, self.dt) for t in times]
                    self._factors = [factorize(sys.step_matrix(t, self.dt)) for t in times]
        return self._factors

    def _count(self, key, amount):
        with self._lock:
            self.counts[key] += amount

    def _check(self, V):
        V = np.asarray(V, dtype=float)
        if V.shape[-1] != self.dim or V.ndim > 2:
            raise DimensionMismatch(f"expected vectors of dimension {self.dim}, got shape {V.shape}")
        return V

    def _march(self, v, affine, keep=False):
        factors = self._setup()
        u = v.copy()
        states = [u] if keep else None
        for j, lu in enumerate(factors):
            rhs = self._B @ u
            if affine:
                rhs = rhs + self._loads[j]
            u = lu.solve(rhs)
            if keep:
                states.append(u)
        return states if keep else u

    def apply_full(self, v):
        """Endpoint of the fine solve started from ``v``."""
        v = self._check(v)
        if v.ndim == 2:
            return np.array([self.apply_full(row) for row in v])
        self._count("fine", 1)
        return self._march(v, affine=True)

    def trajectory(self, v):
        """All ``n_steps + 1`` states of the fine solve, starting with ``v``."""
        v = self._check(v)
        self._count("fine", 1)
        return np.array(self._march(v, affine=True, keep=True))

    def offset(self):
        """``b_n = F_n 0``; computed once."""
        if self._offset is None:
            b = self.apply_full(np.zeros(self.dim))
            with self._lock:
                if self._offset is None:
                    self._offset = b
        return self._offset

    def apply_linear(self, V):
        """Homogeneous part ``F_n' v``; ``V`` may be a block of row vectors."""
        V = self._check(V)
        single = V.ndim == 1
        X = V[:, None] if single else V.T
        self._count("fine", X.shape[1])
        factors = self._setup()
        for lu in factors:
            X = lu.solve_block(self._B @ X)
        return X[:, 0] if single else np.ascontiguousarray(X.T)

    def apply_adjoint(self, W):
        """Adjoint ``F_n'^* w`` with respect to ``self.ip``.

        Uses the exact transposes of the per-step matrices in reverse order,
        so ``(F' v, w) = (v, F'^* w)`` holds for any boundary conditions.
        """
        W = self._check(W)
        single = W.ndim == 1
        X = W[:, None] if single else W.T
        self._count("adjoint", X.shape[1])
        factors = self._setup()
        X = self.ip.apply_weight(X.T).T
        for lu in reversed(factors):
            X = self._BT @ lu.solve_block(X, transpose=True)
        X = self.ip.solve_weight(X.T).T
        return X[:, 0] if single else np.ascontiguousarray(X.T)

    def __repr__(self):
        return (
            f"AffinePropagator(n={self.index}, [{self.t_start:g}, {self.t_end:g}], "
            f"steps={self.n_steps}, dim={self.dim})"
        )


def make_propagators(system, problem=None, ip=EUCLIDEAN):
    """Fine propagators ``F_1 .. F_N`` for the intervals of ``problem``."""
    problem = problem or system.problem
    times = problem.interval_times()
    J = problem.steps_per_interval
    return [
        AffinePropagator(system, times[n], times[n + 1], J, ip=ip, index=n + 1)
        for n in range(problem.n_intervals)
    ]
