"""Coarse solvers ``G_n`` for Parareal."""

import math

import numpy as np

from .linalg import mgs_orthonormalize
from .propagators import AffinePropagator
from .rsvd import TruncatedSVD

__all__ = [
    "NormUnavailable",
    "EpsUnavailable",
    "ZeroCoarse",
    "EulerCoarse",
    "SpectralCoarse",
    "fourier_modes",
    "fourier_coarse",
    "apply_G",
    "linear_norm_bound",
    "truncation_eps",
]


class NormUnavailable(ValueError):
    pass


class EpsUnavailable(ValueError):
    pass


class ZeroCoarse:
    """``G_n = 0``, or the constant map ``v -> b_n`` when an offset is given."""

    kind = "zero"
    rank = 0

    def __init__(self, dim, offset=None):
        self.dim = dim
        self.offset = offset

    @property
    def include_offset(self):
        return self.offset is not None

    def apply(self, v):
        if self.offset is not None:
            return self.offset.copy()
        return np.zeros(self.dim)

    def apply_linear(self, V):
        return np.zeros_like(np.asarray(V, dtype=float))


class EulerCoarse:
    """A single backward-Euler step across the whole interval."""

    kind = "euler"

    def __init__(self, system, t_start, t_end, include_offset=True, index=None):
        self.step = AffinePropagator(system, t_start, t_end, 1, index=index)
        self.dim = system.n
        self.include_offset = include_offset

    def apply(self, v):
        if self.include_offset:
            return self.step.apply_full(v)
        return self.step.apply_linear(v)

    def apply_linear(self, V):
        return self.step.apply_linear(V)


class SpectralCoarse:
    """Rank-``R`` map ``v -> sum_r psi_r sigma_r (phi_r, v) + b_n``.

    Covers both SVD-based solvers and a-priori (Fourier) mode choices.
    ``counters`` records inner products and vector accumulations per
    application.
    """

    def __init__(self, svd, offset=None, include_offset=True, kind="spectral"):
        self.svd = svd
        self.dim = svd.left.shape[1]
        self.kind = kind
        self.include_offset = bool(include_offset) and offset is not None
        self.offset = offset if self.include_offset else None
        self.counters = {"applications": 0, "inner_products": 0, "accumulations": 0}

    @property
    def rank(self):
        return self.svd.rank

    @property
    def sigmas(self):
        return self.svd.sigmas

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        R = self.rank
        out = self.offset.copy() if self.offset is not None else np.zeros(self.dim)
        c = self.counters
        c["applications"] += 1
        if R:
            coeffs = self.svd.ip.gram(self.svd.right, v)[:, 0] * self.svd.sigmas
            c["inner_products"] += R
            for r in range(R):
                out += coeffs[r] * self.svd.left[r]
        c["accumulations"] += R + 1
        return out

    def apply_linear(self, V):
        V = np.asarray(V, dtype=float)
        if not self.rank:
            return np.zeros_like(V)
        coeffs = self.svd.ip.gram(self.svd.right, V) * self.svd.sigmas[:, None]
        out = coeffs.T @ self.svd.left
        return out[0] if V.ndim == 1 else out


def apply_G(G, v):
    return G.apply(v)


def linear_norm_bound(G):
    """``||G_n'||`` contribution to delta: the leading singular value."""
    if isinstance(G, ZeroCoarse):
        return 0.0
    if isinstance(G, SpectralCoarse):
        return float(np.max(G.sigmas)) if G.rank else 0.0
    raise NormUnavailable(f"no spectral data for coarse solver of kind {G.kind!r}")


def truncation_eps(G, svd_with_oversample):
    """``sigma_{R+1}`` estimate, i.e. ``||F_n' - G_n'||`` for spectral ``G_n``."""
    R = G.rank if isinstance(G, SpectralCoarse) else 0
    try:
        return svd_with_oversample.sigma(R + 1)
    except IndexError as exc:
        raise EpsUnavailable(str(exc)) from None


def fourier_modes(system, count, interval_length, ip):
    """Vertex-interpolated Fourier modes and a-priori decay factors.

    Dirichlet problems use products of ``sqrt(2) sin(m pi x)``, all others
    products of cosines (the constant first).  Modes are ordered by
    ``|m|^2`` and orthonormalized in ``ip``; the singular values are
    ``exp(-|m|^2 pi^2 dT)``.
    """
    x = system.vertices
    dim = x.shape[1]
    dirichlet = len(system.dirichlet) > 0
    start = 1 if dirichlet else 0
    top = start + count + 1
    idx = sorted(
        (m for m in np.ndindex(*(top,) * dim) if min(m) >= start),
        key=lambda m: (sum(k * k for k in m), m),
    )[:count]
    modes, sigmas = [], []
    for m in idx:
        v = np.ones(x.shape[0])
        for axis, k in enumerate(m):
            if dirichlet:
                v = v * math.sqrt(2) * np.sin(k * math.pi * x[:, axis])
            else:
                v = v * (math.sqrt(2) * np.cos(k * math.pi * x[:, axis]) if k else 1.0)
        modes.append(system.constrain_vector(v))
        sigmas.append(math.exp(-sum(k * k for k in m) * math.pi**2 * interval_length))
    if not modes:
        return np.zeros((0, x.shape[0])), np.zeros(0)
    basis = mgs_orthonormalize(np.array(modes), ip)
    return basis, np.array(sigmas[: basis.shape[0]])


def fourier_coarse(system, count, interval_length, ip, offset=None, include_offset=False, sigmas=None):
    """Spectral coarse solver built from a-priori Fourier modes."""
    modes, default_sigmas = fourier_modes(system, count, interval_length, ip)
    sig = default_sigmas if sigmas is None else np.asarray(sigmas, dtype=float)[: modes.shape[0]]
    svd = TruncatedSVD(sig, modes, modes.copy(), ip, len(sig))
    return SpectralCoarse(svd, offset, include_offset, kind="fourier")
