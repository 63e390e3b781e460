"""P1 finite elements for the heat-equation test problems.

Three procedurally generated meshes are supported: the unit interval, a
criss-cross triangulation of the unit square (four triangles per grid cell,
meeting in the cell centre) and a Kuhn tetrahedralization of the unit cube.
"""

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.integrate
import scipy.sparse as sp

from .linalg import as_csr

__all__ = [
    "Mesh",
    "interval_mesh",
    "square_mesh",
    "cube_mesh",
    "DirichletHomogeneous",
    "NeumannHomogeneous",
    "NeumannInflow",
    "Robin",
    "ProblemSpec",
    "AssembledSystem",
    "PRESETS",
    "build_problem",
    "assemble",
    "exp1_source",
    "exp1_initial",
    "exp4_inflow",
    "fourier_reference",
]


# ---------------------------------------------------------------------------
# meshes


@dataclass(frozen=True)
class Mesh:
    """Simplicial mesh.

    ``cells`` holds ``dim + 1`` vertex indices per element, positively
    oriented.  ``boundary`` maps a marker name to an array of facets
    (``dim`` vertex indices each); every boundary facet appears under
    exactly one marker.
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    boundary: dict

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    def cell_coords(self):
        return self.vertices[self.cells]

    def centroids(self):
        return self.cell_coords().mean(axis=1)

    def boundary_vertices(self, markers):
        idx = [self.boundary[m].ravel() for m in markers]
        if not idx:
            return np.zeros(0, dtype=int)
        return np.unique(np.concatenate(idx))


def _signed_volumes(coords):
    d = coords.shape[1] - 1
    edges = coords[:, 1:, :] - coords[:, :1, :]
    return np.linalg.det(edges) / math.factorial(d)


def _orient(vertices, cells):
    vol = _signed_volumes(vertices[cells])
    cells = cells.copy()
    neg = vol < 0
    cells[neg, 0], cells[neg, 1] = cells[neg, 1], cells[neg, 0].copy()
    return cells


def interval_mesh(n):
    if n <= 0:
        raise ValueError(f"number of elements must be positive, got {n}")
    x = np.linspace(0.0, 1.0, n + 1)[:, np.newaxis]
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    boundary = {"left": np.array([[0]]), "right": np.array([[n]])}
    return Mesh(1, x, cells, boundary)


def square_mesh(n):
    """Criss-cross triangulation of the unit square with ``4 n^2`` triangles."""
    if n <= 0:
        raise ValueError(f"mesh_n must be positive, got {n}")
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    grid = np.column_stack([X.ravel(), Y.ravel()])
    c = (g[:-1] + g[1:]) / 2
    CX, CY = np.meshgrid(c, c, indexing="ij")
    centres = np.column_stack([CX.ravel(), CY.ravel()])
    vertices = np.vstack([grid, centres])

    def gid(i, j):
        return i * (n + 1) + j

    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    I, J = I.ravel(), J.ravel()
    bl, br, tr, tl = gid(I, J), gid(I + 1, J), gid(I + 1, J + 1), gid(I, J + 1)
    ce = (n + 1) ** 2 + I * n + J
    cells = np.vstack(
        [
            np.column_stack([bl, br, ce]),
            np.column_stack([br, tr, ce]),
            np.column_stack([tr, tl, ce]),
            np.column_stack([tl, bl, ce]),
        ]
    )
    cells = _orient(vertices, cells)
    k = np.arange(n)
    edges = np.vstack(
        [
            np.column_stack([gid(k, 0), gid(k + 1, 0)]),
            np.column_stack([gid(n, k), gid(n, k + 1)]),
            np.column_stack([gid(k, n), gid(k + 1, n)]),
            np.column_stack([gid(0, k), gid(0, k + 1)]),
        ]
    )
    return Mesh(2, vertices, cells, {"boundary": edges})


def cube_mesh(n):
    """Kuhn triangulation of the unit cube (six tetrahedra per grid cell).

    Boundary markers: ``bottom`` (z = 0), ``top`` (z = 1), ``sides``.
    """
    if n <= 0:
        raise ValueError(f"mesh_n must be positive, got {n}")
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    I, J, K = (a.ravel() for a in np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij"))
    cells = []
    for perm in itertools.permutations(range(3)):
        offs = np.zeros(3, dtype=int)
        path = [vid(I, J, K)]
        for axis in perm:
            offs[axis] += 1
            path.append(vid(I + offs[0], J + offs[1], K + offs[2]))
        cells.append(np.column_stack(path))
    cells = _orient(vertices, np.vstack(cells))

    faces = np.vstack([cells[:, [1, 2, 3]], cells[:, [0, 2, 3]], cells[:, [0, 1, 3]], cells[:, [0, 1, 2]]])
    fc = vertices[faces]
    on_plane = lambda axis, val: np.all(np.isclose(fc[:, :, axis], val), axis=1)  # noqa: E731
    bottom = on_plane(2, 0.0)
    top = on_plane(2, 1.0)
    sides = np.zeros(len(faces), dtype=bool)
    for axis in (0, 1):
        sides |= on_plane(axis, 0.0) | on_plane(axis, 1.0)
    sides &= ~(bottom | top)
    return Mesh(3, vertices, cells, {"bottom": faces[bottom], "top": faces[top], "sides": faces[sides]})


# ---------------------------------------------------------------------------
# boundary conditions and problems


@dataclass(frozen=True)
class DirichletHomogeneous:
    pass


@dataclass(frozen=True)
class NeumannHomogeneous:
    pass


@dataclass(frozen=True)
class NeumannInflow:
    """Prescribed inflow ``-d grad(u) . n = -g(t)``."""

    g: Callable[[float], float]


@dataclass(frozen=True)
class Robin:
    """Cooling condition ``-d grad(u) . n = alpha(t) u``."""

    alpha: Callable[[float], float]


@dataclass(frozen=True)
class ProblemSpec:
    """A linear heat equation ``u_t - div(d grad u) = f`` on a mesh.

    ``diffusivity(x, t)`` and ``source(x, t)`` take points of shape
    ``(k, dim)``; ``initial(x)`` returns vertex values.  ``source=None``
    means ``f = 0``.
    """

    name: str
    mesh: Mesh
    T: float
    n_steps: int
    n_intervals: int
    diffusivity: Callable
    source: Optional[Callable]
    initial: Callable
    bcs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"final time must be positive, got {self.T}")
        if self.n_steps <= 0 or self.n_intervals <= 0:
            raise ValueError("step and interval counts must be positive")
        if self.n_steps % self.n_intervals:
            raise ValueError(
                f"{self.n_steps} fine steps cannot be split evenly into {self.n_intervals} intervals"
            )
        for marker in self.bcs:
            if marker not in self.mesh.boundary:
                raise ValueError(f"boundary marker {marker!r} not present in mesh")

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def steps_per_interval(self):
        return self.n_steps // self.n_intervals

    def interval_times(self):
        return np.linspace(0.0, self.T, self.n_intervals + 1)

    def with_(self, **changes):
        return replace(self, **changes)


def exp1_source(x, t):
    return 100.0 * math.sin(5 * math.pi * t) * (1.0 + np.cos(3 * math.pi * x[..., 0]))


def _box_indicator(x, lo, hi, tol=1e-12):
    inside = np.ones(x.shape[0], dtype=bool)
    for axis in range(x.shape[1]):
        inside &= (x[:, axis] > lo + tol) & (x[:, axis] < hi - tol)
    return inside


def exp1_initial(x):
    return 10.0 * _box_indicator(x, 0.6, 0.8)


def exp2_diffusivity(x, t):
    return 1.0 + 0.9 * np.sin(7 * math.pi * t + 2 * math.pi * x[:, 0])


def exp3_diffusivity(x, t):
    lower = np.all(x <= 0.5, axis=1)
    upper = np.all(x >= 0.5, axis=1)
    return 1.0 + 0.9 * math.sin(7 * math.pi * t) * lower + 0.9 * math.cos(5 * math.pi * t) * upper


def exp3_source(x, t):
    return (
        100.0
        * math.sin(5 * math.pi * t)
        * (1.0 + np.cos(3 * math.pi * x[:, 0]))
        * (1.0 + np.sin(4 * math.pi * x[:, 1]))
    )


def exp4_diffusivity(x, t):
    z = x[:, 2]
    return np.where(z < 1 / 3, 1000.0, np.where(z < 2 / 3, 100.0, 10.0))


def exp4_inflow(t):
    if t <= 0.3:
        return 50.0 * t / 0.3
    if t <= 0.6:
        return 50.0 * (1.0 + np.sign(math.sin((t - 0.3) / 0.3 * 8 * math.pi)))
    return 50.0 * (1.0 + math.cos((t - 0.6) / 0.4 * 20 * math.pi))


def exp4_robin(t):
    return 0.5 + t


def _unit(x, t):
    return np.ones(x.shape[0])


def _zero_initial(x):
    return np.zeros(x.shape[0])


def _exp1(neumann, T=1.0, mesh_n=100, n_steps=None, n_intervals=10):
    bc = NeumannHomogeneous() if neumann else DirichletHomogeneous()
    return ProblemSpec(
        name="exp1_neumann" if neumann else "exp1_dirichlet",
        mesh=interval_mesh(mesh_n),
        T=float(T),
        n_steps=n_steps if n_steps is not None else int(round(100 * T)),
        n_intervals=n_intervals,
        diffusivity=_unit,
        source=exp1_source,
        initial=exp1_initial,
        bcs={"left": bc, "right": bc},
    )


def _exp2(T=1.0, mesh_n=100, n_steps=None, n_intervals=10):
    return ProblemSpec(
        name="exp2",
        mesh=interval_mesh(mesh_n),
        T=float(T),
        n_steps=n_steps if n_steps is not None else int(round(100 * T)),
        n_intervals=n_intervals,
        diffusivity=exp2_diffusivity,
        source=exp1_source,
        initial=exp1_initial,
        bcs={"left": NeumannHomogeneous(), "right": NeumannHomogeneous()},
    )


def _exp3(T=1.0, mesh_n=100, n_steps=None, n_intervals=10):
    return ProblemSpec(
        name="exp3",
        mesh=square_mesh(mesh_n),
        T=float(T),
        n_steps=n_steps if n_steps is not None else int(round(100 * T)),
        n_intervals=n_intervals,
        diffusivity=exp3_diffusivity,
        source=exp3_source,
        initial=exp1_initial,
        bcs={"boundary": DirichletHomogeneous()},
    )


def _exp4_scaled(T=1.0, mesh_n=8, n_steps=None, n_intervals=25):
    return ProblemSpec(
        name="exp4_scaled",
        mesh=cube_mesh(mesh_n),
        T=float(T),
        n_steps=n_steps if n_steps is not None else int(round(500 * T)),
        n_intervals=n_intervals,
        diffusivity=exp4_diffusivity,
        source=None,
        initial=_zero_initial,
        bcs={
            "top": Robin(exp4_robin),
            "bottom": NeumannInflow(exp4_inflow),
            "sides": NeumannHomogeneous(),
        },
    )


PRESETS = {
    "exp1_dirichlet": lambda **kw: _exp1(False, **kw),
    "exp1_neumann": lambda **kw: _exp1(True, **kw),
    "exp2": _exp2,
    "exp3": _exp3,
    "exp4_scaled": _exp4_scaled,
}


def build_problem(preset, **params):
    """Return the :class:`ProblemSpec` of a named test problem.

    Keyword parameters (all optional): ``T``, ``mesh_n`` (elements per
    axis), ``n_steps`` (total fine steps) and ``n_intervals``.  ``None``
    values fall back to the preset defaults.
    """
    try:
        factory = PRESETS[preset]
    except KeyError:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None
    params = {k: v for k, v in params.items() if v is not None}
    if "mesh_n" in params and params["mesh_n"] <= 0:
        raise ValueError(f"mesh_n must be positive, got {params['mesh_n']}")
    return factory(**params)


# ---------------------------------------------------------------------------
# assembly

# barycentric quadrature points / weights (weights sum to 1), exact for degree 2+
_QUAD = {
    1: (
        np.array([[0.5 - math.sqrt(0.15), 0.5 + math.sqrt(0.15)], [0.5, 0.5], [0.5 + math.sqrt(0.15), 0.5 - math.sqrt(0.15)]]),
        np.array([5 / 18, 8 / 18, 5 / 18]),
    ),
    2: (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3),
    ),
    3: (
        np.array(
            [
                [0.5854101966249685, 0.1381966011250105, 0.1381966011250105, 0.1381966011250105],
                [0.1381966011250105, 0.5854101966249685, 0.1381966011250105, 0.1381966011250105],
                [0.1381966011250105, 0.1381966011250105, 0.5854101966249685, 0.1381966011250105],
                [0.1381966011250105, 0.1381966011250105, 0.1381966011250105, 0.5854101966249685],
            ]
        ),
        np.full(4, 0.25),
    ),
}


def _simplex_measure(coords):
    """Measure of k-simplices embedded in R^dim; coords shape (m, k+1, dim)."""
    k = coords.shape[1] - 1
    if k == 0:
        return np.ones(coords.shape[0])
    E = coords[:, 1:, :] - coords[:, :1, :]
    G = E @ np.swapaxes(E, 1, 2)
    return np.sqrt(np.abs(np.linalg.det(G))) / math.factorial(k)


def _local_mass(measure, k):
    base = np.ones((k + 1, k + 1)) + np.eye(k + 1)
    return measure[:, None, None] * base / ((k + 1) * (k + 2))


class _Pattern:
    """Sums element contributions into a fixed CSR sparsity pattern."""

    def __init__(self, rows, cols, n):
        keys = rows.astype(np.int64) * n + cols
        uniq, self.inverse = np.unique(keys, return_inverse=True)
        self.n = n
        self.indices = (uniq % n).astype(np.int32)
        row_of = uniq // n
        self.indptr = np.searchsorted(row_of, np.arange(n + 1)).astype(np.int32)
        self.nnz = uniq.size

    def matrix(self, values):
        data = np.bincount(self.inverse, weights=values, minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))


def _pattern_for(elements, n):
    k1 = elements.shape[1]
    rows = np.repeat(elements, k1, axis=1).ravel()
    cols = np.tile(elements, (1, k1)).ravel()
    return _Pattern(rows, cols, n)


class AssembledSystem:
    """Discrete operators of a heat problem.

    Parameters
    ----------
    mass : sparse matrix
        Mass matrix ``M`` (symmetric positive definite).
    stiffness : callable
        ``t -> A(t)``, the stiffness matrix including Robin terms.
    load : callable
        ``t -> l(t)``, the load vector including inflow terms.
    dirichlet : array of int
        Degrees of freedom carrying homogeneous Dirichlet conditions.
    """

    def __init__(self, mass, stiffness, load, dirichlet=(), vertices=None, problem=None):
        self.mass = as_csr(mass)
        self._stiffness = stiffness
        self._load = load
        self.n = self.mass.shape[0]
        self.dirichlet = np.unique(np.asarray(dirichlet, dtype=int))
        self.vertices = vertices
        self.problem = problem
        free = np.ones(self.n)
        free[self.dirichlet] = 0.0
        self._free = free
        self._P = sp.diags(free, format="csr")
        self._Q = sp.diags(1.0 - free, format="csr")

    def stiffness(self, t):
        return as_csr(self._stiffness(t))

    def load(self, t):
        return np.asarray(self._load(t), dtype=float)

    @property
    def free_mask(self):
        return self._free.astype(bool)

    def constrain_matrix(self, A, unit_diagonal=True):
        """Zero Dirichlet rows and columns; optionally put 1 on their diagonal."""
        A = self._P @ as_csr(A) @ self._P
        if unit_diagonal:
            A = A + self._Q
        return as_csr(A)

    def constrain_vector(self, v):
        return np.asarray(v, dtype=float) * self._free

    def step_matrix(self, t, dt):
        """Backward-Euler system matrix ``M + dt A(t)`` with Dirichlet elimination."""
        return self.constrain_matrix(self.mass + dt * self.stiffness(t))

    def step_rhs_matrix(self):
        """Mass matrix acting on the previous state (Dirichlet rows/columns zeroed)."""
        return self.constrain_matrix(self.mass, unit_diagonal=False)

    def step_load(self, t, dt):
        return self.constrain_vector(dt * self.load(t))

    def l2_weight(self):
        """Mass matrix with Dirichlet elimination and unit diagonal (SPD)."""
        return self.constrain_matrix(self.mass)

    def initial_vector(self):
        return np.asarray(self.problem.initial(self.vertices), dtype=float)


def assemble(problem):
    """Assemble mass, stiffness and load providers for ``problem``."""
    mesh = problem.mesh
    n = mesh.n_vertices
    d = mesh.dim
    coords = mesh.cell_coords()
    cells = mesh.cells

    vol = np.abs(_signed_volumes(coords))
    if np.any(vol <= 0):
        raise ValueError("mesh contains degenerate elements")
    J = np.swapaxes(coords[:, 1:, :] - coords[:, :1, :], 1, 2)
    Jinv = np.linalg.inv(J)
    grads = np.concatenate([-Jinv.sum(axis=1, keepdims=True), Jinv], axis=1)
    local_K = vol[:, None, None] * (grads @ np.swapaxes(grads, 1, 2))
    local_M = _local_mass(vol, d)

    pattern = _pattern_for(cells, n)
    mass = pattern.matrix(local_M.ravel())
    centroids = mesh.centroids()
    unit_K = local_K.reshape(len(cells), -1)

    qp, qw = _QUAD[d]
    qpoints = np.einsum("qi,cij->cqj", qp, coords)
    flat_q = qpoints.reshape(-1, d)

    robin = []
    inflow = []
    dirichlet_markers = []
    for marker, bc in problem.bcs.items():
        if isinstance(bc, DirichletHomogeneous):
            dirichlet_markers.append(marker)
        elif isinstance(bc, NeumannHomogeneous):
            pass
        elif isinstance(bc, (Robin, NeumannInflow)):
            facets = mesh.boundary[marker]
            fcoords = mesh.vertices[facets]
            meas = _simplex_measure(fcoords)
            if isinstance(bc, Robin):
                fm = _local_mass(meas, d - 1)
                robin.append((bc.alpha, _pattern_for(facets, n).matrix(fm.ravel())))
            else:
                vec = np.bincount(facets.ravel(), weights=np.repeat(meas / d, d), minlength=n)
                inflow.append((bc.g, vec))
        else:
            raise TypeError(f"unsupported boundary condition {bc!r}")
    dirichlet = mesh.boundary_vertices(dirichlet_markers)

    def stiffness(t):
        dk = np.asarray(problem.diffusivity(centroids, t), dtype=float)
        A = pattern.matrix((unit_K * dk[:, None]).ravel())
        for alpha, B in robin:
            A = A + alpha(t) * B
        return A

    def load(t):
        out = np.zeros(n)
        if problem.source is not None:
            fq = np.asarray(problem.source(flat_q, t), dtype=float).reshape(len(cells), -1)
            contrib = vol[:, None] * np.einsum("cq,q,qi->ci", fq, qw, qp)
            out += np.bincount(cells.ravel(), weights=contrib.ravel(), minlength=n)
        for g, vec in inflow:
            out += g(t) * vec
        return out

    return AssembledSystem(mass, stiffness, load, dirichlet, vertices=mesh.vertices, problem=problem)


# ---------------------------------------------------------------------------
# analytical reference for the 1D Dirichlet problem


def _gauss_panels(breaks, order):
    xg, wg = np.polynomial.legendre.leggauss(order)
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        xs.append((a + b) / 2 + (b - a) / 2 * xg)
        ws.append((b - a) / 2 * wg)
    return np.concatenate(xs), np.concatenate(ws)


def fourier_reference(x, t, modes, source=exp1_source, initial=exp1_initial, breaks=(0.0, 0.6, 0.8, 1.0)):
    """Fourier sine-series solution of the 1D heat equation with Dirichlet BCs.

    Sums ``modes`` terms of ``u(x, t) = sum_m u_m(t) sqrt(2) sin(m pi x)``
    where the coefficients of ``initial`` and ``source`` are computed by
    composite Gauss-Legendre quadrature (panels split at ``breaks``) and
    the time convolution by adaptive Gauss-Kronrod quadrature.
    """
    if modes < 1:
        raise ValueError("modes must be >= 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = np.arange(1, modes + 1)
    panel_order = max(16, 2 * modes // (len(breaks) - 1) + 16)
    xq, wq = _gauss_panels(np.asarray(breaks, dtype=float), panel_order)
    basis = math.sqrt(2.0) * np.sin(np.outer(m, np.pi * xq))  # (modes, q)
    lam = (m * math.pi) ** 2

    u0q = np.asarray(initial(xq[:, None]), dtype=float)
    coeff = basis @ (wq * u0q) * np.exp(-lam * t)
    if source is not None and t > 0:

        def integrand(tau):
            fq = np.asarray(source(xq[:, None], tau), dtype=float)
            return (basis @ (wq * fq)) * np.exp(-lam * (t - tau))

        conv, _ = scipy.integrate.quad_vec(integrand, 0.0, t, epsabs=1e-13, epsrel=1e-12, limit=400)
        coeff = coeff + conv
    values = (math.sqrt(2.0) * np.sin(np.outer(np.pi * x, m))) @ coeff
    return values if values.size > 1 else float(values[0])
