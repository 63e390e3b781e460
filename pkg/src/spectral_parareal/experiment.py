"""Experiment configuration, orchestration and output files."""

import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .coarse import EulerCoarse, SpectralCoarse, ZeroCoarse, fourier_coarse
from .fem import assemble, build_problem
from .linalg import EUCLIDEAN, InnerProduct
from .parareal import (
    FLOOR,
    BoundsInput,
    aposteriori_bound,
    apriori_bound,
    efficiency,
    initialize,
    iterate,
    sequential_reference,
)
from .propagators import make_propagators
from .rsvd import ORACLE_CAP, RsvdConfig, dense_operator_matrix, exact_truncated_svd, randomized_svd

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "Setup",
    "PararealTrace",
    "load_config",
    "dump_config",
    "prepare",
    "run",
    "write_outputs",
    "write_csv",
    "COARSE_VARIANTS",
]

COARSE_VARIANTS = ("zero", "euler", "fourier", "svd-exact", "svd-randomized")
INNER_PRODUCTS = ("euclidean", "l2")


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    """One Parareal run.

    ``None`` for ``T``, ``mesh_n``, ``fine_steps`` or ``intervals`` selects
    the preset default; ``include_offset=None`` selects ``True`` except for
    the Experiment-1 presets.
    """

    preset: str
    T: float = None
    mesh_n: int = None
    fine_steps: int = None
    intervals: int = None
    coarse: str = "svd-randomized"
    rank: int = 1
    oversampling: int = 1
    power_iterations: int = 0
    seed: int = 0
    inner_product: str = "euclidean"
    include_offset: bool = None
    tolerance: float = 0.0
    max_iterations: int = 5
    output_dir: str = "out"
    workers: int = 1
    oracle_cap: int = ORACLE_CAP
    bounds: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name, kind in (("T", float), ("tolerance", float)):
            value = getattr(self, name)
            if isinstance(value, bool) or (value is not None and not isinstance(value, (int, float))):
                raise ConfigError(name, f"expected a number, got {value!r}")
        for name in ("mesh_n", "fine_steps", "intervals", "rank", "oversampling", "power_iterations",
                     "seed", "max_iterations", "workers", "oracle_cap"):
            value = getattr(self, name)
            if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(name, f"expected an integer, got {value!r}")
        for name in ("include_offset", "bounds"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, bool):
                raise ConfigError(name, f"expected true/false, got {value!r}")
        if not isinstance(self.preset, str):
            raise ConfigError("preset", f"expected a string, got {self.preset!r}")
        from .fem import PRESETS

        if self.preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.coarse not in COARSE_VARIANTS:
            raise ConfigError("coarse", f"must be one of {COARSE_VARIANTS}, got {self.coarse!r}")
        if self.inner_product not in INNER_PRODUCTS:
            raise ConfigError("inner_product", f"must be one of {INNER_PRODUCTS}, got {self.inner_product!r}")
        for name in ("rank", "oversampling", "power_iterations", "max_iterations"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if self.T is not None and not self.T > 0:
            raise ConfigError("T", "must be positive")
        if self.mesh_n is not None and self.mesh_n <= 0:
            raise ConfigError("mesh_n", "must be positive")
        if self.intervals is not None and self.intervals <= 0:
            raise ConfigError("intervals", "must be positive")
        if self.fine_steps is not None and self.fine_steps <= 0:
            raise ConfigError("fine_steps", "must be positive")

    def problem(self):
        try:
            return build_problem(
                self.preset, T=self.T, mesh_n=self.mesh_n, n_steps=self.fine_steps, n_intervals=self.intervals
            )
        except ValueError as exc:
            raise ConfigError("fine_steps" if "split" in str(exc) else "preset", str(exc)) from exc

    def resolved_include_offset(self):
        if self.include_offset is not None:
            return self.include_offset
        return not self.preset.startswith("exp1")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _from_mapping(data):
    if "preset" not in data:
        raise ConfigError("preset", "required field missing")
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    return ExperimentConfig(**data)


def load_config(path_or_text):
    """Parse a flat TOML document (path or text) into an :class:`ExperimentConfig`."""
    text = path_or_text
    if os.path.exists(str(path_or_text)):
        with open(path_or_text, "rb") as fh:
            text = fh.read().decode()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<document>", f"malformed TOML: {exc}") from exc
    return _from_mapping(data)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    # TOML basic strings: JSON escapes are valid, except that surrogate-pair
    # escapes are not, so keep non-ASCII characters literal
    return json.dumps(v, ensure_ascii=False).replace("\x7f", "\\u007f")


def dump_config(cfg):
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if value is not None:
            lines.append(f"{f.name} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def _fmt(x):
    if x is None:
        return "nan"
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


# ---------------------------------------------------------------------------
# setup


@dataclass
class Setup:
    """Everything built before the iteration starts."""

    config: ExperimentConfig
    problem: object
    system: object
    ip: object
    fine: list
    coarse: list
    offsets: np.ndarray
    u0: np.ndarray
    svds: list = field(default_factory=list)
    bounds: BoundsInput = None
    bounds_mode: str = "none"
    bounds_note: str = ""
    counts: dict = field(default_factory=dict)


class _Timer:
    def __init__(self):
        self.seconds = {}

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - t0


def _inner_product(cfg, system):
    if cfg.inner_product == "l2":
        return InnerProduct(system.l2_weight(), name="l2")
    return EUCLIDEAN


def _snapshot(fine):
    return [dict(F.counts) for F in fine]


def _diff(after, before):
    return [{k: a[k] - b[k] for k in a} for a, b in zip(after, before)]


def _executor(workers):
    return ThreadPoolExecutor(max_workers=workers) if workers > 1 else None


def _map(ex, fn, items):
    return list(ex.map(fn, items)) if ex is not None else [fn(x) for x in items]


def _op_norm(matrix, ip, cap):
    svd = exact_truncated_svd(matrix, ip, rank=1, cap=cap)
    return float(svd.sigmas[0]) if svd.rank else 0.0


def prepare(cfg, timer=None, executor=None):
    """Assemble the problem and build fine and coarse solvers for ``cfg``."""
    timer = timer or _Timer()
    with timer.phase("assemble"):
        problem = cfg.problem()
        system = assemble(problem)
        ip = _inner_product(cfg, system)
        fine = make_propagators(system, problem, ip=ip)
        u0 = system.initial_vector()
    N = problem.n_intervals
    include = cfg.resolved_include_offset()
    dT = problem.T / N
    rcfg = RsvdConfig(cfg.rank, cfg.oversampling, cfg.power_iterations, cfg.seed)

    before = _snapshot(fine)
    with timer.phase("setup"):

        def build(n):
            F = fine[n]
            b = F.offset()
            full = None
            if cfg.coarse == "zero":
                G = ZeroCoarse(system.n, b if include else None)
            elif cfg.coarse == "euler":
                G = EulerCoarse(system, F.t_start, F.t_end, include_offset=include, index=n + 1)
            elif cfg.coarse == "fourier":
                l2 = ip if ip.name == "l2" else InnerProduct(system.l2_weight(), name="l2")
                G = fourier_coarse(system, cfg.rank, dT, l2, offset=b, include_offset=include)
            elif cfg.coarse == "svd-exact":
                full = exact_truncated_svd(dense_operator_matrix(F, cfg.oracle_cap), ip, cap=cfg.oracle_cap)
                G = SpectralCoarse(full.truncate(cfg.rank), b, include)
            else:
                full = randomized_svd(F, rcfg, ip, interval=n + 1, keep_all=True)
                G = SpectralCoarse(full.truncate(cfg.rank), b, include)
            return b, G, full

        built = _map(executor, build, range(N))
    setup_counts = _diff(_snapshot(fine), before)
    offsets = np.array([b for b, _, _ in built])
    coarse = [G for _, G, _ in built]
    svds = [s for _, _, s in built]

    st = Setup(cfg, problem, system, ip, fine, coarse, offsets, u0, svds)
    st.counts["setup"] = setup_counts
    if cfg.bounds:
        before = _snapshot(fine)
        with timer.phase("bounds"):
            _bounds_input(st, executor)
        st.counts["bounds_oracle"] = _diff(_snapshot(fine), before)
    return st


def _bounds_input(st, executor):
    cfg = st.config
    norms = np.concatenate([[st.ip.norm(st.u0)], st.ip.norms(st.offsets)])
    has_offset = all(getattr(G, "include_offset", False) for G in st.coarse)
    if cfg.coarse in ("svd-exact", "svd-randomized"):
        try:
            delta = max(s.sigma(1) for s in st.svds)
            eps = max(s.sigma(cfg.rank + 1) for s in st.svds)
        except IndexError as exc:
            st.bounds_note = f"eps unavailable: {exc}"
            return
        st.bounds_mode = "exact" if cfg.coarse == "svd-exact" else "estimated"
    elif cfg.coarse in ("zero", "fourier"):
        if st.system.n > cfg.oracle_cap:
            st.bounds_note = f"dimension {st.system.n} above oracle cap {cfg.oracle_cap}"
            return

        def norms_for(n):
            Fm = dense_operator_matrix(st.fine[n], cfg.oracle_cap)
            Gm = st.coarse[n].apply_linear(np.eye(st.system.n)).T
            return (
                _op_norm(Fm, st.ip, cfg.oracle_cap),
                _op_norm(Gm, st.ip, cfg.oracle_cap),
                _op_norm(Fm - Gm, st.ip, cfg.oracle_cap),
            )

        vals = _map(executor, norms_for, range(len(st.fine)))
        delta = max(max(f, g) for f, g, _ in vals)
        eps = max(e for _, _, e in vals)
        st.bounds_mode = "exact"
    else:
        st.bounds_note = "single-step coarse solver has no spectral data"
        return
    st.bounds = BoundsInput(float(delta), float(eps), norms, coarse_offset=has_offset)


# ---------------------------------------------------------------------------
# run


@dataclass
class PararealTrace:
    """Per-iteration errors, updates, bounds and bookkeeping of one run.

    Arrays indexed ``[k, n-1]`` cover ``k = 0..K`` and intervals
    ``n = 1..N``.  ``endpoint_errors``/``traj_errors``/``max_errors`` use the
    Euclidean norm; ``endpoint_errors_v`` and ``update_norms`` the
    configured inner product (the norm the bounds live in).
    """

    config: ExperimentConfig
    N: int
    dim: int
    endpoint_errors: np.ndarray
    endpoint_errors_v: np.ndarray
    traj_errors: np.ndarray
    max_errors: np.ndarray
    update_norms: np.ndarray
    apriori: np.ndarray
    apost_per_n: np.ndarray
    apost_sup: np.ndarray
    eta: np.ndarray
    below_floor: np.ndarray
    delta: float
    eps: float
    bounds_mode: str
    bounds_note: str
    timings: dict
    counts: dict
    iterates: list
    reference: np.ndarray
    stopped_by: str
    setup: Setup = None

    @property
    def K(self):
        return len(self.max_errors) - 1

    def counts_per_interval(self):
        """Fine and adjoint evaluations per interval for setup and iterations."""
        out = []
        for n in range(self.N):
            s = self.counts["setup"][n]
            it = self.counts["iterations"][n]
            out.append({"setup_fine": s["fine"], "setup_adjoint": s["adjoint"], "iteration_fine": it["fine"]})
        return out


def run(cfg, setup=None):
    """Run Parareal for ``cfg`` and return its :class:`PararealTrace`.

    Stops at ``cfg.max_iterations`` or as soon as the a-posteriori bound
    (sup form when ``delta < 1``, else the per-interval maximum) drops
    below ``cfg.tolerance``.
    """
    timer = _Timer()
    ex = _executor(cfg.workers)
    try:
        st = setup or prepare(cfg, timer, ex)
        fine, coarse, ip = st.fine, st.coarse, st.ip
        N = len(fine)

        before = _snapshot(fine)
        with timer.phase("reference"):
            ref, ref_trajs = sequential_reference(st.u0, fine, trajectories=True)
        ref_counts = _diff(_snapshot(fine), before)

        before = _snapshot(fine)
        rows = {k: [] for k in ("ee", "eev", "te", "mx", "upd", "apri", "apn", "sup", "eta", "floor")}
        iterates = []
        stopped = "max_iterations"
        bi = st.bounds

        def report(state):
            trajs = _map(ex, lambda n: fine[n].trajectory(state.u[n]), range(N))
            diff = state.u[1:] - ref[1:]
            ee = np.linalg.norm(diff, axis=1)
            te = np.array([np.linalg.norm(tr - rt, axis=1).max() for tr, rt in zip(trajs, ref_trajs)])
            rows["ee"].append(ee)
            rows["eev"].append(ip.norms(diff))
            rows["te"].append(te)
            mx = float(te.max())
            rows["mx"].append(mx)
            rows["floor"].append(mx < FLOOR)
            k = state.k
            if bi is not None:
                rows["apri"].append(max(apriori_bound(bi, n, k) for n in range(1, N + 1)))
            else:
                rows["apri"].append(math.nan)
            if k >= 1:
                rows["upd"].append(state.update_norms)
                if bi is not None:
                    per_n, sup = aposteriori_bound(bi, state.update_norms)
                    eta, _ = efficiency(mx, per_n)
                else:
                    per_n, sup, eta = np.full(N, math.nan), None, math.nan
            else:
                per_n, sup, eta = np.full(N, math.nan), None, math.nan
            rows["apn"].append(per_n)
            rows["sup"].append(math.nan if sup is None else sup)
            rows["eta"].append(eta)
            iterates.append(state.u.copy())
            return np.array([tr[-1] for tr in trajs])

        with timer.phase("iterations"):
            state = initialize(st.u0, coarse)
            fine_values = report(state)
            for _ in range(cfg.max_iterations):
                state = iterate(state, fine, coarse, fine_values=fine_values, ip=ip)
                fine_values = report(state)
                if bi is not None:
                    sup = rows["sup"][-1]
                    level = sup if not math.isnan(sup) else float(np.max(rows["apn"][-1]))
                    if level < cfg.tolerance:
                        stopped = "tolerance"
                        break
        iter_counts = _diff(_snapshot(fine), before)
    finally:
        if ex is not None:
            ex.shutdown()

    counts = dict(st.counts)
    counts["reference"] = ref_counts
    counts["iterations"] = iter_counts
    upd = np.array(rows["upd"]) if rows["upd"] else np.zeros((0, N))
    return PararealTrace(
        config=cfg,
        N=N,
        dim=st.system.n,
        endpoint_errors=np.array(rows["ee"]),
        endpoint_errors_v=np.array(rows["eev"]),
        traj_errors=np.array(rows["te"]),
        max_errors=np.array(rows["mx"]),
        update_norms=upd,
        apriori=np.array(rows["apri"]),
        apost_per_n=np.array(rows["apn"]),
        apost_sup=np.array(rows["sup"]),
        eta=np.array(rows["eta"]),
        below_floor=np.array(rows["floor"]),
        delta=math.nan if bi is None else bi.delta,
        eps=math.nan if bi is None else bi.eps,
        bounds_mode=st.bounds_mode,
        bounds_note=st.bounds_note,
        timings=dict(timer.seconds),
        counts=counts,
        iterates=iterates,
        reference=ref,
        stopped_by=stopped,
        setup=st,
    )


def write_outputs(trace, outdir):
    """Write errors.csv, updates.csv, bounds.csv, run_meta.json, config.toml."""
    os.makedirs(outdir, exist_ok=True)
    N = trace.N
    write_csv(
        os.path.join(outdir, "errors.csv"),
        ["k", "n", "endpoint_error", "max_traj_error"],
        [(k, n + 1, trace.endpoint_errors[k, n], trace.traj_errors[k, n]) for k in range(trace.K + 1) for n in range(N)],
    )
    write_csv(
        os.path.join(outdir, "updates.csv"),
        ["k", "n", "update_norm"],
        [(k + 1, n + 1, trace.update_norms[k, n]) for k in range(trace.update_norms.shape[0]) for n in range(N)],
    )
    write_csv(
        os.path.join(outdir, "bounds.csv"),
        ["k", "max_error", "apriori", "apost_per_n_max", "apost_sup", "eta", "below_floor"],
        [
            (
                k,
                trace.max_errors[k],
                trace.apriori[k],
                np.max(trace.apost_per_n[k]) if k else math.nan,
                trace.apost_sup[k],
                trace.eta[k],
                trace.below_floor[k],
            )
            for k in range(trace.K + 1)
        ],
    )
    with open(os.path.join(outdir, "config.toml"), "w", encoding="utf-8") as fh:
        fh.write(dump_config(trace.config))
    cfg = trace.config
    meta = {
        "config": dataclasses.asdict(cfg),
        "dim": trace.dim,
        "intervals": N,
        "delta": trace.delta,
        "eps": trace.eps,
        "bounds_mode": trace.bounds_mode,
        "bounds_note": trace.bounds_note,
        "iterations": trace.K,
        "stopped_by": trace.stopped_by,
        "fine_solves_per_interval": trace.counts_per_interval(),
        "wall_clock_seconds": {k: round(v, 6) for k, v in sorted(trace.timings.items())},
    }
    with open(os.path.join(outdir, "run_meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(f"not serializable: {x!r}")
