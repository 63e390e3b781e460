"""Command-line front end: ``spectral-parareal {run,svd,sweep} --config FILE``.

Exit codes: 0 on success, 1 on a numerical failure, 2 on a configuration
error (the message names the offending field).
"""

import argparse
import os
import sys

import numpy as np

from .experiment import ConfigError, load_config, prepare, run, write_csv, write_outputs
from .linalg import SingularMatrix, SvdNoConvergence
from .rsvd import OracleTooLarge, RsvdConfig, WeightNotSPD, dense_operator_matrix, exact_truncated_svd, randomized_svd

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2

NUMERICAL_ERRORS = (
    SingularMatrix,
    SvdNoConvergence,
    OracleTooLarge,
    WeightNotSPD,
    FloatingPointError,
    np.linalg.LinAlgError,
)


def _int_list(text):
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 0:
        raise argparse.ArgumentTypeError("need at least one non-negative integer")
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spectral-parareal",
        description="Parareal with spectral coarse solvers for parabolic model problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, metavar="PATH", help="TOML experiment config")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
        p.add_argument("--workers", type=int, metavar="N_W", help="worker threads (overrides workers)")
        p.add_argument("--seed", type=int, metavar="S", help="random seed (overrides seed)")
        return p

    common(sub.add_parser("run", help="run one Parareal experiment"))
    common(sub.add_parser("svd", help="dump per-interval singular values"))
    sweep = common(sub.add_parser("sweep", help="run a rank x oversampling grid"))
    sweep.add_argument("--ranks", type=_int_list, metavar="R1,R2,..", help="ranks (default: config rank)")
    sweep.add_argument("--oversampling", type=_int_list, metavar="P1,P2,..", help="oversampling values (default: config)")
    return parser


def _config(args):
    if not os.path.exists(args.config):
        raise ConfigError("config", f"file not found: {args.config}")
    cfg = load_config(args.config)
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfg.replace(**overrides) if overrides else cfg


def cmd_run(cfg):
    trace = run(cfg)
    write_outputs(trace, cfg.output_dir)
    print(f"{cfg.preset}/{cfg.coarse}: K={trace.K}, final max error {trace.max_errors[-1]:.3e} -> {cfg.output_dir}")


def singular_value_rows(cfg):
    """Rows ``(n, r, sigma, method)`` for every interval and ``r = 1..R``."""
    st = prepare(cfg.replace(coarse="zero", bounds=False))
    rows = []
    if cfg.rank == 0:
        return rows
    rcfg = RsvdConfig(cfg.rank, cfg.oversampling, cfg.power_iterations, cfg.seed)
    exact_ok = st.system.n <= cfg.oracle_cap
    for n, F in enumerate(st.fine, start=1):
        rand = randomized_svd(F, rcfg, st.ip, interval=n)
        for r in range(1, cfg.rank + 1):
            rows.append((n, r, rand.sigma(r) if r <= rand.n_sampled else np.nan, "randomized"))
        if exact_ok:
            exact = exact_truncated_svd(dense_operator_matrix(F, cfg.oracle_cap), st.ip, rank=cfg.rank, cap=cfg.oracle_cap)
            rows.extend((n, r, exact.sigma(r), "exact") for r in range(1, cfg.rank + 1))
    return rows


def cmd_svd(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "svals.csv")
    write_csv(path, ["n", "r", "sigma", "method"], singular_value_rows(cfg))
    print(f"singular values -> {path}")


def cmd_sweep(cfg, ranks=None, oversampling=None):
    ranks = ranks or [cfg.rank]
    oversampling = oversampling if oversampling is not None else [cfg.oversampling]
    summary = []
    for R in ranks:
        for p in oversampling:
            cell = cfg.replace(rank=R, oversampling=p, output_dir=os.path.join(cfg.output_dir, f"R{R}_p{p}"))
            trace = run(cell)
            write_outputs(trace, cell.output_dir)
            summary.extend((R, p, k, e) for k, e in enumerate(trace.max_errors))
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_csv(os.path.join(cfg.output_dir, "summary.csv"), ["R", "p", "k", "max_error"], summary)
    print(f"{len(ranks) * len(oversampling)} runs -> {cfg.output_dir}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "run":
            cmd_run(cfg)
        elif args.command == "svd":
            cmd_svd(cfg)
        else:
            cmd_sweep(cfg, args.ranks, args.oversampling)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
