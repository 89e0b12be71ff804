"""Benchmark driver: compression runs, parameter sweeps, aspect-ratio studies.

Subcommands:
    compress       one compression run; JSON report, optional binary container
    sweep          grid of runs over N / k / method; CSV, one row per run
    aspect-ratios  projected-tag aspect ratios by tagging distribution; CSV

Exit codes: 0 success, 1 numerical failure, 2 configuration error. The seed
falls back to the UBLR_SEED environment variable when --seed is not given.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .linalg import RandomStream
from .operators import (
    InteriorResonanceError,
    laplace2d_operator,
    make_synthetic_spec,
    synthetic_ublr,
    thin_slab_schur_operator,
)
from .container import write_ublr
from .reconstruction import METHOD_IDS, compress
from .tagging import (
    DegenerateTagsError,
    aspect_ratio,
    make_tagging_matrix,
    optimize_null_vector,
    projected_tags,
    tag_null_vector,
)
from .tessellation import (
    build_tessellation,
    grid_points,
    random_points,
    suggest_block_count,
)

METHODS = sorted(METHOD_IDS.values())

SWEEP_COLUMNS = [
    "N", "b", "m", "k", "p", "d", "method", "distribution", "extra_cols",
    "seed", "matvecs_I", "matvecs_II", "matvecs_III", "matvecs_total",
    "time_I_s", "time_II_s", "time_III_s", "rel_error", "error",
]

ASPECT_COLUMNS = [
    "row_type", "b", "d", "distribution", "extra_cols", "seed",
    "block_id", "nullity", "rho_base", "rho_optimized", "stat",
]


def _default_seed() -> int:
    return int(os.environ.get("UBLR_SEED", "0"))


def _int_list(text: str) -> list:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _str_list(text: str) -> list:
    return [tok.strip() for tok in text.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ublr",
        description="Matrix-free uniform block low-rank compression benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    comp = sub.add_parser("compress", help="run one compression and report it")
    comp.add_argument("--op", required=True, choices=["synthetic", "laplace2d", "slab-schur"])
    comp.add_argument("--n", type=int, help="problem size (synthetic, laplace2d)")
    comp.add_argument("--d", type=int, default=2, help="geometry dimension (synthetic)")
    comp.add_argument("--b", type=int, help="block count; default balances matvecs")
    comp.add_argument("--k", type=int, default=30, help="target block rank")
    comp.add_argument("--p", type=int, default=10, help="oversampling")
    comp.add_argument("--method", default="A2", choices=METHODS)
    comp.add_argument("--distribution", default="gaussian",
                      choices=["gaussian", "haar", "equidistributed"])
    comp.add_argument("--extra-cols", type=int, default=0)
    comp.add_argument("--optimize", action="store_true",
                      help="optimize tagging null vectors over the null sphere")
    comp.add_argument("--extra-samples", action="store_true",
                      help="concatenate samples from every extra null direction")
    comp.add_argument("--seed", type=int, default=None)
    comp.add_argument("--synthetic-rank", type=int, help="exact far-field rank (default: k)")
    comp.add_argument("--points", default="random", choices=["random", "grid"],
                      help="point distribution for synthetic operators")
    comp.add_argument("--nx", type=int, help="slab grid size in x")
    comp.add_argument("--ny", type=int, help="slab grid size in y")
    comp.add_argument("--nz", type=int, default=10, help="slab thickness")
    comp.add_argument("--kappa", type=float, default=None,
                      help="wavenumber; default set by --ppw")
    comp.add_argument("--ppw", type=float, default=100.0, help="points per wavelength")
    comp.add_argument("--error-iterations", type=int, default=20)
    comp.add_argument("--report", help="write the JSON report here (default: stdout)")
    comp.add_argument("--save", help="write the binary UBLR container here")
    comp.set_defaults(func=cmd_compress)

    sweep = sub.add_parser("sweep", help="grid of compression runs, CSV output")
    sweep.add_argument("--op", required=True, choices=["synthetic", "laplace2d", "slab-schur"])
    sweep.add_argument("--n-list", type=_int_list, default=[],
                       help="comma-separated problem sizes")
    sweep.add_argument("--k-list", type=_int_list, default=[30])
    sweep.add_argument("--methods", type=_str_list, default=["A1", "A2", "A3"])
    sweep.add_argument("--d", type=int, default=2)
    sweep.add_argument("--b", type=int, help="block count; default balances matvecs")
    sweep.add_argument("--p", type=int, default=10)
    sweep.add_argument("--distribution", default="gaussian",
                       choices=["gaussian", "haar", "equidistributed"])
    sweep.add_argument("--extra-cols", type=int, default=0)
    sweep.add_argument("--optimize", action="store_true")
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--points", default="random", choices=["random", "grid"])
    sweep.add_argument("--nz", type=int, default=10)
    sweep.add_argument("--ppw", type=float, default=100.0)
    sweep.add_argument("--error-iterations", type=int, default=20)
    sweep.add_argument("--jobs", type=int, default=1, help="parallel independent runs")
    sweep.add_argument("--out", required=True, help="CSV output path")
    sweep.set_defaults(func=cmd_sweep)

    ar = sub.add_parser("aspect-ratios", help="projected-tag aspect-ratio study, CSV output")
    ar.add_argument("--b-list", type=_int_list, required=True,
                    help="comma-separated block counts (d-th powers)")
    ar.add_argument("--d", type=int, default=2)
    ar.add_argument("--distributions", type=_str_list,
                    default=["gaussian", "haar", "equidistributed"])
    ar.add_argument("--extra-cols-list", type=_int_list, default=[0, 1, 2, 3])
    ar.add_argument("--seeds", type=_int_list, default=[0])
    ar.add_argument("--out", required=True, help="CSV output path")
    ar.set_defaults(func=cmd_aspect_ratios)

    return parser


def _resolve_seed(args) -> int:
    return _default_seed() if args.seed is None else args.seed


class ConfigError(ValueError):
    pass


class _RaisingParser:
    """parser.error stand-in for sweep rows: raise instead of exiting, so a
    bad configuration becomes a row with an error field."""

    def error(self, message):
        raise ConfigError(message)


def _build_operator(args, parser, k: int, n: int | None, seed: int):
    """Returns (operator, tessellation). Validates operator parameters."""
    try:
        return _build_operator_unchecked(args, parser, k, n, seed)
    except ValueError as exc:  # bad geometry/shape parameters are config errors
        parser.error(str(exc))


def _build_operator_unchecked(args, parser, k: int, n: int | None, seed: int):
    master = RandomStream(seed)
    if args.op == "synthetic":
        if n is None:
            parser.error("--n is required for --op synthetic")
        if args.d not in (1, 2, 3):
            parser.error("--d must be 1, 2, or 3")
        b = args.b if args.b else suggest_block_count(n, k, args.d)
        points = _make_points(args.points, n, args.d, master.child(101))
        tess = build_tessellation(points, b)
        rank = getattr(args, "synthetic_rank", None) or k
        if rank > tess.block_sizes.min():
            parser.error(
                f"--synthetic-rank {rank} exceeds the smallest block "
                f"({tess.block_sizes.min()}); lower --b or raise --n"
            )
        spec = make_synthetic_spec(tess, rank, master.child(102))
        return synthetic_ublr(spec), tess
    if args.op == "laplace2d":
        if n is None:
            parser.error("--n is required for --op laplace2d")
        b = args.b if args.b else suggest_block_count(n, k, 2)
        points = _make_points(args.points, n, 2, master.child(101))
        tess = build_tessellation(points, b)
        return laplace2d_operator(points), tess
    # slab-schur
    nx = getattr(args, "nx", None)
    ny = getattr(args, "ny", None)
    if nx is None and n is not None:
        side = int(round(np.sqrt(n)))
        if side * side != n:
            parser.error("--n must be a perfect square for --op slab-schur (or pass --nx/--ny)")
        nx = ny = side
    if nx is None:
        parser.error("--nx (or --n) is required for --op slab-schur")
    ny = ny or nx
    kappa = args.kappa if getattr(args, "kappa", None) is not None else 2.0 * np.pi / args.ppw
    op, points = thin_slab_schur_operator(nx, ny, args.nz, kappa)
    b = args.b if getattr(args, "b", None) else suggest_block_count(points.n, k, 2)
    tess = build_tessellation(points, b)
    return op, tess


def _make_points(kind: str, n: int, d: int, stream: RandomStream):
    if kind == "grid":
        per_axis = int(round(n ** (1.0 / d)))
        if per_axis**d != n:
            raise ValueError(f"--points grid needs n to be a d-th power, got n={n}, d={d}")
        return grid_points(per_axis, d)
    return random_points(n, d, stream)


def _run_one(args, parser, method: str, k: int, n: int | None, seed: int):
    op, tess = _build_operator(args, parser, k, n, seed)
    if method in ("A2", "B2"):
        extra = getattr(args, "extra_cols", 0) if method == "A2" else 0
        needed = 3**tess.dim + 1 + extra
        if tess.b < needed:
            parser.error(
                f"--b {tess.b} is too small for tagging: method {method} "
                f"needs at least {needed} blocks in d={tess.dim}"
            )
    kwargs = dict(
        p=args.p,
        stream=RandomStream(seed),
        distribution=args.distribution,
        optimize=getattr(args, "optimize", False),
        error_iterations=args.error_iterations,
    )
    if method in ("A1", "A2", "A3"):  # type-B ignores extra tagging columns
        kwargs["extra_cols"] = getattr(args, "extra_cols", 0)
        kwargs["extra_samples"] = getattr(args, "extra_samples", False)
    return compress(op, tess, k, method_id=method, **kwargs)


def cmd_compress(args, parser) -> int:
    seed = _resolve_seed(args)
    try:
        rep, report = _run_one(args, parser, args.method, args.k, args.n, seed)
    except (DegenerateTagsError, InteriorResonanceError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    payload = json.dumps(report.to_dict(), indent=2)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)
    if args.save:
        write_ublr(args.save, rep)
    if report.relative_error is not None and not np.isfinite(report.relative_error):
        print("numerical failure: relative error is not finite", file=sys.stderr)
        return 1
    return 0


def _sweep_row(args, method, k, n, seed):
    row = {c: "" for c in SWEEP_COLUMNS}
    row.update(method=method, k=k, p=args.p, seed=seed)
    if n is not None:
        row["N"] = n
    try:
        _, report = _run_one(args, _RaisingParser(), method, k, n, seed)
    except Exception as exc:  # partial failures become rows, sweep continues
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    cfg = report.config
    row.update(
        N=cfg["N"], b=cfg["b"], m=cfg["m"], d=cfg["d"],
        distribution=cfg.get("distribution") or "",
        extra_cols=cfg.get("extra_cols") if cfg.get("extra_cols") is not None else "",
        matvecs_I=report.phase_total("I"),
        matvecs_II=report.phase_total("II"),
        matvecs_III=report.phase_total("III"),
        matvecs_total=report.matvecs_total,
        time_I_s=f"{report.times_s.get('I', 0.0):.3g}",
        time_II_s=f"{report.times_s.get('II', 0.0):.3g}",
        time_III_s=f"{report.times_s.get('III', 0.0):.3g}",
        rel_error=report.relative_error,
    )
    return row


def _sweep_worker(payload):
    args, method, k, n, seed = payload
    return _sweep_row(args, method, k, n, seed)


def cmd_sweep(args, parser) -> int:
    base_seed = _resolve_seed(args)
    n_values = args.n_list if args.n_list else [None]
    combos = []
    for idx_nk, (n, k) in enumerate(
        [(n, k) for n in n_values for k in args.k_list]
    ):
        for method in args.methods:
            if method not in METHODS:
                parser.error(f"unknown method {method!r} in --methods")
            # same derived seed across methods so comparisons stay paired
            combos.append((args, method, k, n, base_seed + idx_nk))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_worker, combos))
    else:
        rows = [_sweep_row(args, m, k, n, s) for (_, m, k, n, s) in combos]

    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return 0


def cmd_aspect_ratios(args, parser) -> int:
    rows = []
    for b in args.b_list:
        per_axis = int(round(b ** (1.0 / args.d)))
        if per_axis**args.d != b:
            parser.error(f"--b-list entry {b} is not a {args.d}-th power")
        tess = build_tessellation(grid_points(per_axis, args.d), b)
        for distribution in args.distributions:
            for extra in args.extra_cols_list:
                group = []
                for seed in args.seeds:
                    try:
                        T = make_tagging_matrix(
                            b, args.d, extra, distribution, RandomStream(seed)
                        )
                    except ValueError as exc:
                        parser.error(str(exc))
                    for i in range(tess.b):
                        if len(tess.far_fields[i]) == 0:
                            continue  # excluded from statistics
                        base = tag_null_vector(T, tess, i)
                        rho_base = aspect_ratio(projected_tags(T, tess, base), tess)
                        if extra >= 1:
                            best = optimize_null_vector(T, tess, i)
                            rho_opt = aspect_ratio(
                                projected_tags(T, tess, best), tess
                            )
                        else:
                            rho_opt = rho_base
                        nullity = T.n_cols - len(tess.neighbor_lists[i])
                        rows.append({
                            "row_type": "block", "b": b, "d": args.d,
                            "distribution": distribution, "extra_cols": extra,
                            "seed": seed, "block_id": i + 1, "nullity": nullity,
                            "rho_base": rho_base, "rho_optimized": rho_opt,
                            "stat": "",
                        })
                        group.append((rho_base, rho_opt))
                if group:
                    arr = np.array(group)
                    for stat, q in (("q1", 0.25), ("median", 0.5), ("q3", 0.75)):
                        rows.append({
                            "row_type": "summary", "b": b, "d": args.d,
                            "distribution": distribution, "extra_cols": extra,
                            "seed": "", "block_id": "", "nullity": "",
                            "rho_base": np.quantile(arr[:, 0], q),
                            "rho_optimized": np.quantile(arr[:, 1], q),
                            "stat": stat,
                        })
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ASPECT_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
