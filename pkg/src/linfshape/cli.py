"""Command-line interface.

    linfshape gen     write a synthetic fuselage pair as a CSV bundle
    linfshape solve   choose actuators and forces for a bundle
    linfshape study   proposed method vs. the l2 baseline over many pairs
    linfshape theory  Monte-Carlo feasibility rates and error-scaling slopes
    linfshape bench   time the solver on synthetic pairs

Exit codes: 0 success, 2 invalid input or I/O failure, 3 a solve diverged or
hit its iteration limit (artifacts are still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from .admm import AdmmConfig
from .errors import NumericalError
from .numerics import _atomic_write_text
from .problem import load_bundle, save_bundle, solve_pair
from .sim import (
    FuselageGenParams,
    TheoryCheckConfig,
    case_study,
    error_scaling_study,
    gen_fuselage_pair,
    metrics,
    monte_carlo_feasibility,
)

log = logging.getLogger("linfshape")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
FORMAT_VERSION = 1


class NotConverged(Exception):
    """Raised after artifacts are written when some solve did not converge."""


def _jsonable(obj):
    # strict JSON has no NaN or infinity; write them as null
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _write_json(path, obj):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    _atomic_write_text(path, text + "\n")


def _write_rows(path, rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    _atomic_write_text(path, buf.getvalue())


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


ADMM_DEFAULTS = {"rho": 1.0, "abs_tol": 1e-6, "rel_tol": 1e-5, "max_iters": 250_000}
DEFAULT_BUDGET = 18


def _admm_config(args, fallback=None):
    """ADMM settings from the flags, then ``fallback`` (a manifest), then defaults."""
    fallback = fallback or {}
    values = {}
    for key, default in ADMM_DEFAULTS.items():
        value = getattr(args, key)
        if value is None:
            value = fallback.get(key, default)
        values[key] = type(default)(value)
    return AdmmConfig(**values)


def _gen_params(args, **extra):
    return FuselageGenParams(
        n_meas=args.n_meas,
        deviation_scale=args.deviation_scale,
        fixture_fraction=args.fixture_fraction,
        **extra,
    )


def cmd_gen(args):
    params = _gen_params(args, seed=args.seed)
    asm = gen_fuselage_pair(params, L_N=args.scale_ln)
    config = _admm_config(args)
    manifest = {
        "format_version": FORMAT_VERSION,
        "generator": asdict(params),
        "seed": args.seed,
        "budget": DEFAULT_BUDGET if args.budget is None else args.budget,
        "admm": {k: getattr(config, k) for k in ADMM_DEFAULTS},
    }
    save_bundle(args.out, asm, manifest)
    print(f"wrote bundle to {args.out} (n_meas={asm.n_meas}, m1={asm.m1}, m2={asm.m2})")
    return EXIT_OK


def cmd_solve(args):
    asm, manifest = load_bundle(args.bundle)
    if args.scale_ln is not None:
        asm = asm.with_scale(args.scale_ln)
    config = _admm_config(args, manifest.get("admm"))
    budget = args.budget if args.budget is not None else int(manifest.get("budget", DEFAULT_BUDGET))
    if args.trace:
        _ensure_parent(args.trace)
    sol = solve_pair(asm, budget, config, trace_path=args.trace)
    if args.trace and not os.path.exists(args.trace):
        # nothing to refit (empty support); keep the artifact contract
        _write_rows(args.trace, [], ["iter", "r_norm", "s_norm", "objective"])
    report = sol.to_dict()
    report["metrics"] = asdict(metrics(sol, asm.n_meas))
    report["budget"] = budget
    report["admm"] = asdict(config)
    report["L_N"] = asm.L_N
    report["converged"] = sol.converged
    report["probes"] = [
        {"lambda": lam, "nonzeros": count, "converged": ok} for lam, count, ok in sol.probes
    ]
    report["format_version"] = FORMAT_VERSION
    _ensure_parent(args.out)
    _write_json(args.out, report)
    m = report["metrics"]
    print(
        f"active={sol.n_active} lambda={sol.lambda_used:.6g} "
        f"MG={m['mg']:.6g} RMSG={m['rmsg']:.6g} MF1={m['mf1']:.6g} MF2={m['mf2']:.6g}"
    )
    if not sol.converged:
        raise NotConverged("at least one ADMM solve hit the iteration limit")
    return EXIT_OK


def cmd_study(args):
    config = _admm_config(args)
    params = _gen_params(args)
    os.makedirs(args.out, exist_ok=True)

    def progress(rec):
        if args.verbose:
            print(
                f"pair {rec.index}: MG {rec.proposed.mg:.5f} vs {rec.baseline.mg:.5f}",
                file=sys.stderr,
            )

    records, comparison = case_study(
        args.pairs, budget=args.budget, config=config, params=params, seed=args.seed,
        L_N=args.scale_ln, progress=progress,
    )
    rows = [r.row() for r in records]
    _write_rows(os.path.join(args.out, "pairs.csv"), rows, list(rows[0]))

    long_rows = []
    for r in records:
        for method, rep in (("proposed", r.proposed), ("baseline", r.baseline)):
            for metric, value in asdict(rep).items():
                long_rows.append(
                    {"pair_id": r.index, "method": method, "metric": metric, "value": value}
                )
    _write_rows(
        os.path.join(args.out, "boxplot.csv"), long_rows, ["pair_id", "method", "metric", "value"]
    )

    summary = comparison.summary()
    summary.update(
        format_version=FORMAT_VERSION,
        seed=args.seed,
        budget=args.budget,
        L_N=args.scale_ln,
        admm=asdict(config),
        generator={k: v for k, v in asdict(params).items() if k != "seed"},
        all_converged=all(r.converged for r in records),
        means={
            f"{metric}_{method}": float(np.mean([getattr(getattr(r, method), metric) for r in records]))
            for method in ("proposed", "baseline")
            for metric in ("rmsg", "mg", "mf1", "mf2")
        },
    )
    _write_json(os.path.join(args.out, "summary.json"), summary)
    print(
        f"{args.pairs} pairs: MG improvement {comparison.mg_mean:.6g} "
        f"(p={comparison.mg_p:.3g}), RMSG improvement {comparison.rmsg_mean:.6g} "
        f"(p={comparison.rmsg_p:.3g})"
    )
    if not summary["all_converged"]:
        raise NotConverged("some pairs hit the ADMM iteration limit")
    return EXIT_OK


def cmd_theory(args):
    cfg = TheoryCheckConfig(
        sigma=args.sigma,
        alpha=args.alpha,
        sparsity=args.sparsity,
        n_grid=tuple(args.n_grid),
        p=args.p,
        trials=args.trials,
        seed=args.seed,
    )
    report = {"format_version": FORMAT_VERSION, "config": asdict(cfg)}
    if args.mode in ("feasibility", "both"):
        rates = monte_carlo_feasibility(cfg)
        report["feasibility"] = {str(n): v for n, v in rates.items()}
        for n, v in rates.items():
            print(f"n={n} p={v['p']}: rate {v['rate']:.3f} (bound {v['bound']:.3f})")
    if args.mode in ("scaling", "both"):
        study = error_scaling_study(cfg, n_boot=args.bootstrap)
        report["scaling"] = study
        print(
            f"estimation slope {study['estimation_slope']:.3f} "
            f"CI {study['estimation_slope_ci']}, prediction slope "
            f"{study['prediction_slope']:.3f} CI {study['prediction_slope_ci']}"
        )
    _ensure_parent(args.out)
    _write_json(args.out, report)
    return EXIT_OK


def cmd_bench(args):
    if args.pairs < 1:
        raise ValueError("--pairs must be at least 1")
    config = _admm_config(args)
    params = _gen_params(args)
    rows = []
    for i in range(args.pairs):
        asm = gen_fuselage_pair(params.replace(seed=args.seed + i), L_N=args.scale_ln)
        t0 = time.perf_counter()
        sol = solve_pair(asm, args.budget, config)
        elapsed = time.perf_counter() - t0
        rows.append({
            "pair": i,
            "seconds": elapsed,
            "probes": len(sol.probes),
            "refit_iters": sol.refit.get("iters_used", 0),
            "converged": sol.converged,
        })
        print(f"pair {i}: {elapsed:.3f}s, {len(sol.probes)} probes, converged={sol.converged}")
    total = sum(r["seconds"] for r in rows)
    print(f"total {total:.3f}s, {total / max(len(rows), 1):.3f}s per pair")
    if args.out:
        _ensure_parent(args.out)
        _write_rows(args.out, rows, list(rows[0]))
    return EXIT_OK


def _add_admm_flags(p):
    # None means "not given"; commands fill in a manifest value or ADMM_DEFAULTS
    g = p.add_argument_group("ADMM")
    g.add_argument("--rho", type=float, default=None, help="penalty parameter (default 1)")
    g.add_argument("--abs-tol", type=float, default=None, help="absolute tolerance (default 1e-6)")
    g.add_argument("--rel-tol", type=float, default=None, help="relative tolerance (default 1e-5)")
    g.add_argument("--max-iters", type=int, default=None,
                   help="iteration cap per solve (default 250000)")


def _add_gen_flags(p):
    g = p.add_argument_group("generator")
    g.add_argument("--n-meas", type=int, default=182, help="measurement points per fuselage")
    g.add_argument("--deviation-scale", type=float, default=0.05, help="peak deviation (in)")
    g.add_argument("--fixture-fraction", type=float, default=0.3,
                   help="fraction of the section held by fixtures")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="linfshape", description="Sparse max-gap shape control for fuselage assembly."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic fuselage pair bundle")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale-ln", type=float, default=1e7, help="loss scale L_N (default 1e7)")
    p.add_argument("--budget", type=int, default=None,
                   help="actuator budget M recorded in the manifest (default 18)")
    _add_gen_flags(p)
    _add_admm_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve the actuator-selection problem for a bundle")
    p.add_argument("--bundle", required=True, help="bundle directory written by 'gen'")
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--budget", type=int, default=None,
                   help="actuator budget M (default: the manifest's, else 18)")
    p.add_argument("--scale-ln", type=float, default=None,
                   help="override the bundle's loss scale L_N")
    p.add_argument("--trace", default=None, help="write the refit's per-iteration CSV here")
    _add_admm_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("study", help="compare against the l2 design-shape baseline")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=18)
    p.add_argument("--scale-ln", type=float, default=1e7)
    _add_gen_flags(p)
    _add_admm_flags(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("theory", help="Monte-Carlo checks of the estimation theory")
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--mode", choices=("feasibility", "scaling", "both"), default="both")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=3.0)
    p.add_argument("--sparsity", type=int, default=5)
    p.add_argument("--n-grid", type=int, nargs="+", default=[128, 256, 512, 1024])
    p.add_argument("--p", type=int, default=64)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bootstrap", type=int, default=200, help="bootstrap resamples for slope CIs")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("bench", help="time the full pipeline on synthetic pairs")
    p.add_argument("--pairs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=18)
    p.add_argument("--scale-ln", type=float, default=1e7)
    p.add_argument("--out", default=None, help="optional CSV of per-pair timings")
    _add_gen_flags(p)
    _add_admm_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except NotConverged as exc:
        print(f"warning: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except NumericalError as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
