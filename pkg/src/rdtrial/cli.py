"""Command-line entry point: analyze one dataset, solve DGP coefficients, or
run the simulation grid.

Exit codes: 0 success, 1 computation error, 2 usage error. Errors go to
standard error, data to standard output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import CONFIG_SCHEMA_VERSION, ConfigError, load_config
from .harness import CSV_COLUMNS, run_grid
from .methods import METHOD_NAMES, apply_method
from .simgen import ScenarioParams, conditional_cells, solve_coefficients
from .trialdata import load_csv


def _result_payload(res) -> dict:
    return {
        "method": res.method,
        "estimate": res.estimate,
        "se": res.se,
        "ci_lower": res.ci[0],
        "ci_upper": res.ci[1],
        "p_value": res.p_value,
        "estimand": res.estimand,
        "flags": {
            "separation": res.flags.separation,
            "nonconvergence": res.flags.nonconvergence,
            "bootstrap_failures": res.flags.bootstrap_failures,
            "ci_truncated": res.flags.ci_truncated,
        },
    }


def _fmt6(x: float) -> str:
    return "NA" if not np.isfinite(x) else f"{x:.6f}"


def cmd_analyze(args) -> int:
    covs = args.covariates or []
    d = load_csv(args.input, args.outcome, args.arm, covs)
    res = apply_method(d, covs, args.method, alpha=args.alpha,
                       boot_b=args.boot_b, seed=args.seed)
    payload = _result_payload(res)
    if args.format == "json":
        print(json.dumps(payload, sort_keys=True))
    else:
        keys = ["method", "estimate", "se", "ci_lower", "ci_upper", "p_value", "estimand"]
        print(",".join(keys))
        vals = [payload["method"]] + [_fmt6(payload[k]) for k in keys[1:-1]] + [payload["estimand"]]
        print(",".join(vals))
    return 0


def cmd_solve_dgp(args) -> int:
    params = ScenarioParams(n=2, delta=args.delta, beta_cov=args.beta_cov, p0=args.p0)
    c = solve_coefficients(params)
    cells = conditional_cells(c, args.beta_cov)
    print(f"beta0 = {c.beta0:.6f}")
    print(f"betaA = {c.betaA:.6f}")
    print(f"achieved_p0 = {c.achieved_p0:.10f}")
    print(f"achieved_delta = {c.achieved_delta:.10f}")
    print("arm x1 x2 prob")
    for (a, x1, x2), p in sorted(cells.items()):
        print(f"{a} {x1} {x2} {p:.6f}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    sink = os.path.join(args.out, "results.csv")
    manifest = os.path.join(args.out, "manifest.json")
    run_grid(cfg.grid, cfg.methods, cfg.replications, cfg.base_seed,
             workers=args.workers, sink_path=sink, alpha=cfg.alpha,
             boot_b=cfg.bootstrap_b, resume=args.resume, manifest_path=manifest)
    print(sink)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdtrial",
        description="Risk-difference estimation and testing for two-arm binary trials.",
    )
    parser.add_argument(
        "--version", action="version",
        version=f"rdtrial {__version__} (config schema {CONFIG_SCHEMA_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="run one inference method on a CSV dataset")
    pa.add_argument("--input", required=True)
    pa.add_argument("--outcome", required=True)
    pa.add_argument("--arm", required=True)
    pa.add_argument("--covariates", nargs="*", default=[])
    pa.add_argument("--method", required=True, choices=METHOD_NAMES)
    pa.add_argument("--alpha", type=float, default=0.05)
    pa.add_argument("--boot-b", type=int, default=1000)
    pa.add_argument("--seed", type=int, default=None)
    pa.add_argument("--format", choices=("json", "csv"), default="json")
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("solve-dgp", help="solve outcome-model coefficients for target marginals")
    ps.add_argument("--p0", type=float, default=0.20)
    ps.add_argument("--delta", type=float, required=True)
    ps.add_argument("--beta-cov", type=float, required=True)
    ps.set_defaults(func=cmd_solve_dgp)

    pm = sub.add_parser("simulate", help="run a scenario grid from a config file")
    pm.add_argument("--config", required=True)
    pm.add_argument("--out", required=True)
    pm.add_argument("--workers", type=int, default=1)
    pm.add_argument("--resume", action="store_true")
    pm.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - map computation errors to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
