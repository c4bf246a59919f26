"""Scenario-grid execution and operating-characteristic aggregation.

Each replicate draws its dataset from an independent counter-based generator
stream keyed by (base seed, scenario, replicate index), so results are
independent of execution order and worker count. Per-method exclusion follows
the study's accounting: non-converged maximum-likelihood fits exclude the
affected g-computation methods only, degenerate stratified tables exclude the
MH test only, and separated-but-converged runs are retained everywhere.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import gcomp, mh
from .exact import ss_test
from .gcomp import (
    BootstrapFailureError,
    InsufficientDataError,
    standardize,
    var_boot,
    var_ge,
    var_liu,
    var_ye,
    zhang_ci,
    zhang_score,
)
from .glm import DegenerateLeverageError, build_design, fit_firth_flic, fit_ml
from .methods import METHOD_NAMES
from .numerics import norm_cdf, norm_quantile
from .simgen import ScenarioParams, SolvedCoefficients, gen_trial, solve_coefficients
from .trialdata import stratify

DEFAULT_ALPHA = 0.05

CSV_COLUMNS = (
    "scenario_id", "n", "delta", "beta_cov", "method",
    "rejection_rate", "bias", "rmse", "coverage",
    "n_used", "n_excluded",
    "separation_rate", "nonconvergence_rate", "mc_se",
)

#: g-computation methods excluded when the shared ML fit does not converge.
_ML_DEPENDENT = ("ge", "liu", "ye", "boot", "zhang")


class AggregationError(RuntimeError):
    """A method had zero usable replicates."""


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str
    n: int
    delta: float
    beta_cov: float
    p0: float = 0.20

    def params(self) -> ScenarioParams:
        return ScenarioParams(n=self.n, delta=self.delta, beta_cov=self.beta_cov, p0=self.p0)


@dataclass(frozen=True)
class MethodRecord:
    estimate: float
    se: float
    ci: tuple[float, float]
    p_value: float
    reject: bool


@dataclass(frozen=True)
class RepOutcome:
    scenario_id: str
    replicate: int
    records: dict          # method -> MethodRecord or failure-reason string
    separated: bool
    converged: bool
    mh_degenerate: bool


@dataclass(frozen=True)
class MethodAggregate:
    rejection_rate: float
    bias: float
    rmse: float
    coverage: float
    n_used: int
    n_excluded: int
    mc_se_rejection: float


@dataclass(frozen=True)
class OperatingCharacteristics:
    scenario_id: str
    per_method: dict
    separation_rate: float
    nonconvergence_rate: float
    mh_failure_rate: float


def paper_grid(p0: float = 0.20) -> list[ScenarioSpec]:
    """The 3 x 3 x 5 scenario grid of the study."""
    grid = []
    for delta in (0.0, 0.15, 0.30):
        for beta in (np.log(1.0), np.log(1.5), np.log(3.0)):
            for n in (30, 60, 90, 120, 150):
                grid.append(make_scenario(n, delta, float(beta), p0=p0))
    return grid


def make_scenario(n: int, delta: float, beta_cov: float, p0: float = 0.20) -> ScenarioSpec:
    sid = f"n{n:03d}_d{int(round(delta * 100)):03d}_b{int(round(np.exp(beta_cov) * 100)):03d}"
    return ScenarioSpec(scenario_id=sid, n=n, delta=delta, beta_cov=beta_cov, p0=p0)


def _entropy_key(spec: ScenarioSpec) -> tuple[int, ...]:
    # nonnegative integers for SeedSequence entropy
    return (spec.n, int(round((spec.delta + 1.0) * 10_000)),
            int(round((spec.beta_cov + 100.0) * 1_000_000)))


def replicate_rng(base_seed: int, spec: ScenarioSpec, r: int, stream: int = 0):
    ss = np.random.SeedSequence((base_seed, *_entropy_key(spec), r, stream))
    return np.random.Generator(np.random.Philox(ss))


def _wald_record(estimate: float, variance: float, alpha: float) -> MethodRecord:
    se = float(np.sqrt(max(variance, 0.0)))
    z = norm_quantile(1 - alpha / 2)
    ci = (max(-1.0, estimate - z * se), min(1.0, estimate + z * se))
    if se > 0:
        p = float(2 * norm_cdf(-abs(estimate) / se))
    else:
        p = 1.0 if estimate == 0 else 0.0
    return MethodRecord(estimate=estimate, se=se, ci=ci, p_value=p, reject=p <= alpha)


def run_replicate(spec: ScenarioSpec, coeffs: SolvedCoefficients, methods,
                  base_seed: int, r: int, alpha: float = DEFAULT_ALPHA,
                  boot_b: int = gcomp.DEFAULT_BOOT_B) -> RepOutcome:
    """Generate one dataset and apply every requested method to it."""
    rng = replicate_rng(base_seed, spec, r, stream=0)
    d = gen_trial(spec.params(), coeffs, rng)
    records: dict = {}

    # shared working model; also drives the per-replicate diagnostics
    x = build_design(d, ["X1", "X2"])
    fit = fit_ml(x, d.y)
    cf = standardize(fit, x) if fit.converged else None

    for method in methods:
        try:
            if method == "suissa":
                k1, n1, k0, n0 = d.arm_counts()
                res = ss_test(k1, n1, k0, n0)
                records[method] = MethodRecord(
                    estimate=k1 / n1 - k0 / n0, se=float("nan"),
                    ci=(float("nan"), float("nan")),
                    p_value=res.p_value, reject=res.p_value <= alpha)
            elif method == "mh-test":
                res = mh.mh_test(stratify(d, ["X1", "X2"]))
                records[method] = MethodRecord(
                    estimate=float("nan"), se=float("nan"),
                    ci=(float("nan"), float("nan")),
                    p_value=res.p_value, reject=res.p_value <= alpha)
            elif method in ("mh-sato", "mh-mgr"):
                kind = "sato" if method == "mh-sato" else "mgr"
                res = mh.mh_rd(stratify(d, ["X1", "X2"]), variance_kind=kind, alpha=alpha)
                records[method] = MethodRecord(
                    estimate=res.estimate, se=float(np.sqrt(res.variance)),
                    ci=res.ci, p_value=res.p_value, reject=res.p_value <= alpha)
            elif method == "firth":
                ffit = fit_firth_flic(x, d.y)
                fcf = standardize(ffit, x)
                records[method] = _wald_record(fcf.delta, var_ge(ffit, x, fcf), alpha)
            elif method in _ML_DEPENDENT:
                if not fit.converged:
                    records[method] = "nonconvergence"
                    continue
                if method == "ge":
                    records[method] = _wald_record(cf.delta, var_ge(fit, x, cf), alpha)
                elif method == "liu":
                    records[method] = _wald_record(cf.delta, var_liu(fit, x, d.y, cf), alpha)
                elif method == "ye":
                    records[method] = _wald_record(cf.delta, var_ye(fit, x, d.y, d.arm, cf), alpha)
                elif method == "boot":
                    brng = replicate_rng(base_seed, spec, r, stream=1)
                    res = var_boot(d, ["X1", "X2"], B=boot_b, rng=brng)
                    records[method] = _wald_record(cf.delta, res["variance"], alpha)
                else:  # zhang
                    v = var_ye(fit, x, d.y, d.arm, cf)
                    test = zhang_score(cf.delta, v, d.n)
                    ci = zhang_ci(cf.delta, v, d.n, alpha)
                    records[method] = MethodRecord(
                        estimate=cf.delta, se=float(np.sqrt(v)), ci=ci,
                        p_value=test["p_value"], reject=test["p_value"] <= alpha)
            else:
                raise ValueError(f"unknown method {method!r}")
        except mh.DegenerateTableError:
            records[method] = "mh_degenerate"
        except mh.StratumStructureError:
            records[method] = "empty_arm_stratum"
        except (BootstrapFailureError, InsufficientDataError,
                DegenerateLeverageError,
                gcomp.DegenerateInversionError) as exc:
            records[method] = type(exc).__name__

    return RepOutcome(
        scenario_id=spec.scenario_id, replicate=r, records=records,
        separated=fit.separation, converged=fit.converged,
        mh_degenerate=records.get("mh-test") == "mh_degenerate",
    )


def _replicate_worker(args):
    return run_replicate(*args)


def run_scenario(spec: ScenarioSpec, methods, R: int, base_seed: int,
                 workers: int = 1, alpha: float = DEFAULT_ALPHA,
                 boot_b: int = gcomp.DEFAULT_BOOT_B):
    """Execute R replicates of one scenario; returns (outcomes, oc)."""
    if R < 1:
        raise ValueError("R must be at least 1")
    methods = list(methods)
    coeffs = solve_coefficients(spec.params())
    argses = [(spec, coeffs, methods, base_seed, r, alpha, boot_b) for r in range(R)]
    if workers > 1:
        chunk = max(1, R // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_replicate_worker, argses, chunksize=chunk))
    else:
        outcomes = [run_replicate(*a) for a in argses]
    oc = aggregate(outcomes, spec, methods, truth=spec.delta)
    return outcomes, oc


def aggregate(outcomes, spec: ScenarioSpec, methods, truth: float) -> OperatingCharacteristics:
    """Rejection rate, bias, RMSE, and coverage per method over usable replicates."""
    R = len(outcomes)
    per_method = {}
    for method in methods:
        recs = [o.records.get(method) for o in outcomes]
        used = [rec for rec in recs if isinstance(rec, MethodRecord)]
        n_used = len(used)
        if n_used == 0:
            raise AggregationError(f"no usable replicates for method {method!r}")
        rej = float(np.mean([rec.reject for rec in used]))
        ests = np.array([rec.estimate for rec in used])
        finite = np.isfinite(ests)
        if np.any(finite):
            bias = float(np.mean(ests[finite])) - truth
            rmse = float(np.sqrt(np.mean((ests[finite] - truth) ** 2)))
        else:
            bias = rmse = float("nan")
        cis = [rec.ci for rec in used if np.isfinite(rec.ci[0]) and np.isfinite(rec.ci[1])]
        if cis:
            coverage = float(np.mean([lo <= truth <= hi for lo, hi in cis]))
        else:
            coverage = float("nan")
        per_method[method] = MethodAggregate(
            rejection_rate=rej, bias=bias, rmse=rmse, coverage=coverage,
            n_used=n_used, n_excluded=R - n_used,
            mc_se_rejection=float(np.sqrt(rej * (1 - rej) / n_used)),
        )
    return OperatingCharacteristics(
        scenario_id=spec.scenario_id,
        per_method=per_method,
        separation_rate=float(np.mean([o.separated for o in outcomes])),
        nonconvergence_rate=float(np.mean([not o.converged for o in outcomes])),
        mh_failure_rate=float(np.mean([o.mh_degenerate for o in outcomes])),
    )


def _fmt(x) -> str:
    if isinstance(x, float):
        if not np.isfinite(x):
            return "NA"
        return format(x, ".6g")
    return str(x)


def oc_rows(spec: ScenarioSpec, oc: OperatingCharacteristics) -> list[list[str]]:
    rows = []
    for method, agg in oc.per_method.items():
        rows.append([
            spec.scenario_id, str(spec.n), _fmt(spec.delta), _fmt(spec.beta_cov), method,
            _fmt(agg.rejection_rate), _fmt(agg.bias), _fmt(agg.rmse), _fmt(agg.coverage),
            str(agg.n_used), str(agg.n_excluded),
            _fmt(oc.separation_rate), _fmt(oc.nonconvergence_rate),
            _fmt(agg.mc_se_rejection),
        ])
    return rows


def run_grid(grid, methods, R: int, base_seed: int, workers: int = 1,
             sink_path=None, alpha: float = DEFAULT_ALPHA,
             boot_b: int = gcomp.DEFAULT_BOOT_B, resume: bool = False,
             manifest_path=None) -> list[list[str]]:
    """Run every scenario, streaming OC rows to the sink in stable order.

    With resume=True, scenarios whose rows are already complete in the sink
    are skipped and the remaining ones appended deterministically.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    methods = list(methods)
    done: set[str] = set()
    existing_rows: list[list[str]] = []
    if resume and sink_path and os.path.exists(sink_path):
        with open(sink_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            counts: dict[str, int] = {}
            for row in reader:
                existing_rows.append(row)
                counts[row[0]] = counts.get(row[0], 0) + 1
            done = {sid for sid, c in counts.items() if c == len(methods)}

    all_rows = list(existing_rows)
    sink = None
    try:
        if sink_path:
            mode = "a" if (resume and existing_rows) else "w"
            sink = open(sink_path, mode, newline="", encoding="utf-8")
            writer = csv.writer(sink)
            if mode == "w":
                writer.writerow(CSV_COLUMNS)
        for spec in grid:
            if spec.scenario_id in done:
                continue
            _, oc = run_scenario(spec, methods, R, base_seed, workers=workers,
                                 alpha=alpha, boot_b=boot_b)
            rows = oc_rows(spec, oc)
            all_rows.extend(rows)
            if sink:
                for row in rows:
                    writer.writerow(row)
                sink.flush()
    finally:
        if sink:
            sink.close()
    if manifest_path:
        manifest = {
            "schema_version": 1,
            "base_seed": base_seed,
            "replications": R,
            "alpha": alpha,
            "bootstrap_b": boot_b,
            "methods": methods,
            "scenarios": [s.scenario_id for s in grid],
        }
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return all_rows
