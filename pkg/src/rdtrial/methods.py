"""Unified dispatch over all ten inference procedures.

Used by the command-line interface and the simulation harness; each procedure
returns a RiskDiffInference record tagged with its method name and estimand.
"""

from __future__ import annotations

import numpy as np

from . import gcomp, mh
from .exact import ss_test
from .gcomp import ESTIMAND, InferenceFlags, RiskDiffInference
from .trialdata import TrialDataset, stratify

METHOD_NAMES = (
    "suissa", "mh-test", "mh-sato", "mh-mgr",
    "ge", "liu", "ye", "boot", "zhang", "firth",
)

#: Methods whose inference reuses the maximum-likelihood working model.
ML_METHODS = ("ge", "liu", "ye", "boot", "zhang")


class MethodUsageError(ValueError):
    """The method cannot be combined with the supplied covariates."""


def apply_method(d: TrialDataset, covariate_cols, method: str, alpha: float = 0.05,
                 boot_b: int = gcomp.DEFAULT_BOOT_B, seed=None, rng=None) -> RiskDiffInference:
    """Run one named procedure on a dataset and return its inference record."""
    if method not in METHOD_NAMES:
        raise ValueError(f"unknown method {method!r}; choose from {METHOD_NAMES}")
    covariate_cols = list(covariate_cols)

    if method == "suissa":
        if covariate_cols:
            raise MethodUsageError("suissa accepts no covariates")
        k1, n1, k0, n0 = d.arm_counts()
        res = ss_test(k1, n1, k0, n0)
        return RiskDiffInference(method="suissa", estimate=k1 / n1 - k0 / n0,
                                 se=float("nan"), ci=(float("nan"), float("nan")),
                                 p_value=res.p_value, estimand=ESTIMAND["suissa"])

    if method == "mh-test":
        t = stratify(d, covariate_cols)
        res = mh.mh_test(t)
        return RiskDiffInference(method="mh_test", estimate=float("nan"),
                                 se=float("nan"), ci=(float("nan"), float("nan")),
                                 p_value=res.p_value, estimand=ESTIMAND["mh_test"])

    if method in ("mh-sato", "mh-mgr"):
        t = stratify(d, covariate_cols)
        kind = "sato" if method == "mh-sato" else "mgr"
        res = mh.mh_rd(t, variance_kind=kind, alpha=alpha)
        name = "mh_sato" if kind == "sato" else "mh_mgr"
        flags = InferenceFlags(ci_truncated=res.ci[0] <= -1.0 or res.ci[1] >= 1.0)
        return RiskDiffInference(method=name, estimate=res.estimate,
                                 se=float(np.sqrt(res.variance)), ci=res.ci,
                                 p_value=res.p_value, estimand=res.estimand, flags=flags)

    return gcomp.infer(d, covariate_cols, method, alpha=alpha,
                       boot_b=boot_b, seed=seed, rng=rng)
