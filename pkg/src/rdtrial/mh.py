"""Stratified Mantel-Haenszel test, Mantel-Fleiss adequacy check, and the
weighted risk-difference estimator with its two variance flavors.

The Sato variance treats the stratum-specific risk difference as common and
targets the covariate-conditional estimand; the ``mgr`` flavor is the
dually-consistent Greenland-Robins variance, which remains valid with sparse
strata and is paired with the marginal estimand label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import chisq1_sf, norm_cdf, norm_quantile
from .trialdata import StratumTable

#: Mantel-Fleiss adequacy threshold for the chi-square approximation.
MANTEL_FLEISS_MIN = 5.0


class DegenerateTableError(ValueError):
    """Every stratum has zero hypergeometric variance; the test statistic is undefined."""


class StratumStructureError(ValueError):
    """A stratum has an empty treatment or control arm."""

    def __init__(self, key):
        super().__init__(f"stratum {key} has an empty arm")
        self.key = key


@dataclass(frozen=True)
class MhTestResult:
    chi2: float
    p_value: float
    strata_used: int
    strata_skipped: int


@dataclass(frozen=True)
class MhRdResult:
    estimate: float
    variance: float
    ci: tuple[float, float]
    p_value: float
    variance_kind: str  # "sato" | "mgr"
    estimand: str       # "CPATE" | "MTE"
    variance_note: str = ""


def mh_test(t: StratumTable) -> MhTestResult:
    """Stratified chi-square test treating all table margins as fixed."""
    num = 0.0
    var_sum = 0.0
    used = skipped = 0
    for s in t.strata:
        ns = s.size
        m1 = s.x1 + s.x0
        if ns <= 1:
            skipped += 1
            continue
        var = s.n1 * s.n0 * m1 * (ns - m1) / (ns * ns * (ns - 1))
        if var <= 0:
            skipped += 1
            continue
        e = s.n1 * m1 / ns
        num += s.x1 - e
        var_sum += var
        used += 1
    if var_sum <= 0:
        raise DegenerateTableError("all strata have zero hypergeometric variance")
    chi2 = num * num / var_sum
    return MhTestResult(chi2=chi2, p_value=chisq1_sf(chi2),
                        strata_used=used, strata_skipped=skipped)


def mantel_fleiss(t: StratumTable) -> dict:
    """Count-adequacy criterion for trusting the chi-square approximation.

    The margin is the distance from the summed expectation to the nearer of
    its attainable bounds; the criterion asks for at least
    MANTEL_FLEISS_MIN.
    """
    e_sum = lo_sum = hi_sum = 0.0
    for s in t.strata:
        m1 = s.x1 + s.x0
        e_sum += s.n1 * m1 / s.size
        lo_sum += max(0, m1 - s.n0)
        hi_sum += min(s.n1, m1)
    margin = min(e_sum - lo_sum, hi_sum - e_sum)
    return {"satisfied": margin >= MANTEL_FLEISS_MIN, "margin": margin}


def mh_rd(t: StratumTable, variance_kind: str = "sato", alpha: float = 0.05) -> MhRdResult:
    """Weighted mean of stratum-specific risk differences with a Wald interval.

    ``variance_kind="sato"`` uses Sato's closed form (common risk difference
    across strata, CPATE label); ``"mgr"`` uses the dually-consistent
    Greenland-Robins form (MTE label).
    """
    if variance_kind not in ("sato", "mgr"):
        raise ValueError(f"unknown variance_kind {variance_kind!r}")
    for s in t.strata:
        if s.n1 < 1 or s.n0 < 1:
            raise StratumStructureError(s.key)
    w = np.array([s.n1 * s.n0 / s.size for s in t.strata], dtype=float)
    w_sum = float(w.sum())
    if w_sum <= 0:
        raise StratumStructureError("all")
    d = np.array([s.x1 / s.n1 - s.x0 / s.n0 for s in t.strata])
    estimate = float(w @ d) / w_sum

    if variance_kind == "sato":
        p_terms = np.array([
            (s.n1**2 * s.x0 - s.n0**2 * s.x1 + s.n1 * s.n0 * (s.n0 - s.n1) / 2.0) / s.size**2
            for s in t.strata
        ])
        q_terms = np.array([
            (s.x1 * (s.n0 - s.x0) + s.x0 * (s.n1 - s.x1)) / (2.0 * s.size)
            for s in t.strata
        ])
        variance = (estimate * float(p_terms.sum()) + float(q_terms.sum())) / w_sum**2
        estimand = "CPATE"
        note = ""
    else:
        terms = np.array([
            (s.x1 * (s.n1 - s.x1) * s.n0**3 + s.x0 * (s.n0 - s.x0) * s.n1**3)
            / (s.n1 * s.n0 * s.size**2)
            for s in t.strata
        ])
        variance = float(terms.sum()) / w_sum**2
        estimand = "MTE"
        note = "classical Greenland-Robins dually-consistent variance"

    if variance < 0:
        raise ValueError(f"computed variance is negative ({variance})")
    se = np.sqrt(variance)
    z = norm_quantile(1 - alpha / 2)
    lo = max(-1.0, estimate - z * se)
    hi = min(1.0, estimate + z * se)
    if se > 0:
        p = float(2 * norm_cdf(-abs(estimate) / se))
    else:
        p = 1.0 if estimate == 0 else 0.0
    return MhRdResult(estimate=estimate, variance=variance, ci=(lo, hi), p_value=p,
                      variance_kind=variance_kind, estimand=estimand, variance_note=note)
