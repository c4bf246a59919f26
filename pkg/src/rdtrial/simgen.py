"""Data-generating process for the simulation study.

Two independent Bernoulli(0.5) baseline covariates, 1:1 simple randomization,
and a logistic outcome model whose intercept and treatment coefficient are
solved by bisection so that the marginal control response probability and the
marginal risk difference hit their targets exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import expit
from .trialdata import TrialDataset

_BRACKET = 20.0
_BISECT_ITERS = 200
_TARGET_TOL = 1e-12


class BracketError(ValueError):
    """The target probability is unattainable within the logit bracket."""


@dataclass(frozen=True)
class ScenarioParams:
    n: int
    delta: float
    beta_cov: float
    p0: float = 0.20
    alloc: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ValueError(f"p0 must lie in (0, 1), got {self.p0}")
        if not 0.0 < self.p0 + self.delta < 1.0:
            raise ValueError(f"p0 + delta = {self.p0 + self.delta} outside (0, 1)")
        if self.n < 2:
            raise ValueError("n must be at least 2")


@dataclass(frozen=True)
class SolvedCoefficients:
    beta0: float
    betaA: float
    achieved_p0: float
    achieved_delta: float


def marginal_mean(beta0: float, betaA_times_a: float, beta_cov: float) -> float:
    """Response probability averaged over the four equally likely covariate cells."""
    k = np.array([0.0, 1.0, 1.0, 2.0])
    return float(np.mean(expit(beta0 + betaA_times_a + beta_cov * k)))


def _bisect(f, target: float) -> float:
    lo, hi = -_BRACKET, _BRACKET
    flo, fhi = f(lo) - target, f(hi) - target
    if flo > 0 or fhi < 0:
        raise BracketError(f"target {target} outside achievable range")
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        fm = f(mid) - target
        if abs(fm) < _TARGET_TOL:
            return mid
        if fm < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_coefficients(p: ScenarioParams) -> SolvedCoefficients:
    """Pin the marginal control response rate, then the marginal risk difference."""
    beta0 = _bisect(lambda b: marginal_mean(b, 0.0, p.beta_cov), p.p0)
    betaA = _bisect(lambda b: marginal_mean(beta0, b, p.beta_cov), p.p0 + p.delta)
    achieved_p0 = marginal_mean(beta0, 0.0, p.beta_cov)
    achieved_p1 = marginal_mean(beta0, betaA, p.beta_cov)
    return SolvedCoefficients(beta0=beta0, betaA=betaA,
                              achieved_p0=achieved_p0,
                              achieved_delta=achieved_p1 - achieved_p0)


def conditional_cells(c: SolvedCoefficients, beta_cov: float) -> dict:
    """The eight conditional response probabilities, keyed by (a, x1, x2)."""
    out = {}
    for a in (0, 1):
        for x1 in (0, 1):
            for x2 in (0, 1):
                lp = c.beta0 + c.betaA * a + beta_cov * (x1 + x2)
                out[(a, x1, x2)] = float(expit(lp))
    return out


def gen_trial(p: ScenarioParams, c: SolvedCoefficients, rng) -> TrialDataset:
    """Simulate one trial; consumes exactly 4 uniforms per subject in the
    fixed order (arm, x1, x2, y) so datasets are a pure function of the
    generator state."""
    u = rng.random((p.n, 4))
    arm = (u[:, 0] < p.alloc).astype(float)
    x1 = (u[:, 1] < 0.5).astype(float)
    x2 = (u[:, 2] < 0.5).astype(float)
    prob = expit(c.beta0 + c.betaA * arm + p.beta_cov * (x1 + x2))
    y = (u[:, 3] < prob).astype(float)
    return TrialDataset(y=y, arm=arm,
                        covariates={"X1": x1, "X2": x2},
                        cov_types={"X1": "categorical", "X2": "categorical"})
