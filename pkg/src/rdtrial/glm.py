"""Logistic regression working model.

Maximum-likelihood IRLS fitting, Firth-penalized fitting with an intercept
recalibration stage, model-based and HC3 covariances, and separation
diagnostics. The design always carries an intercept column followed by the
treatment indicator; categorical covariates are reference-coded against their
lowest level.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numerics import SymMatrix, expit, logit, spd_inverse
from .trialdata import TrialDataset

#: Fitted probabilities closer than this to 0 or 1 flag (quasi-)separation.
SEPARATION_PROB_MARGIN = 1e-7
#: Coefficient magnitude beyond which a fit is flagged as separated.
SEPARATION_BETA_BOUND = 15.0

DEFAULT_MAX_ITER = 25
DEFAULT_TOL = 1e-8
#: Relative deviance change treated as converged.
DEVIANCE_TOL = 1e-10


class DesignError(ValueError):
    """The design matrix is rank deficient or otherwise unusable."""


class DegenerateLeverageError(ValueError):
    """A hat value of one makes the HC3 weight undefined."""

    def __init__(self, row: int):
        super().__init__(f"hat value equals 1 at row {row}; HC3 undefined")
        self.row = row


@dataclass(frozen=True)
class DesignMatrix:
    matrix: np.ndarray
    names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]

    def with_arm(self, a: float) -> np.ndarray:
        """Copy of the matrix with the treatment column forced to ``a``."""
        out = self.matrix.copy()
        out[:, 1] = a
        return out


@dataclass(frozen=True)
class LogisticFit:
    beta: np.ndarray
    cov_model: SymMatrix
    fitted: np.ndarray
    hat: np.ndarray
    converged: bool
    separation: bool
    penalized: str = "none"  # "none" | "firth_flic"
    iterations: int = 0
    flic_unbounded: bool = False


def build_design(d: TrialDataset, covariate_cols: list[str]) -> DesignMatrix:
    """Intercept + treatment + (expanded) covariate columns."""
    cols = [np.ones(d.n), d.arm]
    names = ["(intercept)", "arm"]
    for c in covariate_cols:
        if c not in d.covariates:
            raise DesignError(f"unknown covariate {c!r}")
        v = d.covariates[c]
        if d.cov_types.get(c) == "real":
            cols.append(v)
            names.append(c)
        else:
            levels = np.unique(v)
            for lev in levels[1:]:  # reference-coded against the lowest level
                cols.append((v == lev).astype(float))
                names.append(c if levels.size == 2 else f"{c}={lev:g}")
    x = np.column_stack(cols)
    return DesignMatrix(matrix=x, names=tuple(names))


def _check_rank(x: np.ndarray):
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise DesignError("design matrix is rank deficient")


def _initial_beta(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    beta = np.zeros(x.shape[1])
    ybar = float(np.mean(y))
    # empirical-logit start, clipped away from the boundary
    beta[0] = logit(min(max(ybar, 1e-3), 1 - 1e-3))
    return beta


def _hat_diagonal(x: np.ndarray, w: np.ndarray, xtwx_inv: np.ndarray) -> np.ndarray:
    # h_i = w_i * x_i' (X'WX)^{-1} x_i
    return w * np.einsum("ij,jk,ik->i", x, xtwx_inv, x)


def _deviance(y: np.ndarray, p: np.ndarray) -> float:
    eps = 1e-300
    return -2.0 * float(np.sum(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))


def fit_ml(x: DesignMatrix, y: np.ndarray, max_iter: int = DEFAULT_MAX_ITER,
           tol: float = DEFAULT_TOL) -> LogisticFit:
    """IRLS maximum-likelihood fit.

    Convergence requires both score sup-norm < tol and relative deviance change
    < DEVIANCE_TOL; hitting the iteration cap returns converged=False rather
    than raising.
    """
    xm = x.matrix
    y = np.asarray(y, dtype=float)
    if xm.shape[0] <= xm.shape[1]:
        raise DesignError("need more observations than design columns")
    _check_rank(xm)
    beta = _initial_beta(xm, y)
    dev = np.inf
    converged = False
    it = 0
    p = expit(xm @ beta)
    for it in range(1, max_iter + 1):
        w = np.clip(p * (1 - p), 1e-300, None)
        xtwx = xm.T @ (xm * w[:, None])
        score = xm.T @ (y - p)
        try:
            step = np.linalg.solve(xtwx, score)
        except np.linalg.LinAlgError:
            break
        beta = beta + step
        p = expit(xm @ beta)
        new_dev = _deviance(y, p)
        score_ok = float(np.max(np.abs(xm.T @ (y - p)))) < tol
        dev_ok = abs(dev - new_dev) < DEVIANCE_TOL * (abs(new_dev) + 1.0)
        dev = new_dev
        if score_ok and dev_ok:
            converged = True
            # one polishing step: quadratic convergence drives the score far
            # below tolerance, so saturated-model reductions hold to ~1e-15.
            # Skipped when the fit sits near the boundary, where the extra
            # step chases an infinite optimum instead of sharpening a finite one
            interior = np.all((p > SEPARATION_PROB_MARGIN)
                              & (p < 1 - SEPARATION_PROB_MARGIN))
            if interior and np.max(np.abs(beta)) <= SEPARATION_BETA_BOUND:
                w = np.clip(p * (1 - p), 1e-300, None)
                xtwx = xm.T @ (xm * w[:, None])
                try:
                    polished = beta + np.linalg.solve(xtwx, xm.T @ (y - p))
                    p_new = expit(xm @ polished)
                    if np.max(np.abs(xm.T @ (y - p_new))) <= tol:
                        beta, p = polished, p_new
                except np.linalg.LinAlgError:
                    pass
            break
    w = np.clip(p * (1 - p), 1e-300, None)
    xtwx = xm.T @ (xm * w[:, None])
    cov = spd_inverse(SymMatrix(0.5 * (xtwx + xtwx.T)))
    hat = _hat_diagonal(xm, w, cov.entries)
    fit = LogisticFit(beta=beta, cov_model=cov, fitted=p, hat=hat,
                      converged=converged, separation=False, iterations=it)
    return replace(fit, separation=detect_separation(fit))


def detect_separation(fit: LogisticFit) -> bool:
    """Flag fits whose probabilities or coefficients sit at the boundary."""
    if np.any(fit.fitted < SEPARATION_PROB_MARGIN) or np.any(fit.fitted > 1 - SEPARATION_PROB_MARGIN):
        return True
    return bool(np.max(np.abs(fit.beta)) > SEPARATION_BETA_BOUND)


def penalized_loglik(x: DesignMatrix, y: np.ndarray, beta: np.ndarray) -> float:
    """Log-likelihood plus half the log-determinant of the Fisher information."""
    xm = x.matrix
    p = expit(xm @ beta)
    eps = 1e-300
    ll = float(np.sum(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
    w = np.clip(p * (1 - p), 1e-300, None)
    sign, logdet = np.linalg.slogdet(xm.T @ (xm * w[:, None]))
    return ll + 0.5 * float(logdet)


def fit_firth_flic(x: DesignMatrix, y: np.ndarray, max_iter: int = DEFAULT_MAX_ITER,
                   tol: float = DEFAULT_TOL) -> LogisticFit:
    """Firth-penalized fit followed by an intercept-only likelihood recalibration.

    Stage 1 runs modified IRLS on the Jeffreys-penalized likelihood, which
    amounts to the pseudo-response y_i + h_i(1/2 - p_i). Stage 2 holds the
    non-intercept coefficients fixed and re-solves the ordinary intercept score
    equation so that the mean fitted probability matches the event rate. If all
    outcomes are equal that one-dimensional problem is unbounded; the stage-1
    intercept is then retained and flagged.
    """
    xm = x.matrix
    y = np.asarray(y, dtype=float)
    _check_rank(xm)
    beta = _initial_beta(xm, y)
    converged = False
    it = 0
    for it in range(1, 4 * max_iter + 1):
        p = expit(xm @ beta)
        w = np.clip(p * (1 - p), 1e-300, None)
        xtwx = xm.T @ (xm * w[:, None])
        try:
            xtwx_inv = np.linalg.inv(xtwx)
        except np.linalg.LinAlgError:
            break
        h = _hat_diagonal(xm, w, xtwx_inv)
        mod_score = xm.T @ (y - p + h * (0.5 - p))
        if float(np.max(np.abs(mod_score))) < tol:
            converged = True
            break
        step = xtwx_inv @ mod_score
        # step-halving keeps the penalized likelihood from overshooting
        base = penalized_loglik(x, y, beta)
        scale = 1.0
        for _ in range(10):
            if penalized_loglik(x, y, beta + scale * step) >= base - 1e-12:
                break
            scale *= 0.5
        beta = beta + scale * step

    # stage 2 (intercept recalibration): ordinary likelihood over beta0 only
    flic_unbounded = False
    offset = xm[:, 1:] @ beta[1:]
    if np.all(y == y[0]):
        flic_unbounded = True
    else:
        b0 = beta[0]
        target = float(np.sum(y))
        for _ in range(100):
            p0 = expit(b0 + offset)
            g = float(np.sum(p0)) - target
            if abs(g) < 1e-12 * max(1.0, target):
                break
            curv = float(np.sum(p0 * (1 - p0)))
            if curv <= 0:
                break
            b0 -= g / curv
        beta = beta.copy()
        beta[0] = b0

    p = expit(xm @ beta)
    w = np.clip(p * (1 - p), 1e-300, None)
    xtwx = xm.T @ (xm * w[:, None])
    cov = spd_inverse(SymMatrix(0.5 * (xtwx + xtwx.T)))
    hat = _hat_diagonal(xm, w, cov.entries)
    fit = LogisticFit(beta=beta, cov_model=cov, fitted=p, hat=hat,
                      converged=converged, separation=False,
                      penalized="firth_flic", iterations=it,
                      flic_unbounded=flic_unbounded)
    return replace(fit, separation=detect_separation(fit))


def hc3_covariance(x: DesignMatrix, y: np.ndarray, fit: LogisticFit) -> SymMatrix:
    """HC3 sandwich covariance: bread = inverse information, meat uses
    residuals inflated by squared one-minus-leverage."""
    xm = x.matrix
    y = np.asarray(y, dtype=float)
    one_minus_h = 1.0 - fit.hat
    bad = np.nonzero(one_minus_h <= 0.0)[0]
    if bad.size:
        raise DegenerateLeverageError(int(bad[0]))
    r = (y - fit.fitted) / one_minus_h
    meat = xm.T @ (xm * (r * r)[:, None])
    bread = fit.cov_model.entries
    out = bread @ meat @ bread
    return SymMatrix(0.5 * (out + out.T))


def batched_fit_ml(x3: np.ndarray, y2: np.ndarray, max_iter: int = DEFAULT_MAX_ITER,
                   tol: float = DEFAULT_TOL):
    """Vectorized IRLS over a batch of designs sharing one shape.

    x3 has shape (B, n, p), y2 has shape (B, n). Returns (beta (B, p),
    fitted (B, n), converged (B,)). Replicates whose normal equations turn
    singular are marked non-converged. Used by the bootstrap fast path; the
    update rule matches fit_ml.
    """
    B, n, p = x3.shape
    beta = np.zeros((B, p))
    ybar = np.clip(y2.mean(axis=1), 1e-3, 1 - 1e-3)
    beta[:, 0] = np.log(ybar / (1 - ybar))
    converged = np.zeros(B, dtype=bool)
    alive = np.ones(B, dtype=bool)
    dev = np.full(B, np.inf)
    prob = expit(np.einsum("bnp,bp->bn", x3, beta))
    for _ in range(max_iter):
        idx = np.nonzero(alive & ~converged)[0]
        if idx.size == 0:
            break
        xa, ya, pa = x3[idx], y2[idx], prob[idx]
        w = np.clip(pa * (1 - pa), 1e-300, None)
        xtwx = np.einsum("bnp,bn,bnq->bpq", xa, w, xa)
        score = np.einsum("bnp,bn->bp", xa, ya - pa)
        try:
            step = np.linalg.solve(xtwx, score[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.full_like(score, np.nan)
            for j in range(len(idx)):
                try:
                    step[j] = np.linalg.solve(xtwx[j], score[j])
                except np.linalg.LinAlgError:
                    alive[idx[j]] = False
        ok = np.all(np.isfinite(step), axis=1)
        beta[idx[ok]] += step[ok]
        pa = expit(np.einsum("bnp,bp->bn", x3[idx], beta[idx]))
        prob[idx] = pa
        eps = 1e-300
        new_dev = -2.0 * np.sum(ya * np.log(pa + eps) + (1 - ya) * np.log(1 - pa + eps), axis=1)
        new_score = np.abs(np.einsum("bnp,bn->bp", xa, ya - pa)).max(axis=1)
        done = (new_score < tol) & (np.abs(dev[idx] - new_dev) < DEVIANCE_TOL * (np.abs(new_dev) + 1.0))
        dev[idx] = new_dev
        converged[idx] |= done & ok
    return beta, prob, converged & alive
