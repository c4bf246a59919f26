"""Special functions, normal/chi-square(1) distributions, and small SPD linear algebra.

Everything here is a pure function; the heavy lifting is delegated to
scipy.special, which is accurate to well below the tolerances required by the
inference modules. SPD solves use an explicit Cholesky factorization so that a
failing pivot can be reported by index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class SingularMatrixError(ValueError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, pivot: int):
        super().__init__(f"matrix is not positive definite (pivot {pivot})")
        self.pivot = pivot


@dataclass(frozen=True)
class SymMatrix:
    """Dense symmetric real matrix used for coefficient covariances."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError("SymMatrix requires a square matrix of dim >= 1")
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - a.T)) > 1e-12 * scale:
            raise ValueError("matrix is not symmetric within tolerance")
        object.__setattr__(self, "entries", 0.5 * (a + a.T))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def log_choose(n: int, k: int) -> float:
    """ln C(n, k) via log-gamma."""
    if k < 0 or n < 0 or k > n:
        raise DomainError(f"log_choose requires 0 <= k <= n, got n={n}, k={k}")
    return float(special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1))


def norm_cdf(z):
    """Standard normal CDF."""
    return special.ndtr(z)


def norm_quantile(p: float) -> float:
    """Inverse standard normal CDF; p must lie strictly inside (0, 1)."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"norm_quantile requires 0 < p < 1, got {p}")
    return float(special.ndtri(p))


def chisq1_sf(x: float) -> float:
    """Survival function of the chi-square distribution with 1 df."""
    if x < 0:
        raise DomainError(f"chisq1_sf requires x >= 0, got {x}")
    return float(2.0 * special.ndtr(-np.sqrt(x)))


def _cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor; raises SingularMatrixError with the pivot."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0.0 or not np.isfinite(d):
            raise SingularMatrixError(j)
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def spd_solve(m: SymMatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve m @ x = rhs for symmetric positive definite m."""
    L = _cholesky(m.entries)
    y = np.linalg.solve(L, np.asarray(rhs, dtype=float))
    return np.linalg.solve(L.T, y)


def spd_inverse(m: SymMatrix) -> SymMatrix:
    """Inverse of a symmetric positive definite matrix."""
    L = _cholesky(m.entries)
    inv_l = np.linalg.inv(L)
    return SymMatrix(inv_l.T @ inv_l)


def expit(u):
    """Overflow-safe inverse logit."""
    return special.expit(u)


def logit(q):
    """Log-odds of q; requires 0 < q < 1 elementwise."""
    arr = np.asarray(q, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError("logit requires 0 < q < 1")
    out = special.logit(arr)
    return float(out) if np.isscalar(q) or arr.ndim == 0 else out
