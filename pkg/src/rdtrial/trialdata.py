"""Subject-level trial data model, CSV ingestion, and stratified 2x2 tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

#: Covariate columns with at most this many distinct integer-coded values are
#: treated as categorical on ingestion.
CATEGORICAL_MAX_LEVELS = 10


class SchemaError(ValueError):
    """A requested column is absent from the input file."""


class ParseError(ValueError):
    """A cell failed to parse; carries the 1-based data row number."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class CovariateTypeError(TypeError):
    """A real-valued covariate was used where categorical levels are required."""


@dataclass(frozen=True)
class TrialDataset:
    """Immutable two-arm trial with binary outcome and baseline covariates.

    ``covariates`` maps column name to a float array of length ``n``;
    ``cov_types`` records ``"categorical"`` or ``"real"`` per column.
    """

    y: np.ndarray
    arm: np.ndarray
    covariates: dict[str, np.ndarray] = field(default_factory=dict)
    cov_types: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        arm = np.asarray(self.arm, dtype=float)
        if y.ndim != 1 or arm.shape != y.shape:
            raise ValueError("y and arm must be one-dimensional and equal length")
        if y.size < 2:
            raise ValueError("dataset requires n >= 2")
        for name in ("y", "arm"):
            vals = y if name == "y" else arm
            if not np.all(np.isin(vals, (0.0, 1.0))):
                raise ValueError(f"{name} must contain only 0/1 values")
        for name, col in self.covariates.items():
            col = np.asarray(col, dtype=float)
            if col.shape != y.shape:
                raise ValueError(f"covariate {name!r} length mismatch")
            if not np.all(np.isfinite(col)):
                raise ValueError(f"covariate {name!r} contains missing values")
            self.covariates[name] = col
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "arm", arm)

    @property
    def n(self) -> int:
        return self.y.size

    def arm_sizes(self) -> tuple[int, int]:
        n1 = int(np.sum(self.arm == 1))
        return n1, self.n - n1

    def arm_counts(self) -> tuple[int, int, int, int]:
        """(responders arm 1, size arm 1, responders arm 0, size arm 0)."""
        n1, n0 = self.arm_sizes()
        k1 = int(np.sum(self.y[self.arm == 1]))
        k0 = int(np.sum(self.y[self.arm == 0]))
        return k1, n1, k0, n0


@dataclass(frozen=True)
class Stratum:
    key: tuple
    x1: int
    n1: int
    x0: int
    n0: int

    @property
    def size(self) -> int:
        return self.n1 + self.n0


@dataclass(frozen=True)
class StratumTable:
    """Per-stratum 2x2 counts; stratum keys are sorted level tuples."""

    strata: tuple[Stratum, ...]

    def __post_init__(self):
        for s in self.strata:
            if not (0 <= s.x1 <= s.n1 and 0 <= s.x0 <= s.n0):
                raise ValueError(f"inconsistent counts in stratum {s.key}")
            if s.size < 1:
                raise ValueError(f"empty stratum {s.key}")

    @property
    def total(self) -> int:
        return sum(s.size for s in self.strata)


def _infer_cov_type(values: np.ndarray) -> str:
    distinct = np.unique(values)
    if distinct.size <= CATEGORICAL_MAX_LEVELS and np.all(distinct == np.round(distinct)):
        return "categorical"
    return "real"


def load_csv(path, outcome_col: str, arm_col: str, covariate_cols: list[str]) -> TrialDataset:
    """Load and validate a trial dataset from a UTF-8 CSV file with a header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in [outcome_col, arm_col, *covariate_cols]:
            if col not in header:
                raise SchemaError(f"column {col!r} not found in {path}")
        y, arm = [], []
        covs: dict[str, list[float]] = {c: [] for c in covariate_cols}
        for row_no, row in enumerate(reader, start=1):
            for col in (outcome_col, arm_col):
                raw = row.get(col)
                if raw is None or raw.strip() == "":
                    raise ParseError(f"missing {col!r} value at row {row_no}", row=row_no)
                if raw.strip() not in ("0", "1"):
                    raise ParseError(
                        f"non-binary {col!r} value {raw!r} at row {row_no}", row=row_no
                    )
            y.append(float(row[outcome_col]))
            arm.append(float(row[arm_col]))
            for col in covariate_cols:
                raw = row.get(col)
                if raw is None or raw.strip() == "":
                    raise ParseError(f"missing {col!r} value at row {row_no}", row=row_no)
                try:
                    covs[col].append(float(raw))
                except ValueError:
                    raise ParseError(
                        f"unparseable {col!r} value {raw!r} at row {row_no}", row=row_no
                    ) from None
    covariates = {c: np.asarray(v, dtype=float) for c, v in covs.items()}
    cov_types = {c: _infer_cov_type(v) for c, v in covariates.items()}
    return TrialDataset(y=np.asarray(y), arm=np.asarray(arm), covariates=covariates, cov_types=cov_types)


def stratify(d: TrialDataset, covariate_cols: list[str]) -> StratumTable:
    """Cross-classify by categorical covariates and tabulate per-stratum 2x2 counts.

    With no covariates the result is the single marginal 2x2 table. Unobserved
    level combinations are omitted.
    """
    for col in covariate_cols:
        if col not in d.covariates:
            raise SchemaError(f"unknown covariate {col!r}")
        if d.cov_types.get(col, "categorical") != "categorical":
            raise CovariateTypeError(
                f"covariate {col!r} is real-valued; stratified methods require categorical covariates"
            )
    if not covariate_cols:
        k1, n1, k0, n0 = d.arm_counts()
        return StratumTable((Stratum(key=(), x1=k1, n1=n1, x0=k0, n0=n0),))
    keys = list(zip(*(d.covariates[c] for c in covariate_cols)))
    table: dict[tuple, list[int]] = {}
    for i, key in enumerate(keys):
        cell = table.setdefault(key, [0, 0, 0, 0])  # x1, n1, x0, n0
        if d.arm[i] == 1:
            cell[0] += int(d.y[i])
            cell[1] += 1
        else:
            cell[2] += int(d.y[i])
            cell[3] += 1
    if len(table) > 64:
        raise ValueError(f"cross-classification yields {len(table)} strata (limit 64)")
    strata = tuple(
        Stratum(key=key, x1=c[0], n1=c[1], x0=c[2], n0=c[3])
        for key, c in sorted(table.items())
    )
    return StratumTable(strata)
