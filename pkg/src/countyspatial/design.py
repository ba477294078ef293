"""Named design matrices shared by the global, local and selection models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

# columns whose pivoted-QR diagonal falls below this fraction of the largest are treated
# as spanned; 1e-8 also catches exact dependencies blurred by 10-digit CSV rounding
RANK_RTOL = 1e-8


class RankDeficiencyError(ValueError):
    """Raised when a design matrix is not of full column rank."""

    def __init__(self, message: str, columns: Sequence[str] = ()):
        super().__init__(message)
        self.columns = list(columns)


@dataclass(frozen=True)
class DesignMatrix:
    """Covariate columns without the intercept.

    The intercept is implicit: :attr:`full` prepends a column of ones and
    :attr:`full_names` prepends ``"CONSTANT"``.
    """

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValueError("design values must be a 2-D array")
        if values.shape[1] != len(self.names):
            raise ValueError(
                f"{values.shape[1]} columns but {len(self.names)} names")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate column names in design")
        if not np.all(np.isfinite(values)):
            raise ValueError("design contains missing or non-finite values")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", values)

    @classmethod
    def from_columns(cls, columns: dict[str, Sequence[float]]) -> "DesignMatrix":
        names = tuple(columns)
        if not names:
            raise ValueError("at least one column is required")
        return cls(names, np.column_stack([np.asarray(columns[c], float) for c in names]))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def full(self) -> np.ndarray:
        return np.column_stack([np.ones(self.n), self.values])

    @property
    def full_names(self) -> tuple[str, ...]:
        return ("CONSTANT",) + self.names

    def select(self, names: Sequence[str]) -> "DesignMatrix":
        idx = [self.names.index(c) for c in names]
        return DesignMatrix(tuple(names), self.values[:, idx])

    def take(self, rows: np.ndarray) -> "DesignMatrix":
        return DesignMatrix(self.names, self.values[rows])


def as_design(X, names: Sequence[str] | None = None) -> DesignMatrix:
    """Coerce an array (no intercept column) or a DesignMatrix."""
    if isinstance(X, DesignMatrix):
        return X
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if names is None:
        names = tuple(f"x{j + 1}" for j in range(arr.shape[1]))
    return DesignMatrix(tuple(names), arr)


def collinear_columns(A: np.ndarray, names: Sequence[str], rtol: float = RANK_RTOL) -> list[str]:
    """Names of columns that are (numerically) spanned by earlier columns."""
    if A.shape[1] == 0:
        return []
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    _, r, piv = linalg.qr(A / scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0:
        return list(names)
    rank = int(np.sum(diag > rtol * diag[0]))
    return sorted((names[j] for j in piv[rank:]), key=list(names).index)


def check_full_rank(A: np.ndarray, names: Sequence[str]) -> None:
    bad = collinear_columns(A, names)
    if bad:
        raise RankDeficiencyError(
            "design matrix is rank deficient; collinear columns: " + ", ".join(bad), bad)
