"""Variance inflation factors and VIF-gated stepwise forward selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .design import DesignMatrix, as_design, collinear_columns
from .global_models import fit_ols

VIF_EXACT = 1e-12


def vif(X: DesignMatrix | np.ndarray) -> dict[str, float]:
    """VIF of each column against the others plus an intercept; exact collinearity gives inf."""
    X = as_design(X)
    if X.n <= X.p + 1:
        raise ValueError(f"VIF needs n > p + 1 (n={X.n}, p={X.p})")
    out = {}
    for j, name in enumerate(X.names):
        xj = X.values[:, j]
        sst = float(((xj - xj.mean()) ** 2).sum())
        if sst == 0.0:
            out[name] = math.inf
            continue
        others = np.column_stack([np.ones(X.n), np.delete(X.values, j, axis=1)])
        resid = xj - others @ np.linalg.lstsq(others, xj, rcond=None)[0]
        r2 = 1.0 - float(resid @ resid) / sst
        out[name] = math.inf if r2 >= 1.0 - VIF_EXACT else 1.0 / (1.0 - r2)
    return out


@dataclass(frozen=True)
class Step:
    step: int
    entered: str
    p_value: float
    adj_r2: float
    max_vif: float


@dataclass
class SelectionResult:
    selected: list[str] = field(default_factory=list)
    step_log: list[Step] = field(default_factory=list)
    rejected: dict[str, str] = field(default_factory=dict)


def _is_degenerate(A: np.ndarray, names) -> bool:
    return bool(collinear_columns(A, names))


def stepwise_forward(candidates: DesignMatrix | np.ndarray, y, p_enter: float = 0.05,
                     vif_cap: float = 10.0) -> SelectionResult:
    """Add, one at a time, the candidate with the smallest entry p-value.

    A candidate qualifies when its t-test p-value in the enlarged model is
    below ``p_enter`` and no selected column then has VIF above ``vif_cap``.
    Candidates are scanned in name order so ties resolve lexicographically.
    """
    X = as_design(candidates)
    y = np.asarray(y, dtype=float).ravel()
    if X.p < 1:
        raise ValueError("need at least one candidate")
    result = SelectionResult()
    remaining = sorted(X.names)
    reasons: dict[str, str] = {}
    while remaining:
        best = None
        for name in remaining:
            cols = result.selected + [name]
            sub = X.select(cols)
            if sub.n <= sub.p + 1 or _is_degenerate(sub.full, sub.full_names):
                reasons[name] = "rank"
                continue
            fit = fit_ols(sub, y)
            p = float(fit.probabilities[-1])
            max_vif = max(vif(sub).values()) if sub.p > 1 else 1.0
            if not p < p_enter:
                reasons[name] = "p_value"
            elif max_vif > vif_cap:
                reasons[name] = "vif"
            elif best is None or p < best[1]:
                best = (name, p, fit.stats["adj_r2"], max_vif)
        if best is None:
            break
        name, p, adj, mv = best
        result.selected.append(name)
        result.step_log.append(Step(len(result.selected), name, p, adj, mv))
        remaining.remove(name)
        reasons.pop(name, None)
    result.rejected = {name: reasons.get(name, "p_value") for name in remaining}
    return result


def confirm_enter(selected: DesignMatrix | np.ndarray, y) -> list[dict]:
    """One OLS on all selected columns with each column's VIF, t and p."""
    X = as_design(selected)
    if X.p < 1:
        raise ValueError("confirm_enter needs at least one selected column")
    fit = fit_ols(X, y)
    vifs = vif(X) if X.p > 1 else {X.names[0]: 1.0}
    return [{"name": name, "coefficient": float(fit.coefficients[j + 1]), "vif": vifs[name],
             "t": float(fit.t_or_z[j + 1]), "p": float(fit.probabilities[j + 1])}
            for j, name in enumerate(X.names)]


def groupwise_selection(candidates: DesignMatrix, y, groups: Mapping[str, Sequence[str]],
                        p_enter: float = 0.05, vif_cap: float = 4.0) -> dict[str, SelectionResult]:
    """Run :func:`stepwise_forward` separately on each named group of columns."""
    return {g: stepwise_forward(candidates.select(cols), y, p_enter, vif_cap)
            for g, cols in groups.items()}


def pooled_selection(candidates: DesignMatrix, y, groups: Mapping[str, Sequence[str]],
                     p_enter: float = 0.05, group_cap: float = 4.0,
                     pooled_cap: float = 10.0) -> tuple[dict[str, SelectionResult], SelectionResult]:
    """Group-wise screen, then a pooled screen over the union of group winners."""
    per_group = groupwise_selection(candidates, y, groups, p_enter, group_cap)
    winners = sorted({c for r in per_group.values() for c in r.selected})
    if not winners:
        return per_group, SelectionResult()
    return per_group, stepwise_forward(candidates.select(winners), y, p_enter, pooled_cap)
