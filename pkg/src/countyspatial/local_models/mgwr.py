"""Multiscale GWR by additive backfitting, one bandwidth per covariate."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from ..design import DesignMatrix
from .gwr import (GwrFit, LocalModelError, _prepare, aicc_from, bandwidth_range,
                  corrected_inference, fit_gwr, fit_statistics, local_r2_residual,
                  local_wls)
from .kernels import AdaptiveKernel, rowdot
from .search import CachedObjective, bandwidth_interval, golden_search_bandwidth

SOC_TOL = 1e-5
MAX_ITER = 200


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class MgwrFit(GwrFit):
    bandwidths: tuple[int, ...] = ()
    enp: np.ndarray | None = None
    backfit_iterations: int = 0
    converged: bool = False
    soc_history: list = field(default_factory=list, repr=False)
    bandwidth_intervals: list | None = None
    covariate_inference: list = field(default_factory=list)


def _single(x: np.ndarray, z: np.ndarray, K: np.ndarray):
    denom = rowdot(K, x * x)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = rowdot(K, x * z) / denom
        trace = float(np.sum(x * x * np.diag(K) / denom))
    return beta, trace


def _single_aicc(x, z, kernel: AdaptiveKernel, k: int) -> float:
    beta, trace = _single(x, z, kernel.weights(k))
    if not np.all(np.isfinite(beta)):
        return math.inf
    return aicc_from(float(((z - x * beta) ** 2).sum()), z.size, trace)


def _smoother(x: np.ndarray, K: np.ndarray) -> np.ndarray:
    denom = rowdot(K, x * x)
    return (x[:, None] * K * x[None, :]) / denom[:, None]


def _gwr_term_operators(A, K, inverses) -> list[np.ndarray]:
    """Per-covariate rows of the GWR hat matrix: f_j = R_j y."""
    m = A.shape[1]
    out = []
    for j in range(m):
        G = sum(inverses[:, j, l][:, None] * A[None, :, l] for l in range(m))
        out.append(A[:, j][:, None] * K * G)
    return out


def fit_mgwr(X: DesignMatrix | np.ndarray, y, coords, metric: str = "euclidean",
             bandwidths: Sequence[int] | None = None, init_bandwidth: int | str = "auto",
             k_min: int | None = None, k_max: int | None = None, alpha: float = 0.05,
             tol: float = SOC_TOL, max_iter: int = MAX_ITER, intervals: bool = False,
             kernel: AdaptiveKernel | None = None) -> MgwrFit:
    """Backfit one adaptive bisquare smoother per column (intercept included).

    ``bandwidths`` pins every column's bandwidth and skips the per-column
    searches; ``init_bandwidth`` sets the starting GWR fit.
    """
    X, y, coords, A = _prepare(X, y, coords)
    n, m = A.shape
    kernel = kernel or AdaptiveKernel(coords, metric)
    lo, hi = bandwidth_range(n, X.p, k_min, k_max)
    if bandwidths is not None:
        bandwidths = [int(b) for b in bandwidths]
        if len(bandwidths) != m:
            raise LocalModelError(f"need {m} bandwidths (intercept first), got {len(bandwidths)}")
        if any(not X.p + 2 <= b <= n for b in bandwidths):
            raise LocalModelError(f"pinned bandwidths must lie in [{X.p + 2}, {n}]")

    init = fit_gwr(X, y, coords, k=init_bandwidth, k_min=lo, k_max=hi, kernel=kernel)
    K0 = kernel.weights(init.bandwidth)
    sol = local_wls(A, y, K0)
    betas = sol.betas.copy()
    terms = A * betas
    R = _gwr_term_operators(A, K0, sol.inverses)
    R_sum = sum(R)
    current = list(bandwidths) if bandwidths is not None else [init.bandwidth] * m

    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new_terms = terms.copy()
        for j in range(m):
            x = A[:, j]
            resid = y - new_terms.sum(axis=1)
            z = resid + new_terms[:, j]
            if bandwidths is None:
                current[j] = golden_search_bandwidth(
                    lambda k, x=x, z=z: _single_aicc(x, z, kernel, k), lo, hi)
            K = kernel.weights(current[j])
            beta_j, _ = _single(x, z, K)
            if not np.all(np.isfinite(beta_j)):
                raise LocalModelError(f"covariate {X.full_names[j]} has no weighted variance "
                                      f"at some location with bandwidth {current[j]}")
            S = _smoother(x, K)
            R_new = S @ (np.eye(n) - R_sum + R[j])
            R_sum = R_sum - R[j] + R_new
            R[j] = R_new
            betas[:, j] = beta_j
            new_terms[:, j] = x * beta_j
        num = float(((new_terms - terms) ** 2).sum()) / n
        den = float((new_terms.sum(axis=1) ** 2).sum())
        soc = math.sqrt(num / den) if den > 0 else 0.0
        history.append(soc)
        terms = new_terms
        if soc < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"MGWR backfitting did not converge in {max_iter} iterations "
                      f"(SOC-f {history[-1]:.3g})", ConvergenceWarning, stacklevel=2)

    fitted = terms.sum(axis=1)
    enp = np.array([float(np.trace(r)) for r in R])
    trace = float(enp.sum())
    st = fit_statistics(y, fitted, trace)
    cct = np.column_stack([(r ** 2).sum(axis=1) for r in R]) / np.where(A == 0, np.nan, A) ** 2
    se = np.sqrt(cct * st["sigma2"])
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = betas / se
    fit = MgwrFit(X.full_names, betas, se, tvals, fitted, y - fitted,
                  local_r2_residual(y, fitted, K0), init.bandwidth, trace, n, st,
                  math.nan, math.nan, kernel.metric, (lo, hi),
                  bandwidths=tuple(current), enp=enp, backfit_iterations=it,
                  converged=converged, soc_history=history)
    if trace < n - 1:
        ci = corrected_inference(fit, alpha)
        fit.adj_alpha, fit.critical_t = ci["adj_alpha"], ci["critical_t"]
        for j, e in enumerate(enp):
            a_j = alpha / e if e > 0 else math.nan
            fit.covariate_inference.append({
                "name": X.full_names[j], "enp": float(e), "adj_alpha": a_j,
                "critical_t": float(stats.t.ppf(1 - a_j / 2, n - trace)) if e > 0 else math.nan})
    if intervals:
        fit.bandwidth_intervals = []
        for j in range(m):
            x = A[:, j]
            z = y - fitted + terms[:, j]
            f = CachedObjective(lambda k, x=x, z=z: _single_aicc(x, z, kernel, k))
            fit.bandwidth_intervals.append(bandwidth_interval(f, current[j], lo, hi))
    return fit
