"""Geographically weighted regression with an adaptive bisquare kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..design import DesignMatrix, as_design, check_full_rank
from .kernels import AdaptiveKernel, rowdot
from .search import CachedObjective, bandwidth_interval, golden_search_bandwidth

R2_BIN_EDGES = (0.0, 0.34, 0.66, 0.79, 0.85, 0.89, 0.93, 0.96, 1.0)
RANK_RTOL = 1e-12


class LocalModelError(ValueError):
    pass


def aicc_from(rss: float, n: int, trace: float) -> float:
    """Corrected AIC for a linear smoother with effective parameters ``trace``."""
    if trace >= n - 2 or rss <= 0:
        return math.inf
    sigma = math.sqrt(rss / n)
    return 2 * n * math.log(sigma) + n * math.log(2 * math.pi) + n * (n + trace) / (n - 2 - trace)


def fit_statistics(y: np.ndarray, fitted: np.ndarray, trace: float) -> dict:
    n = y.size
    rss = float(((y - fitted) ** 2).sum())
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else math.nan
    if rss > 0:
        llf = -0.5 * n * (1.0 + math.log(2 * math.pi * rss / n))
        aic = -2 * llf + 2 * (trace + 1)
        bic = -2 * llf + (trace + 1) * math.log(n)
    else:
        aic = bic = -math.inf
    return {
        "rss": rss, "tss": tss, "r2": r2,
        "adj_r2": 1.0 - (1.0 - r2) * (n - 1) / (n - trace - 1) if n - trace - 1 > 0 else math.nan,
        "aic": aic, "aicc": aicc_from(rss, n, trace), "bic": bic,
        "sigma2": rss / (n - trace) if n > trace else math.nan,
    }


@dataclass
class LocalSolution:
    betas: np.ndarray
    inverses: np.ndarray
    influence: np.ndarray
    fitted: np.ndarray


def local_wls(A: np.ndarray, y: np.ndarray, K: np.ndarray, names=None) -> LocalSolution:
    """Weighted least squares at every focal row of the kernel matrix ``K``."""
    n, m = A.shape
    xtwx = np.empty((n, m, m))
    for j in range(m):
        for l in range(j, m):
            xtwx[:, j, l] = xtwx[:, l, j] = rowdot(K, A[:, j] * A[:, l])
    xtwy = np.column_stack([rowdot(K, A[:, j] * y) for j in range(m)])
    sv = np.linalg.svd(xtwx, compute_uv=False)
    bad = np.flatnonzero(~(sv[:, -1] > RANK_RTOL * sv[:, 0]))
    if bad.size:
        where = int(bad[0]) if names is None else names[int(bad[0])]
        raise LocalModelError(
            f"weighted design is rank deficient at location {where} "
            f"({bad.size} locations affected); try a larger bandwidth")
    inv = np.linalg.inv(xtwx)
    betas = np.einsum("ijk,ik->ij", inv, xtwy)
    influence = np.einsum("ij,ijk,ik->i", A, inv, A) * np.diag(K)
    return LocalSolution(betas, inv, influence, (A * betas).sum(axis=1))


def local_r2_residual(y, fitted, K) -> np.ndarray:
    """Kernel-weighted R^2 of a fitted surface's residuals, floored at zero."""
    wsum = K.sum(axis=1)
    ybar = rowdot(K, y) / wsum
    sse = rowdot(K, (y - fitted) ** 2)
    sst = (K * (y[None, :] - ybar[:, None]) ** 2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(sst > 0, 1.0 - sse / sst, 1.0)
    return np.clip(r2, 0.0, 1.0)


def gwr_aicc(A, y, kernel: AdaptiveKernel, k: int) -> float:
    try:
        sol = local_wls(A, y, kernel.weights(k))
    except LocalModelError:
        return math.inf
    rss = float(((y - sol.fitted) ** 2).sum())
    return aicc_from(rss, y.size, float(sol.influence.sum()))


def corrected_inference(fit, alpha: float = 0.05) -> dict:
    """Multiple-testing corrected significance level and two-sided critical t."""
    n, trace, m = fit.n, fit.hat_trace, len(fit.names)
    if trace >= n - 1:
        raise LocalModelError(f"hat trace {trace:.3f} leaves no residual degrees of freedom")
    pe = trace / m
    adj_alpha = alpha / pe
    return {"adj_alpha": adj_alpha,
            "critical_t": float(stats.t.ppf(1.0 - adj_alpha / 2.0, n - trace))}


def bin_local_r2(fit_or_values) -> dict[str, int]:
    """Counts of local R^2 per reporting bin (right-inclusive, first bin closed)."""
    r2 = np.asarray(getattr(fit_or_values, "local_r2", fit_or_values), dtype=float)
    idx = np.searchsorted(np.asarray(R2_BIN_EDGES[1:-1]), r2, side="left")
    labels = [f"{lo:.2f} - {hi:.2f}" for lo, hi in zip(R2_BIN_EDGES[:-1], R2_BIN_EDGES[1:])]
    counts = np.bincount(idx, minlength=len(labels))
    return dict(zip(labels, counts.tolist()))


@dataclass
class GwrFit:
    names: tuple[str, ...]
    local_coefficients: np.ndarray
    local_se: np.ndarray
    local_t: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    local_r2: np.ndarray
    bandwidth: int
    hat_trace: float
    n: int
    stats: dict
    adj_alpha: float
    critical_t: float
    metric: str = "euclidean"
    bandwidth_range: tuple[int, int] = (0, 0)
    search: dict = field(default_factory=dict, repr=False)
    bandwidth_interval: tuple[int, int] | None = None

    @property
    def aic(self) -> float:
        return self.stats["aic"]

    @property
    def aicc(self) -> float:
        return self.stats["aicc"]

    @property
    def bic(self) -> float:
        return self.stats["bic"]


def _prepare(X, y, coords):
    X = as_design(X)
    y = np.asarray(y, dtype=float).ravel()
    coords = np.asarray(coords, dtype=float)
    if y.size != X.n or coords.shape != (X.n, 2):
        raise LocalModelError("X, y and coords must describe the same locations")
    if not np.all(np.isfinite(y)):
        raise LocalModelError("response contains missing or non-finite values")
    if X.n <= X.p + 2:
        raise LocalModelError(f"need n > p + 2 observations (n={X.n}, p={X.p})")
    A = X.full
    check_full_rank(A, X.full_names)
    return X, y, coords, A


def bandwidth_range(n: int, p: int, k_min=None, k_max=None) -> tuple[int, int]:
    lo = p + 2 if k_min is None else int(k_min)
    hi = n if k_max is None else int(k_max)
    if not p + 2 <= lo <= hi <= n:
        raise LocalModelError(f"bandwidth range [{lo}, {hi}] outside [{p + 2}, {n}]")
    return lo, hi


def fit_gwr(X: DesignMatrix | np.ndarray, y, coords, k: int | str = "auto",
            metric: str = "euclidean", k_min: int | None = None, k_max: int | None = None,
            alpha: float = 0.05, interval: bool = False,
            kernel: AdaptiveKernel | None = None, location_names=None) -> GwrFit:
    """Fit GWR at a fixed adaptive bandwidth ``k`` or one chosen by AICc."""
    X, y, coords, A = _prepare(X, y, coords)
    n = X.n
    kernel = kernel or AdaptiveKernel(coords, metric)
    lo, hi = bandwidth_range(n, X.p, k_min, k_max)
    objective = CachedObjective(lambda kk: gwr_aicc(A, y, kernel, kk))
    if k == "auto":
        k = golden_search_bandwidth(objective, lo, hi)
    else:
        k = int(k)
        if not X.p + 2 <= k <= n:
            raise LocalModelError(f"bandwidth {k} outside [{X.p + 2}, {n}]")
    K = kernel.weights(k)
    sol = local_wls(A, y, K, location_names)
    trace = float(sol.influence.sum())
    st = fit_statistics(y, sol.fitted, trace)
    xtw2x = np.empty_like(sol.inverses)
    K2 = K ** 2
    for j in range(A.shape[1]):
        for l in range(j, A.shape[1]):
            xtw2x[:, j, l] = xtw2x[:, l, j] = rowdot(K2, A[:, j] * A[:, l])
    cct = np.einsum("ijk,ikl,ilj->ij", sol.inverses, xtw2x, sol.inverses)
    se = np.sqrt(np.maximum(cct, 0.0) * st["sigma2"])
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = sol.betas / se
    fit = GwrFit(X.full_names, sol.betas, se, tvals, sol.fitted, y - sol.fitted,
                 local_r2_residual(y, sol.fitted, K), k, trace, n, st, math.nan, math.nan,
                 kernel.metric, (lo, hi), dict(objective.values))
    if trace < n - 1:
        ci = corrected_inference(fit, alpha)
        fit.adj_alpha, fit.critical_t = ci["adj_alpha"], ci["critical_t"]
    if interval:
        fit.bandwidth_interval = bandwidth_interval(objective, k, lo, hi)
        fit.search = dict(objective.values)
    return fit
