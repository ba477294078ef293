"""Global regression: OLS, maximum-likelihood spatial lag and spatial error models,
and the OLS-residual spatial dependence tests (Moran's I and the LM family)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .design import DesignMatrix, as_design, check_full_rank
from .weights import WeightMatrix, rho_bounds

GRID_POINTS = 100
BOUND_SHRINK = 1e-4
GOLDEN_TOL = 1e-7
BOUNDARY_TOL = 1e-6
HESSIAN_STEP = 1e-5

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class ModelError(ValueError):
    pass


@dataclass
class GlobalFit:
    """Coefficients and fit statistics for an OLS, SLM or SEM fit.

    ``names`` lists the coefficient labels (``CONSTANT`` first). For SLM the
    spatial parameter is ``rho``; for SEM it is ``lam``. ``residuals`` holds
    the structural errors (``v`` for SEM, the spatially filtered residual).
    """

    model: str
    names: tuple[str, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_or_z: np.ndarray
    probabilities: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    log_likelihood: float
    sigma2: float
    n: int
    k: int
    stats: dict = field(default_factory=dict)
    rho: float | None = None
    lam: float | None = None
    spatial_se: float | None = None
    spatial_z: float | None = None
    spatial_p: float | None = None
    y: np.ndarray | None = field(default=None, repr=False)
    X: np.ndarray | None = field(default=None, repr=False)
    xtx_inv: np.ndarray | None = field(default=None, repr=False)

    @property
    def stat_label(self) -> str:
        return "t" if self.model == "ols" else "z"

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


def information_criteria(log_likelihood: float, k: int, n: int) -> dict:
    """AIC, AICc and Schwarz criterion; ``aicc`` is None when ``n <= k + 1``."""
    aic = 2 * k - 2 * log_likelihood
    sic = k * math.log(n) - 2 * log_likelihood
    aicc = None if n <= k + 1 else aic + 2 * k * (k + 1) / (n - k - 1)
    return {"aic": aic, "aicc": aicc, "sic": sic}


def _gaussian_loglik(sse: float, n: int) -> float:
    return -0.5 * n * (math.log(2 * math.pi) + math.log(sse / n) + 1.0)


def _prepare(X, y):
    X = as_design(X)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.n:
        raise ModelError(f"response has {y.shape[0]} rows, design has {X.n}")
    if not np.all(np.isfinite(y)):
        raise ModelError("response contains missing or non-finite values")
    if X.n <= X.p + 1:
        raise ModelError(f"need n > p + 1 observations (n={X.n}, p={X.p})")
    A = X.full
    check_full_rank(A, X.full_names)
    return X, y, A


def fit_ols(X: DesignMatrix | np.ndarray, y) -> GlobalFit:
    X, y, A = _prepare(X, y)
    n, k = A.shape
    xtx_inv = np.linalg.inv(A.T @ A)
    beta = np.linalg.lstsq(A, y, rcond=None)[0]
    fitted = A @ beta
    e = y - fitted
    sse = float(e @ e)
    sst = float(((y - y.mean()) ** 2).sum())
    dof = n - k
    s2 = sse / dof
    se = np.sqrt(np.diag(xtx_inv) * s2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    prob = 2 * stats.t.sf(np.abs(t), dof)
    r2 = 1.0 - sse / sst if sst > 0 else math.nan
    adj = 1.0 - (1.0 - r2) * (n - 1) / dof if sst > 0 else math.nan
    p = k - 1
    if p > 0 and sst > 0 and sse > 0:
        f_stat = ((sst - sse) / p) / (sse / dof)
        f_prob = float(stats.f.sf(f_stat, p, dof))
    else:
        f_stat, f_prob = math.inf if sse == 0 else math.nan, 0.0 if sse == 0 else math.nan
    logl = _gaussian_loglik(sse, n) if sse > 0 else math.inf
    ic = information_criteria(logl, k, n)
    st = {"r2": r2, "adj_r2": adj, "f_stat": f_stat, "f_prob": f_prob,
          "aic": ic["aic"], "sic": ic["sic"], "sse": sse, "sst": sst, "ssr": sst - sse}
    return GlobalFit("ols", X.full_names, beta, se, t, prob, e, fitted, logl, s2, n, k, st,
                     y=y, X=A, xtx_inv=xtx_inv)


# -- scalar line search -----------------------------------------------------

def golden_maximize(f: Callable[[float], float], lo: float, hi: float,
                    tol: float = GOLDEN_TOL) -> tuple[float, float]:
    """Golden-section maximization of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


@dataclass
class LineSearch:
    grid: np.ndarray
    grid_values: np.ndarray
    argmax: float
    value: float


def maximize_concentrated(f: Callable[[float], float], lower: float, upper: float) -> LineSearch:
    """Grid scan followed by golden refinement around the best grid point."""
    lo, hi = lower + BOUND_SHRINK, upper - BOUND_SHRINK
    grid = np.linspace(lo, hi, GRID_POINTS)
    vals = np.array([f(x) for x in grid])
    if not np.any(np.isfinite(vals)):
        raise ModelError("concentrated likelihood is not finite anywhere in the parameter space")
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    i = int(np.argmax(vals))
    x, fx = golden_maximize(f, grid[max(i - 1, 0)], grid[min(i + 1, GRID_POINTS - 1)])
    if not fx >= vals[i]:
        x, fx = float(grid[i]), float(vals[i])
    if not math.isfinite(fx):
        raise ModelError("non-finite likelihood at the optimum")
    if x - lo < BOUNDARY_TOL or hi - x < BOUNDARY_TOL:
        raise ModelError(f"boundary solution: spatial parameter {x:.6f} at the edge of ({lower:.4f}, {upper:.4f})")
    return LineSearch(grid, vals, float(x), float(fx))


def _logdet_fn(w: WeightMatrix) -> Callable[[float], float]:
    ev = w.eigenvalues

    def logdet(r: float) -> float:
        with np.errstate(divide="ignore"):
            return float(np.log(np.abs(1.0 - r * ev)).sum())
    return logdet


def _check_weights(w: WeightMatrix, n: int):
    if w.n != n:
        raise ModelError(f"weights are {w.n}x{w.n} but data has {n} rows")
    if not w.row_standardized:
        raise ModelError("spatial models expect row-standardized weights")


def _spatial_search(conc: Callable[[float], float], w: WeightMatrix) -> LineSearch:
    if w.matrix.nnz == 0:
        # no links: the likelihood is flat in the spatial parameter, so report 0
        value = conc(0.0)
        return LineSearch(np.array([0.0]), np.array([value]), 0.0, value)
    return maximize_concentrated(conc, *rho_bounds(w))


def _invert_information(info: np.ndarray, spatial: int, w: WeightMatrix) -> np.ndarray:
    """Inverse information; without links the spatial row is dropped and its variance is NaN."""
    if w.matrix.nnz:
        return np.linalg.inv(info)
    keep = [i for i in range(info.shape[0]) if i != spatial]
    out = np.full_like(info, np.nan)
    out[np.ix_(keep, keep)] = np.linalg.inv(info[np.ix_(keep, keep)])
    return out


def _pseudo_r2(e, y) -> float:
    sst = float(((y - y.mean()) ** 2).sum())
    return 1.0 - float(e @ e) / sst if sst > 0 else math.nan


def fit_slm(X: DesignMatrix | np.ndarray, y, w: WeightMatrix) -> GlobalFit:
    """Spatial lag model y = rho W y + X beta + e by concentrated maximum likelihood."""
    X, y, A = _prepare(X, y)
    n, k = A.shape
    _check_weights(w, n)
    W = w.matrix
    Wy = W @ y
    b0 = np.linalg.lstsq(A, y, rcond=None)[0]
    bd = np.linalg.lstsq(A, Wy, rcond=None)[0]
    e0, ed = y - A @ b0, Wy - A @ bd
    logdet = _logdet_fn(w)

    def conc(r: float) -> float:
        e = e0 - r * ed
        return -0.5 * n * math.log(float(e @ e) / n) + logdet(r)

    search = _spatial_search(conc, w)
    rho = search.argmax
    beta = b0 - rho * bd
    e = e0 - rho * ed
    sig2 = float(e @ e) / n
    logl = -0.5 * n * (math.log(2 * math.pi) + math.log(sig2) + 1.0) + logdet(rho)

    Wd = w.dense()
    WA = np.linalg.solve((np.eye(n) - rho * Wd).T, Wd.T).T
    wxb = WA @ (A @ beta)
    info = np.zeros((k + 2, k + 2))
    info[:k, :k] = A.T @ A / sig2
    info[:k, k] = info[k, :k] = A.T @ wxb / sig2
    info[k, k] = float((WA * WA.T).sum() + (WA * WA).sum() + wxb @ wxb / sig2)
    info[k, k + 1] = info[k + 1, k] = float(np.trace(WA)) / sig2
    info[k + 1, k + 1] = n / (2 * sig2 ** 2)
    vcov = _invert_information(info, k, w)
    se = np.sqrt(np.diag(vcov))
    z = np.concatenate([beta, [rho]]) / se[:k + 1]
    prob = 2 * stats.norm.sf(np.abs(z))
    ic = information_criteria(logl, k + 1, n)
    fit = GlobalFit("slm", X.full_names, beta, se[:k], z[:k], prob[:k], e, y - e, logl, sig2, n,
                    k + 1, {"r2": _pseudo_r2(e, y), "aic": ic["aic"], "sic": ic["sic"]},
                    rho=rho, spatial_se=float(se[k]), spatial_z=float(z[k]),
                    spatial_p=float(prob[k]), y=y, X=A)
    fit.stats["grid_max"] = float(np.max(search.grid_values))
    fit.stats["concentrated_max"] = search.value
    return fit


def numerical_hessian(f: Callable[[np.ndarray], float], theta: np.ndarray,
                      rel_step: float = HESSIAN_STEP) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    m = theta.size
    h = rel_step * np.maximum(np.abs(theta), 1.0)
    H = np.empty((m, m))
    f0 = f(theta)
    for i in range(m):
        ei = np.zeros(m)
        ei[i] = h[i]
        H[i, i] = (f(theta + ei) - 2 * f0 + f(theta - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(m)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(theta + ei + ej) - f(theta + ei - ej)
                                 - f(theta - ei + ej) + f(theta - ei - ej)) / (4 * h[i] * h[j])
    return H


def fit_sem(X: DesignMatrix | np.ndarray, y, w: WeightMatrix) -> GlobalFit:
    """Spatial error model y = X beta + u, u = lambda W u + v by concentrated ML."""
    X, y, A = _prepare(X, y)
    n, k = A.shape
    _check_weights(w, n)
    W = w.matrix
    Wy, WA_ = W @ y, W @ A
    logdet = _logdet_fn(w)

    def filtered(lam):
        ys, As = y - lam * Wy, A - lam * WA_
        beta = np.linalg.lstsq(As, ys, rcond=None)[0]
        return beta, ys - As @ beta

    def conc(lam: float) -> float:
        e = filtered(lam)[1]
        return -0.5 * n * math.log(float(e @ e) / n) + logdet(lam)

    search = _spatial_search(conc, w)
    lam = search.argmax
    beta, v = filtered(lam)
    sig2 = float(v @ v) / n
    logl = -0.5 * n * (math.log(2 * math.pi) + math.log(sig2) + 1.0) + logdet(lam)

    def full_loglik(theta):
        b, lm, s2 = theta[:k], theta[k], theta[k + 1]
        if s2 <= 0:
            return -np.inf
        u = y - A @ b
        r = u - lm * (W @ u)
        return -0.5 * n * math.log(2 * math.pi * s2) + logdet(lm) - float(r @ r) / (2 * s2)

    H = numerical_hessian(full_loglik, np.concatenate([beta, [lam, sig2]]))
    try:
        vcov = _invert_information(-H, k, w)
    except np.linalg.LinAlgError:
        raise ModelError("singular information matrix at the SEM optimum") from None
    var = np.diag(vcov)
    if np.any(var[:k + 1] <= 0):
        raise ModelError("numerical Hessian is not negative definite at the SEM optimum")
    se = np.sqrt(var)
    z = np.concatenate([beta, [lam]]) / se[:k + 1]
    prob = 2 * stats.norm.sf(np.abs(z))
    ic = information_criteria(logl, k + 1, n)
    fit = GlobalFit("sem", X.full_names, beta, se[:k], z[:k], prob[:k], v, y - v, logl, sig2, n,
                    k + 1, {"r2": _pseudo_r2(v, y), "aic": ic["aic"], "sic": ic["sic"]},
                    lam=lam, spatial_se=float(se[k]), spatial_z=float(z[k]),
                    spatial_p=float(prob[k]), y=y, X=A)
    fit.stats["grid_max"] = float(np.max(search.grid_values))
    fit.stats["concentrated_max"] = search.value
    return fit


# -- dependence diagnostics -------------------------------------------------

@dataclass(frozen=True)
class MoranResult:
    statistic: float
    expected: float
    variance: float
    z_value: float
    probability: float


@dataclass(frozen=True)
class LMResult:
    df: int
    value: float
    probability: float


@dataclass(frozen=True)
class DependenceDiagnostics:
    morans_i_error: MoranResult
    lm_lag: LMResult
    robust_lm_lag: LMResult
    lm_error: LMResult
    robust_lm_error: LMResult
    lm_sarma: LMResult

    def rows(self) -> list[tuple[str, float, float, float]]:
        """(test, MI/DF, value, probability) in the conventional report order."""
        m = self.morans_i_error
        out = [("Moran's I (error)", m.statistic, m.z_value, m.probability)]
        for label, r in (("Lagrange Multiplier (lag)", self.lm_lag),
                         ("Robust LM (lag)", self.robust_lm_lag),
                         ("Lagrange Multiplier (error)", self.lm_error),
                         ("Robust LM (error)", self.robust_lm_error),
                         ("Lagrange Multiplier (SARMA)", self.lm_sarma)):
            out.append((label, r.df, r.value, r.probability))
        return out


def _lm(value: float, df: int) -> LMResult:
    value = max(float(value), 0.0)
    return LMResult(df, value, float(stats.chi2.sf(value, df)))


def dependence_diagnostics(fit: GlobalFit, w: WeightMatrix) -> DependenceDiagnostics:
    """Moran's I on OLS residuals plus the LM lag/error tests and robust forms."""
    if fit.model != "ols" or fit.X is None:
        raise ModelError("dependence diagnostics need an OLS fit")
    e, y, A, xtxi = fit.residuals, fit.y, fit.X, fit.xtx_inv
    n, k = A.shape
    _check_weights(w, n)
    ete = float(e @ e)
    if ete == 0.0 or np.ptp(e) == 0.0:
        raise ModelError("residual vector is constant; dependence tests are undefined")
    W = w.matrix
    We, Wy = W @ e, W @ y
    sig2 = ete / n
    T = float(W.multiply(W).sum() + W.multiply(W.T).sum())
    wxb = W @ (A @ fit.coefficients)
    mwxb = wxb - A @ (xtxi @ (A.T @ wxb))
    D = float(wxb @ mwxb) / sig2 + T
    a = float(e @ Wy) / sig2
    b = float(e @ We) / sig2
    lm_err = b ** 2 / T
    lm_lag = a ** 2 / D
    if D - T > 1e-12 * D:
        rlm_lag = (a - b) ** 2 / (D - T)
        rlm_err = (b - T / D * a) ** 2 / (T * (1.0 - T / D))
        sarma = lm_err + rlm_lag
    else:
        # W X beta lies in the column space of X: the robust forms are undefined
        rlm_lag = rlm_err = sarma = math.nan

    s0 = w.s0
    moran = n / s0 * float(e @ We) / ete
    Wd = w.dense()
    MW = Wd - A @ (xtxi @ (A.T @ Wd))
    MWM = MW - (MW @ A) @ xtxi @ A.T
    tr_mw = float(np.trace(MW))
    expected = n / s0 * tr_mw / (n - k)
    var = (n / s0) ** 2 * (float((MWM * MWM).sum()) + float((MWM * MWM.T).sum()) + tr_mw ** 2) \
        / ((n - k) * (n - k + 2)) - expected ** 2
    z = (moran - expected) / math.sqrt(var)
    mi = MoranResult(moran, expected, var, z, float(2 * stats.norm.sf(abs(z))))
    return DependenceDiagnostics(mi, _lm(lm_lag, 1), _lm(rlm_lag, 1), _lm(lm_err, 1),
                                 _lm(rlm_err, 1), _lm(sarma, 2))
