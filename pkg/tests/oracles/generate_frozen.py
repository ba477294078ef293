"""Regenerate the frozen reference values used by the test suite.

Not collected by pytest. Needs the optional reference packages
spreg, libpysal, mgwr and statsmodels, none of which the library imports.
Run from the repository root:

    python tests/oracles/generate_frozen.py
"""

import json
from pathlib import Path

import numpy as np


def lattice_data(nx=10, seed=123, rho=0.4):
    import libpysal

    w = libpysal.weights.lat2W(nx, nx, rook=True)
    w.transform = "r"
    W = w.full()[0]
    n = nx * nx
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = np.linalg.solve(np.eye(n) - rho * W, 1.0 + X @ np.array([2.0, -1.0]) + rng.normal(size=n))
    return w, X, y


def global_oracle():
    from spreg import ML_Error, ML_Lag, OLS

    w, X, y = lattice_data()
    ols = OLS(y[:, None], X, w=w, spat_diag=True, moran=True)
    lag = ML_Lag(y[:, None], X, w=w, method="full")
    err = ML_Error(y[:, None], X, w=w, method="full")
    return {
        "ols": {"betas": ols.betas.ravel().tolist(), "r2": ols.r2, "logll": ols.logll,
                "aic": ols.aic, "schwarz": ols.schwarz, "std_err": ols.std_err.tolist(),
                "moran": list(ols.moran_res), "lm_lag": list(ols.lm_lag),
                "rlm_lag": list(ols.rlm_lag), "lm_error": list(ols.lm_error),
                "rlm_error": list(ols.rlm_error), "sarma": list(ols.lm_sarma)},
        "lag": {"rho": float(lag.rho), "betas": lag.betas.ravel().tolist(), "logll": lag.logll,
                "aic": lag.aic, "schwarz": lag.schwarz, "std_err": lag.std_err.tolist()},
        "error": {"lam": float(err.lam), "betas": err.betas.ravel().tolist(),
                  "logll": err.logll, "aic": err.aic, "schwarz": err.schwarz,
                  "std_err": err.std_err.tolist()},
    }


def local_data(nx=12, seed=5):
    rng = np.random.default_rng(seed)
    u, v = np.meshgrid(np.arange(nx, dtype=float), np.arange(nx, dtype=float))
    coords = np.column_stack([u.ravel(), v.ravel()])
    x = rng.normal(size=nx * nx)
    b1 = 1.0 + (coords[:, 0] + coords[:, 1]) / (2 * (nx - 1))
    y = 2.0 + b1 * x + rng.normal(0, 0.5, nx * nx)
    return coords, x[:, None], y


def local_oracle():
    from mgwr.gwr import GWR

    coords, X, y = local_data()
    out = {}
    # the reference inflates the k-th distance by 1e-7, giving that point a weight
    # near 1e-14 instead of 0; agreement is therefore close to 1e-5, not exact
    for b in (20, 50, 100):
        res = GWR(coords, y[:, None], X, bw=b, fixed=False, kernel="bisquare").fit()
        out[str(b)] = {"aicc": float(res.aicc), "tr_s": float(res.tr_S),
                           "params_mean": res.params.mean(axis=0).tolist(),
                           "r2": float(res.R2), "adj_r2": float(res.adj_R2)}
    return out


def mgwr_oracle(bandwidths=(30, 100)):
    from mgwr.gwr import MGWR
    from mgwr.sel_bw import Sel_BW

    coords, X, y = local_data()
    sel = Sel_BW(coords, y[:, None], X, multi=True, kernel="bisquare", fixed=False)
    sel.search(multi_bw_min=list(bandwidths), multi_bw_max=list(bandwidths), tol_multi=1e-8,
               max_iter_multi=500)
    res = MGWR(coords, y[:, None], X, sel, kernel="bisquare", fixed=False).fit()
    return {"bandwidths": list(bandwidths), "aicc": float(res.aicc), "tr_s": float(res.tr_S),
            "enp": res.ENP_j.tolist(), "fitted_head": res.predy.ravel()[:10].tolist(),
            "params_mean": res.params.mean(axis=0).tolist(),
            "se_mean": res.bse.mean(axis=0).tolist()}


def vif_oracle():
    from statsmodels.stats.outliers_influence import variance_inflation_factor

    rng = np.random.default_rng(9)
    Z = rng.normal(size=(60, 3))
    Z[:, 2] = 0.6 * Z[:, 0] + 0.8 * rng.normal(size=60)
    A = np.column_stack([np.ones(60), Z])
    return [float(variance_inflation_factor(A, j)) for j in (1, 2, 3)]


if __name__ == "__main__":
    doc = {"global": global_oracle(), "local": local_oracle(), "mgwr": mgwr_oracle(),
           "vif": vif_oracle()}
    Path(__file__).with_name("frozen.json").write_text(json.dumps(doc, indent=1) + "\n")
