"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line, repeated in the terminal summary.
Criterion 14 needs user-supplied county data: point COUNTYSPATIAL_EXTERNAL_CONFIG
at a model1 config whose covariates include HBACM, ARSON and DomMig.
"""

import csv
import io
import math
import os
import time

import numpy as np
import pytest

from countyspatial.cli import main
from countyspatial.config import load_config
from countyspatial.design import DesignMatrix
from countyspatial.fixtures import grid_coords, mixed_surfaces, simulate_error, simulate_lag
from countyspatial.global_models import dependence_diagnostics, fit_ols, fit_sem, fit_slm
from countyspatial.importance import ForestConfig, fit_forest, relative_importance
from countyspatial.local_models import AdaptiveKernel, fit_gwr, fit_mgwr
from countyspatial.local_models.gwr import gwr_aicc
from countyspatial.pipeline import run_model1
from countyspatial.reports import read_manifest
from countyspatial.selection import stepwise_forward, vif

from conftest import FIXTURE_DIR, rook_w

EXTERNAL = os.environ.get("COUNTYSPATIAL_EXTERNAL_CONFIG")


def lattice_draws(model, param, reps, nx=20):
    w = rook_w(nx)
    sim = simulate_lag if model == "lag" else simulate_error
    fitter = fit_slm if model == "lag" else fit_sem
    est = []
    for seed in range(reps):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(w.n, 1))
        y = sim(w, X, np.array([1.0, 2.0]), param, rng)
        fit = fitter(X, y, w)
        est.append(fit.rho if model == "lag" else fit.lam)
    return np.array(est)


def test_c01_ols_exactness(verdict):
    t0 = time.perf_counter()
    x = np.linspace(0, 10, 50)
    fit = fit_ols(x, 1 + 2 * x)
    dt = time.perf_counter() - t0
    err = float(np.abs(fit.coefficients - [1, 2]).max())
    ok = err < 1e-10 and fit.stats["r2"] == pytest.approx(1.0, abs=1e-12) and dt < 1
    verdict(1, ok, f"max coef error {err:.1e}, R2 {fit.stats['r2']:.12f}, {dt:.3f}s")


def test_c02_slm_recovery(verdict):
    t0 = time.perf_counter()
    rho = lattice_draws("lag", 0.5, 30)
    dt = time.perf_counter() - t0
    ok = 0.45 <= rho.mean() <= 0.55 and rho.min() > 0.3 and rho.max() < 0.7 and dt < 30
    verdict(2, ok, f"mean rho {rho.mean():.4f}, range [{rho.min():.3f}, {rho.max():.3f}], "
                   f"{dt:.1f}s")


def test_c03_sem_recovery(verdict):
    t0 = time.perf_counter()
    lam = lattice_draws("error", 0.6, 30)
    dt = time.perf_counter() - t0
    ok = 0.52 <= lam.mean() <= 0.68 and dt < 30
    verdict(3, ok, f"mean lambda {lam.mean():.4f}, {dt:.1f}s")


def test_c04_diagnostics_power_and_size(verdict):
    w = rook_w(10)
    lag_wins = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(100, 1))
        d = dependence_diagnostics(fit_ols(X, simulate_lag(w, X, np.array([1.0, 2.0]), 0.7, rng)), w)
        lag_wins += d.lm_lag.value > d.lm_error.value
    rejections = 0
    for seed in range(500):
        rng = np.random.default_rng(10_000 + seed)
        X = rng.normal(size=(100, 1))
        d = dependence_diagnostics(fit_ols(X, 1 + 2 * X[:, 0] + rng.normal(size=100)), w)
        rejections += d.lm_lag.probability < 0.05
    rate = rejections / 500
    ok = lag_wins >= 80 and 0.02 <= rate <= 0.09
    verdict(4, ok, f"LM-lag > LM-error in {lag_wins}/100, null rejection rate {rate:.3f}")


def test_c05_diagnostics_identity(verdict):
    w = rook_w(8)
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(64, 2))
        rho = rng.uniform(-0.5, 0.8)
        y = simulate_lag(w, X, np.array([0.5, 1.0, -1.0]), rho, rng)
        d = dependence_diagnostics(fit_ols(X, y), w)
        worst = max(worst, abs(d.lm_lag.value + d.robust_lm_error.value - d.lm_sarma.value),
                    abs(d.lm_error.value + d.robust_lm_lag.value - d.lm_sarma.value))
    verdict(5, worst < 1e-6, f"max identity gap {worst:.1e}")


def test_c06_gwr_global_limit(verdict):
    rng = np.random.default_rng(6)
    coords = grid_coords(15)
    X = rng.normal(size=(225, 2))
    y = 3.0 + X @ [1.0, -1.0] + rng.normal(0, 0.5, 225)
    fit = fit_gwr(X, y, coords, k=225)
    dev = float(np.abs(fit.local_coefficients - fit_ols(X, y).coefficients).max())
    verdict(6, dev < 1e-6, f"max local-vs-OLS deviation at k = n: {dev:.3e}")


def test_c07_bandwidth_oracle(verdict):
    agree = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        coords = grid_coords(15)
        x = rng.normal(size=225)
        uv = coords / 14
        y = 1 + (1 + (uv[:, 0] + uv[:, 1]) / 2) * x + rng.normal(0, 0.5, 225)
        A = np.column_stack([np.ones(225), x])
        kern = AdaptiveKernel(coords)
        scan = {k: gwr_aicc(A, y, kern, k) for k in range(3, 226)}
        best = min(scan, key=lambda k: (scan[k], k))
        got = fit_gwr(x, y, coords).bandwidth
        agree.append(got == best or abs(scan[got] - scan[best]) <= 1e-9)
    verdict(7, all(agree), f"golden matches exhaustive scan on {sum(agree)}/5 datasets")


def test_c08_mgwr_vs_gwr(verdict):
    t0 = time.perf_counter()
    aicc_ok = bw_ok = both = 0
    detail = []
    for seed in range(10):
        coords, X, y, _ = mixed_surfaces(15, seed)
        n = len(y)
        gwr = fit_gwr(X, y, coords)
        mgwr = fit_mgwr(X, y, coords)
        a = mgwr.aicc <= gwr.aicc
        b = mgwr.bandwidths[1] >= 0.8 * n and mgwr.bandwidths[2] <= 0.3 * n
        aicc_ok += a
        bw_ok += b
        both += a and b
        detail.append(f"{mgwr.bandwidths[1]}/{mgwr.bandwidths[2]}")
    dt = time.perf_counter() - t0
    ok = both >= 9 and dt < 300
    verdict(8, ok, f"AICc ordering {aicc_ok}/10, bandwidth split {bw_ok}/10, both {both}/10, "
                   f"constant/varying k per seed {' '.join(detail)}, {dt:.0f}s")


def test_c09_mgwr_equals_gwr(verdict):
    coords, X, y, _ = mixed_surfaces(15, 0)
    gwr = fit_gwr(X, y, coords)
    k = gwr.bandwidth
    mgwr = fit_mgwr(X, y, coords, bandwidths=[k, k, k], init_bandwidth=k)
    rms = float(np.sqrt(np.mean((mgwr.fitted - gwr.fitted) ** 2)))
    verdict(9, rms < 1e-4, f"fitted RMS gap with every bandwidth pinned at {k}: {rms:.3e}")


def test_c10_vif_gate(verdict):
    rng = np.random.default_rng(10)
    x = rng.normal(size=50)
    dup = vif(np.column_stack([x, x]))
    Z = rng.normal(size=(50, 2))
    Z -= Z.mean(axis=0)
    q, _ = np.linalg.qr(Z)
    ortho = vif(q)
    pair = vif(np.column_stack([q[:, 0], 0.9 * q[:, 0] + math.sqrt(0.19) * q[:, 1]]))
    ok = (all(math.isinf(v) for v in dup.values())
          and all(abs(v - 1) <= 1e-8 for v in ortho.values())
          and all(abs(v - 5.263) <= 1e-3 for v in pair.values()))
    verdict(10, ok, f"duplicate {list(dup.values())}, orthogonal "
                    f"{[round(v, 10) for v in ortho.values()]}, r=0.9 "
                    f"{[round(v, 4) for v in pair.values()]}")


def test_c11_stepwise_determinism(verdict):
    rng = np.random.default_rng(11)
    Z = rng.normal(size=(120, 8))
    Z[:, 4] = Z[:, 1] + 0.3 * rng.normal(size=120)
    X = DesignMatrix(tuple(f"c{j}" for j in range(8)), Z)
    y = Z[:, 1] - 0.5 * Z[:, 6] + 0.3 * Z[:, 3] + rng.normal(size=120)
    logs = [stepwise_forward(X, y).step_log for _ in range(10)]
    same = all(log == logs[0] for log in logs)
    verdict(11, same and len(logs[0]) > 0,
            f"10 runs identical: {same}; steps {[s.entered for s in logs[0]]}")


def test_c12_forest_importance(verdict):
    wins, worst_sum = 0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(200, 6))
        y = 3 * X[:, 0] + rng.normal(size=200)
        names = tuple(f"x{j + 1}" for j in range(6))
        rep = relative_importance(fit_forest(DesignMatrix(names, X), y, ForestConfig(seed=seed)))
        wins += rep.relative_importance["x1"] > 50
        worst_sum = max(worst_sum, abs(sum(rep.relative_importance.values()) - 100))
    verdict(12, wins >= 18 and worst_sum <= 1e-6,
            f"x1 > 50% in {wins}/20 seeds, max |sum - 100| {worst_sum:.1e}")


def test_c13_pipeline_reproducibility(verdict, tmp_path):
    failures = []
    for model in ("model1", "model2", "model3", "model4"):
        first = tmp_path / model
        assert main([model, "--config", str(FIXTURE_DIR / f"{model}.yaml"), "--out", str(first)]) == 0
        again = tmp_path / f"{model}-again"
        code = main(["report", "--config", str(first), "--out", str(again)])
        outputs = read_manifest(first)["outputs"]
        same = all((first / f).read_bytes() == (again / f).read_bytes() for f in outputs)
        if code != 0 or not same:
            failures.append(model)
    verdict(13, not failures, "byte-identical reruns for model1-model4"
            + (f"; differs: {failures}" if failures else ""))


@pytest.mark.skipif(not EXTERNAL, reason="external county data not supplied")
def test_c14_external_table_signs(verdict):
    bundle = run_model1(load_config(EXTERNAL))
    coef = {(r["model"], r["term"]): r for r in
            csv.DictReader(io.StringIO(bundle.files["model1_coefficients.csv"]))}
    fit = {r["model"]: r for r in csv.DictReader(io.StringIO(bundle.files["model1_fit.csv"]))}
    signs = (float(coef[("OLS", "HBACM")]["coefficient"]) > 0,
             float(coef[("OLS", "ARSON")]["coefficient"]) > 0,
             float(coef[("OLS", "DomMig")]["coefficient"]) < 0)
    aic = {m: float(fit[m]["aic"]) for m in ("OLS", "SLM", "SEM")}
    order = aic["SLM"] < aic["SEM"] < aic["OLS"]
    verdict(14, all(signs) and order, f"signs HBACM/ARSON/DomMig {signs}, AIC {aic}")
