import math
import warnings
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import hadamard

from countyspatial.fixtures import grid_coords
from countyspatial.global_models import fit_ols
from countyspatial.local_models import (
    AdaptiveKernel, ConvergenceWarning, LocalModelError, bandwidth_interval, bin_local_r2,
    bisquare_weights, collinearity_from_weights, corrected_inference, fit_gwr, fit_mgwr,
    golden_search_bandwidth, local_collinearity)
from countyspatial.local_models.gwr import gwr_aicc, local_wls

from conftest import local_sample


def planar_sample(seed, nx=15, sigma=0.5):
    """Slope 1 + (u + v)/2 with u, v scaled to the unit square."""
    rng = np.random.default_rng(seed)
    coords = grid_coords(nx)
    x = rng.normal(size=nx * nx)
    uv = coords / (nx - 1)
    b1 = 1.0 + (uv[:, 0] + uv[:, 1]) / 2
    y = 1.0 + b1 * x + rng.normal(0, sigma, nx * nx)
    return coords, x[:, None], y, b1


# -- kernel ----------------------------------------------------------------

def test_bisquare_examples():
    w = bisquare_weights([0.0, 0.5, 1.0, 2.0], 3)
    assert w.tolist() == [1.0, 0.5625, 0.0, 0.0]
    with pytest.raises(ValueError):
        bisquare_weights([0.0, 1.0], 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10_000))
def test_kernel_support(n, seed):
    coords = np.random.default_rng(seed).uniform(0, 1, (n, 2))
    kern = AdaptiveKernel(coords)
    k = max(2, n // 2)
    K = kern.weights(k)
    assert np.all((K >= 0) & (K <= 1))
    assert np.all(np.diag(K) == 1.0)
    # at most k - 1 strictly positive weights per row, barring distance ties
    assert np.all((K > 0).sum(axis=1) <= k - 1 + (kern.distances == kern.bandwidths(k)[:, None]).sum(axis=1))
    np.testing.assert_array_equal(K[0], bisquare_weights(kern.distances[0], k))


# -- reference agreement ---------------------------------------------------

@pytest.mark.parametrize("k", [20, 50, 100])
def test_gwr_matches_reference(frozen, k):
    ref = frozen["local"][str(k)]
    coords, X, y = local_sample()
    fit = fit_gwr(X, y, coords, k=k)
    assert fit.aicc == pytest.approx(ref["aicc"], abs=1e-4)
    assert fit.hat_trace == pytest.approx(ref["tr_s"], abs=1e-5)
    np.testing.assert_allclose(fit.local_coefficients.mean(axis=0), ref["params_mean"], atol=1e-6)
    assert fit.stats["r2"] == pytest.approx(ref["r2"], abs=1e-6)
    assert fit.stats["adj_r2"] == pytest.approx(ref["adj_r2"], abs=1e-6)


def test_pinned_mgwr_matches_reference(frozen):
    ref = frozen["mgwr"]
    coords, X, y = local_sample()
    fit = fit_mgwr(X, y, coords, bandwidths=ref["bandwidths"], tol=1e-8)
    assert fit.converged
    assert fit.aicc == pytest.approx(ref["aicc"], abs=1e-4)
    assert fit.hat_trace == pytest.approx(ref["tr_s"], abs=1e-5)
    np.testing.assert_allclose(fit.enp, ref["enp"], atol=1e-5)
    np.testing.assert_allclose(fit.fitted[:10], ref["fitted_head"], atol=1e-6)
    np.testing.assert_allclose(fit.local_coefficients.mean(axis=0), ref["params_mean"], atol=1e-6)
    np.testing.assert_allclose(fit.local_se.mean(axis=0), ref["se_mean"], atol=1e-6)


# -- GWR properties --------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(8, 40), st.integers(1, 3), st.integers(0, 10_000))
def test_uniform_weights_reproduce_ols(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = X @ rng.normal(size=p) + rng.normal(size=n)
    A = np.column_stack([np.ones(n), X])
    sol = local_wls(A, y, np.ones((n, n)))
    ols = fit_ols(X, y).coefficients
    np.testing.assert_allclose(sol.betas, np.tile(ols, (n, 1)), atol=1e-8)
    assert sol.influence.sum() == pytest.approx(p + 1, abs=1e-8)


def test_trace_bounds_and_monotone():
    coords, X, y, _ = planar_sample(0)
    n, p = len(y), X.shape[1]
    traces = [fit_gwr(X, y, coords, k=k).hat_trace for k in (10, 20, 40, 80, 160, n)]
    assert all(p + 1 - 1e-9 <= t <= n for t in traces)
    assert all(a >= b - 1e-9 for a, b in zip(traces, traces[1:]))


def test_surface_variance_shrinks_with_k():
    coords, X, y, _ = planar_sample(1)
    var = np.array([fit_gwr(X, y, coords, k=k).local_coefficients.var(axis=0)
                    for k in (10, 20, 40, 80, 160, 225)])
    assert np.all(np.diff(var, axis=0) <= 1e-12)


def test_evaluation_order_is_irrelevant():
    coords, X, y, _ = planar_sample(2)
    A = np.column_stack([np.ones(len(y)), X])
    K = AdaptiveKernel(coords).weights(30)
    perm = np.random.default_rng(0).permutation(len(y))
    a = local_wls(A, y, K)
    b = local_wls(A, y, K[perm])
    np.testing.assert_array_equal(b.betas, a.betas[perm])
    np.testing.assert_array_equal(b.inverses, a.inverses[perm])


@pytest.mark.parametrize("seed", range(3))
def test_planar_surface_recovery(seed):
    coords, X, y, b1 = planar_sample(seed)
    fit = fit_gwr(X, y, coords)
    assert np.abs(fit.local_coefficients[:, 1] - b1).mean() < 0.15


def test_local_r2_in_unit_interval():
    coords, X, y, _ = planar_sample(3)
    for k in (8, 50, 225):
        r2 = fit_gwr(X, y, coords, k=k).local_r2
        assert np.all((r2 >= 0) & (r2 <= 1))


def test_rank_deficient_location():
    coords = grid_coords(8)
    x = np.where(coords[:, 0] < 4, 0.0, np.random.default_rng(0).normal(size=64))
    y = np.random.default_rng(1).normal(size=64)
    with pytest.raises(LocalModelError, match="location.*larger bandwidth"):
        fit_gwr(x, y, coords, k=4)


def test_bandwidth_validation():
    coords, X, y, _ = planar_sample(0, nx=5)
    with pytest.raises(LocalModelError):
        fit_gwr(X, y, coords, k=2)
    with pytest.raises(LocalModelError):
        fit_gwr(X, y, coords, k=26)


def test_selected_bandwidth_matches_scan():
    coords, X, y, _ = planar_sample(4, nx=10)
    A = np.column_stack([np.ones(100), X])
    kern = AdaptiveKernel(coords)
    scan = {k: gwr_aicc(A, y, kern, k) for k in range(3, 101)}
    best = min(scan, key=lambda k: (scan[k], k))
    fit = fit_gwr(X, y, coords)
    assert fit.bandwidth == best or scan[fit.bandwidth] - scan[best] < 1e-9


# -- search ----------------------------------------------------------------

def test_golden_examples():
    assert golden_search_bandwidth(lambda k: (k - 40) ** 2, 10, 200) == 40
    assert golden_search_bandwidth(lambda k: -k, 10, 200) == 200
    assert golden_search_bandwidth(lambda k: 1.0, 10, 200) == 10
    with pytest.raises(ValueError):
        golden_search_bandwidth(lambda k: math.inf, 10, 200)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 50), st.integers(0, 400), st.floats(0.01, 10))
def test_golden_finds_convex_minimum(lo, span, scale):
    hi = lo + span
    target = lo + span // 3
    assert golden_search_bandwidth(lambda k: scale * (k - target) ** 2, lo, hi) == target


def test_interval_examples():
    assert bandwidth_interval(lambda k: 5.0, 40, 10, 200) == (10, 200)
    assert bandwidth_interval(lambda k: 2 / 9 * (k - 40) ** 2, 40, 10, 200) == (37, 43)
    assert bandwidth_interval(lambda k: 100.0 * abs(k - 40), 40, 10, 200) == (40, 40)


# -- inference and bins ----------------------------------------------------

def test_corrected_inference_examples():
    one = SimpleNamespace(n=100, hat_trace=2.0, names=("c", "x"))
    assert corrected_inference(one)["adj_alpha"] == pytest.approx(0.05)
    two = SimpleNamespace(n=100, hat_trace=4.0, names=("c", "x"))
    out = corrected_inference(two)
    assert out["adj_alpha"] == pytest.approx(0.025)
    assert out["critical_t"] == pytest.approx(2.2766, abs=1e-3)
    with pytest.raises(LocalModelError):
        corrected_inference(SimpleNamespace(n=10, hat_trace=9.0, names=("c",)))


def test_bins():
    counts = bin_local_r2(np.full(7, 0.95))
    assert counts["0.93 - 0.96"] == 7 and sum(counts.values()) == 7
    edges = bin_local_r2(np.array([0.0, 0.34, 0.3400001, 1.0]))
    assert edges["0.00 - 0.34"] == 2 and edges["0.34 - 0.66"] == 1 and edges["0.96 - 1.00"] == 1


# -- collinearity ----------------------------------------------------------

def test_orthonormal_design():
    A = hadamard(8)[:, :3].astype(float)
    out = collinearity_from_weights(A, np.ones((8, 8)))
    np.testing.assert_allclose(out.condition_number, 1.0, atol=1e-9)
    assert not out.flags.any()


def test_duplicated_column_flags():
    coords = grid_coords(6)
    x = np.random.default_rng(0).normal(size=36)
    out = local_collinearity(np.column_stack([x, x]), coords, 20)
    assert np.all(out.condition_number > 1e8)
    assert out.cn_flag.all() and out.flags.all()


def test_condition_number_svd_oracle():
    rng = np.random.default_rng(50)
    coords = rng.uniform(0, 10, (50, 2))
    X = rng.normal(size=(50, 2))
    X[:, 1] += 0.8 * X[:, 0]
    k = 20
    out = local_collinearity(X, coords, k)
    A = np.column_stack([np.ones(50), X])
    for i in (0, 7, 19, 33, 49):
        d = np.hypot(*(coords - coords[i]).T)
        b = np.sort(d)[k - 1]
        w = np.where(d < b, (1 - (d / b) ** 2) ** 2, 0.0)
        Z = A * np.sqrt(w)[:, None]
        s = np.linalg.svd(Z / np.linalg.norm(Z, axis=0), compute_uv=False)
        assert out.condition_number[i] == pytest.approx(s[0] / s[-1], abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(6, 40))
def test_collinearity_invariants(seed, k):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 1, (40, 2))
    out = local_collinearity(rng.normal(size=(40, 2)), coords, k)
    assert np.all(out.condition_number >= 1 - 1e-12)
    np.testing.assert_allclose(out.vdp.sum(axis=1), 1.0, atol=1e-9)


def test_zero_variance_is_flagged_not_fatal():
    coords = grid_coords(6)
    x = np.where(coords[:, 0] < 3, 1.0, np.random.default_rng(0).normal(size=36))
    out = local_collinearity(x, coords, 5)
    assert out.zero_variance.any() and out.flags[out.zero_variance].all()


# -- MGWR ------------------------------------------------------------------

def test_mgwr_at_n_noise_free_is_ols():
    rng = np.random.default_rng(0)
    coords = grid_coords(8)
    X = rng.normal(size=(64, 2))
    y = 1.0 + X @ [2.0, -0.5]
    fit = fit_mgwr(X, y, coords, bandwidths=[64, 64, 64], tol=1e-10)
    ols = fit_ols(X, y).fitted
    assert np.sqrt(np.mean((fit.fitted - ols) ** 2)) < 1e-4


def test_mgwr_bandwidth_range_and_convergence():
    coords, X, y, _ = planar_sample(5, nx=10)
    fit = fit_mgwr(X, y, coords)
    n, p = 100, 1
    assert all(p + 2 <= k <= n for k in fit.bandwidths)
    assert fit.converged and fit.soc_history[-1] < 1e-5
    assert fit.hat_trace == pytest.approx(fit.enp.sum())
    assert len(fit.covariate_inference) == 2


def test_mgwr_non_convergence_warns():
    coords, X, y, _ = planar_sample(6, nx=8)
    with pytest.warns(ConvergenceWarning):
        fit = fit_mgwr(X, y, coords, bandwidths=[10, 30], max_iter=1, tol=1e-14)
    assert not fit.converged and fit.backfit_iterations == 1


def test_mgwr_pin_validation():
    coords, X, y, _ = planar_sample(0, nx=6)
    with pytest.raises(LocalModelError):
        fit_mgwr(X, y, coords, bandwidths=[10])
    with pytest.raises(LocalModelError):
        fit_mgwr(X, y, coords, bandwidths=[2, 10])


def test_mgwr_intervals_contain_bandwidths():
    coords, X, y, _ = planar_sample(7, nx=8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        fit = fit_mgwr(X, y, coords, intervals=True)
    for (lo, hi), k in zip(fit.bandwidth_intervals, fit.bandwidths):
        assert lo <= k <= hi
