"""Batch orchestration of the four model runs, selection and importance."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError, RunConfig
from .dataset import (DatasetError, GridSurface, PointSamples, SpatialDataset, cumulative_total,
                      dataset_bounds, interpolate_grid, join_attributes, load_dataset,
                      monthly_total, read_daily_csv, to_geojson, zonal_mean)
from .design import DesignMatrix
from .global_models import dependence_diagnostics, fit_ols, fit_sem, fit_slm
from .importance import ForestConfig, fit_forest, relative_importance
from .local_models import (AdaptiveKernel, bin_local_r2, collinearity_from_weights, fit_gwr,
                           fit_mgwr)
from .reports import Bundle
from .selection import confirm_enter, pooled_selection, stepwise_forward
from .weights import (WeightMatrix, contiguity_weights, distance_band_weights, rho_bounds,
                      row_standardize, to_gal)

DIAGNOSTIC_ALPHA = 0.05
NOT_INDICATED = "not indicated"

COMPARE_HEADER = ["model", "bandwidth", "r2", "adj_r2", "aicc", "aic", "bic", "rss",
                  "hat_trace", "sigma2", "adj_alpha", "critical_t", "n"]
BANDWIDTH_HEADER = ["model", "term", "bandwidth", "enp", "adj_alpha", "critical_t",
                    "interval_lo", "interval_hi"]


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read input {path}: {exc.strerror}") from None


# -- data preparation ------------------------------------------------------

def load_inputs(cfg: RunConfig) -> SpatialDataset:
    """Geometry joined to every attribute file, plus any point-derived columns."""
    inp = cfg.inputs
    ds = load_dataset(_read(inp.geometry), _read(inp.attributes[0]), inp.fips_column,
                      fips_property=inp.fips_property)
    for path in inp.attributes[1:]:
        ds = join_attributes(ds, _read(path), inp.fips_column)
    for pt in inp.points:
        samples = PointSamples.from_csv(_read(pt.path), pt.value_column)
        grid = interpolate_grid(samples, GridSurface.covering(dataset_bounds(ds), pt.cell), pt.power)
        ds = ds.with_column(pt.column, [zonal_mean(grid, f.rings) for f in ds.features])
    return ds


def _daily_series(cfg: RunConfig) -> dict:
    out: dict = {}
    for path in cfg.inputs.daily:
        series = read_daily_csv(_read(path), cfg.response.variable, cfg.inputs.daily_fips_column,
                                cfg.inputs.daily_date_column)
        clash = set(series) & set(out)
        if clash:
            raise DatasetError(f"county {min(clash)} appears in more than one daily file")
        out.update(series)
    return out


def month_label(year: int, month: int) -> str:
    return f"{year:04d}-{month:02d}"


def response_columns(cfg: RunConfig, ds: SpatialDataset) -> dict[str, np.ndarray]:
    """Response vector(s) aligned to ``ds``; one per month for monthly aggregation."""
    r = cfg.response
    if r.aggregation == "attribute":
        out = {r.variable: _column(ds, r.variable, "response.variable").copy()}
    else:
        series = _daily_series(cfg)
        if not series:
            raise DatasetError(f"daily inputs hold no {r.variable!r} values")
        if r.aggregation == "cumulative":
            through = r.through or max(s.dates[-1] for s in series.values() if len(s.dates))
            vals = [cumulative_total(series[f], through) if f in series else np.nan for f in ds.fips]
            out = {r.variable: np.array(vals, dtype=float)}
        else:
            out = {}
            for year, month in r.months:
                vals = [monthly_total(series[f], year, month) if f in series else np.nan
                        for f in ds.fips]
                out[month_label(year, month)] = np.array(vals, dtype=float)
    if r.per_capita:
        pop = _column(ds, r.population_column, "response.population_column")
        with np.errstate(divide="ignore", invalid="ignore"):
            bad = ~(pop > 0)
            for key in out:
                out[key] = np.where(bad, np.nan, out[key] / pop * r.scale)
    return out


def _column(ds: SpatialDataset, name: str, where: str) -> np.ndarray:
    if name not in ds.columns:
        raise ConfigError(f"{where}: column {name!r} not found after join")
    return ds.column(name)


def build_weights(cfg: RunConfig, ds: SpatialDataset) -> WeightMatrix:
    wc = cfg.weights
    if wc.kind == "distance":
        w = distance_band_weights(ds, wc.metric, wc.threshold, wc.min_neighbors)
    else:
        w = contiguity_weights(ds, wc.kind)
    return row_standardize(w) if wc.standardize else w


@dataclass
class ModelData:
    """Complete-case rows for one run."""

    ds: SpatialDataset
    responses: dict[str, np.ndarray]
    X: DesignMatrix
    rows: np.ndarray
    dropped: int
    full: SpatialDataset

    @property
    def y(self) -> np.ndarray:
        return next(iter(self.responses.values()))

    @property
    def coords(self) -> np.ndarray:
        return self.ds.centroids


def model_data(cfg: RunConfig, columns: Sequence[str], ds: SpatialDataset | None = None) -> ModelData:
    ds = ds if ds is not None else load_inputs(cfg)
    responses = response_columns(cfg, ds)
    columns = list(dict.fromkeys(columns))
    for c in columns:
        _column(ds, c, "covariates")
    keep = ds.complete_rows(columns)
    for v in responses.values():
        keep &= np.isfinite(v)
    rows = np.flatnonzero(keep)
    if rows.size == 0:
        raise DatasetError("no complete rows remain after dropping missing values")
    sub = ds.subset(rows)
    X = DesignMatrix(tuple(columns), np.column_stack([sub.column(c) for c in columns])
                     if columns else np.empty((rows.size, 0)))
    return ModelData(sub, {k: v[rows] for k, v in responses.items()}, X, rows,
                     int(ds.n - rows.size), ds)


def _drop_note(bundle: Bundle, data: ModelData) -> None:
    bundle.meta["rows_used"] = int(data.rows.size)
    bundle.meta["rows_dropped"] = data.dropped
    if data.dropped:
        bundle.notes.append(f"dropped {data.dropped} rows with missing values")


# -- ingest and weights ----------------------------------------------------

def run_ingest(cfg: RunConfig) -> Bundle:
    ds = load_inputs(cfg)
    responses = response_columns(cfg, ds)
    b = Bundle()
    cent = ds.centroids
    header = ["fips", "lon", "lat", *ds.columns, *responses]
    b.add_csv("dataset.csv", header,
              ([f, *cent[i], *ds.attributes[i], *(v[i] for v in responses.values())]
               for i, f in enumerate(ds.fips)))
    b.files["dataset.geojson"] = to_geojson(ds, {k: v.tolist() for k, v in responses.items()})
    jr = ds.join_report
    b.add_csv("join_report.csv", ["side", "fips"],
              [("attributes_only", f) for f in jr.unmatched_attributes]
              + [("geometry_only", f) for f in jr.unmatched_geometry])
    b.notes.append(f"joined {ds.n} counties; {len(jr.unmatched_attributes)} attribute rows and "
                   f"{len(jr.unmatched_geometry)} geometries unmatched")
    return b


def run_weights(cfg: RunConfig) -> Bundle:
    ds = load_inputs(cfg)
    w = build_weights(cfg, ds)
    b = Bundle()
    b.files["weights.gal"] = to_gal(w, ds.fips)
    card = w.cardinalities
    b.add_csv("weights_neighbors.csv", ["fips", "neighbors", "island"],
              ((f, int(card[i]), bool(card[i] == 0)) for i, f in enumerate(ds.fips)))
    lo = hi = np.nan
    if w.row_standardized and w.n > 1:
        lo, hi = rho_bounds(w)
    b.add_csv("weights_summary.csv", ["kind", "metric", "threshold", "n", "links", "s0",
                                      "mean_neighbors", "islands", "rho_min", "rho_max"],
              [(w.kind, w.metric or "", w.threshold, w.n, int(w.matrix.nnz), w.s0,
                float(card.mean()), len(w.islands), lo, hi)])
    if w.islands:
        b.notes.append(f"{len(w.islands)} islands (counties with no neighbours)")
    return b


# -- Model 1: global regression -------------------------------------------

def _global_rows(fit, status="fitted"):
    rows = [(fit.model.upper(), status, name, c, se, fit.stat_label, t, p)
            for name, c, se, t, p in zip(fit.names, fit.coefficients, fit.std_errors,
                                         fit.t_or_z, fit.probabilities)]
    if fit.rho is not None:
        rows.append(("SLM", status, "rho", fit.rho, fit.spatial_se, "z", fit.spatial_z, fit.spatial_p))
    if fit.lam is not None:
        rows.append(("SEM", status, "lambda", fit.lam, fit.spatial_se, "z", fit.spatial_z,
                     fit.spatial_p))
    return rows


def run_model1(cfg: RunConfig) -> Bundle:
    """OLS with dependence diagnostics; SLM and SEM when a LM test is significant."""
    data = model_data(cfg, cfg.covariates)
    w = build_weights(cfg, data.full).subset(data.rows)
    ols = fit_ols(data.X, data.y)
    diag = dependence_diagnostics(ols, w)
    indicated = (diag.lm_lag.probability < DIAGNOSTIC_ALPHA
                 or diag.lm_error.probability < DIAGNOSTIC_ALPHA)
    fits = [ols] + ([fit_slm(data.X, data.y, w), fit_sem(data.X, data.y, w)] if indicated else [])

    b = Bundle()
    _drop_note(b, data)
    coef_rows = [r for f in fits for r in _global_rows(f)]
    stat_rows = [(f.model.upper(), "fitted", f.n, f.k, f.stats.get("r2"), f.stats.get("adj_r2"),
                  f.log_likelihood, f.stats.get("aic"), f.stats.get("sic"), f.sigma2) for f in fits]
    if not indicated:
        for m in ("SLM", "SEM"):
            coef_rows.append((m, NOT_INDICATED, "", None, None, "", None, None))
            stat_rows.append((m, NOT_INDICATED, None, None, None, None, None, None, None, None))
        b.notes.append("LM lag and LM error not significant; spatial models not indicated")
    b.add_csv("model1_coefficients.csv", ["model", "status", "term", "coefficient", "std_error",
                                          "statistic_type", "statistic", "probability"], coef_rows)
    b.add_csv("model1_fit.csv", ["model", "status", "n", "k", "r2", "adj_r2", "log_likelihood",
                                 "aic", "sic", "sigma2"], stat_rows)
    b.add_csv("model1_diagnostics.csv", ["test", "mi_df", "value", "probability"], diag.rows())
    return b


# -- Models 2-4: local regression -----------------------------------------

@dataclass
class LocalRun:
    gwr: object
    mgwr: object | None
    collinearity: object


def fit_local_pair(cfg: RunConfig, X: DesignMatrix, y: np.ndarray, coords: np.ndarray,
                   kernel: AdaptiveKernel | None = None, gwr_bandwidth=None,
                   mgwr_bandwidths=None) -> LocalRun:
    """GWR (and MGWR unless disabled) on one response with shared kernel distances."""
    lc = cfg.local
    kernel = kernel or AdaptiveKernel(coords, lc.metric)
    k = gwr_bandwidth if gwr_bandwidth is not None else lc.bandwidth
    gwr = fit_gwr(X, y, coords, k=k, metric=lc.metric, alpha=lc.alpha, interval=lc.intervals,
                  kernel=kernel)
    mgwr = None
    if lc.mgwr:
        mgwr = fit_mgwr(X, y, coords, metric=lc.metric, bandwidths=mgwr_bandwidths,
                        init_bandwidth=gwr.bandwidth, alpha=lc.alpha, intervals=lc.intervals,
                        kernel=kernel)
    coll = collinearity_from_weights(X.full, kernel.weights(gwr.bandwidth), X.full_names)
    return LocalRun(gwr, mgwr, coll)


def _compare_row(label, fit):
    bw = fit.bandwidth if not hasattr(fit, "bandwidths") else ";".join(map(str, fit.bandwidths))
    s = fit.stats
    return [label, bw, s["r2"], s["adj_r2"], s["aicc"], s["aic"], s["bic"], s["rss"],
            fit.hat_trace, s["sigma2"], fit.adj_alpha, fit.critical_t, fit.n]


def _bandwidth_rows(run: LocalRun):
    g = run.gwr
    lo, hi = g.bandwidth_interval or (None, None)
    rows = [["GWR", t, g.bandwidth, None, g.adj_alpha, g.critical_t, lo, hi] for t in g.names]
    m = run.mgwr
    if m is not None:
        for j, t in enumerate(m.names):
            ci = m.covariate_inference[j] if m.covariate_inference else {}
            lo, hi = m.bandwidth_intervals[j] if m.bandwidth_intervals else (None, None)
            rows.append(["MGWR", t, m.bandwidths[j], m.enp[j], ci.get("adj_alpha"),
                         ci.get("critical_t"), lo, hi])
    return rows


def _fits(run: LocalRun):
    return [("GWR", run.gwr)] + ([("MGWR", run.mgwr)] if run.mgwr is not None else [])


def _local_columns(run: LocalRun) -> dict[str, list]:
    cols: dict[str, list] = {}
    for label, fit in _fits(run):
        m = label.lower()
        for j, t in enumerate(fit.names):
            cols[f"{m}_beta_{t}"] = fit.local_coefficients[:, j].tolist()
            cols[f"{m}_se_{t}"] = fit.local_se[:, j].tolist()
            cols[f"{m}_t_{t}"] = fit.local_t[:, j].tolist()
        cols[f"{m}_local_r2"] = fit.local_r2.tolist()
        cols[f"{m}_residual"] = fit.residuals.tolist()
    c = run.collinearity
    cols["local_cn"] = c.condition_number.tolist()
    for j, t in enumerate(c.names[1:]):
        cols[f"local_vif_{t}"] = c.local_vif[:, j].tolist()
    cols["collinearity_flag"] = c.flags.tolist()
    return cols


def _bin_rows(run: LocalRun, lead=()):
    bins = {label: bin_local_r2(fit) for label, fit in _fits(run)}
    return [[*lead, label, *counts.values()] for label, counts in bins.items()]


def _bin_header(lead=()):
    return [*lead, "model", *bin_local_r2(np.empty(0))]


def _warn_notes(bundle: Bundle, caught) -> None:
    for w in caught:
        msg = str(w.message)
        if msg not in bundle.notes:
            bundle.notes.append(msg)


def run_model2(cfg: RunConfig) -> Bundle:
    """GWR and MGWR on the configured covariates."""
    data = model_data(cfg, cfg.covariates)
    b = Bundle()
    _drop_note(b, data)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        run = fit_local_pair(cfg, data.X, data.y, data.coords)
    _warn_notes(b, caught)
    b.add_csv("model2_comparison.csv", COMPARE_HEADER, [_compare_row(l, f) for l, f in _fits(run)])
    b.add_csv("model2_bandwidths.csv", BANDWIDTH_HEADER, _bandwidth_rows(run))
    cols = _local_columns(run)
    b.add_csv("model2_local.csv", ["fips", *cols],
              ([f, *(v[i] for v in cols.values())] for i, f in enumerate(data.ds.fips)))
    b.files["model2_local.geojson"] = to_geojson(data.ds, cols)
    b.add_csv("model2_r2_bins.csv", _bin_header(), _bin_rows(run))
    return b


def run_model3(cfg: RunConfig) -> Bundle:
    """Per-group stepwise screen, then GWR and MGWR on each group's survivors.

    Groups run in name order so outputs do not depend on config key order.
    """
    columns = [c for cols in cfg.groups.values() for c in cols]
    data = model_data(cfg, columns)
    b = Bundle()
    _drop_note(b, data)
    sc = cfg.selection
    kernel = AdaptiveKernel(data.coords, cfg.local.metric)
    steps, rejected, compare, bws, bins = [], [], [], [], []
    for group, cols in sorted(cfg.groups.items()):
        sel = stepwise_forward(data.X.select(cols), data.y, sc.p_enter, sc.group_vif_cap)
        steps += [[group, s.step, s.entered, s.p_value, s.adj_r2, s.max_vif] for s in sel.step_log]
        rejected += [[group, c, r] for c, r in sel.rejected.items()]
        if not sel.selected:
            compare.append([group, "no variables selected", *[None] * len(COMPARE_HEADER)])
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            run = fit_local_pair(cfg, data.X.select(sel.selected), data.y, data.coords, kernel)
        _warn_notes(b, caught)
        compare += [[group, "fitted", *_compare_row(l, f)] for l, f in _fits(run)]
        bws += [[group, *r] for r in _bandwidth_rows(run)]
        bins += _bin_rows(run, (group,))
    b.add_csv("model3_selection.csv", ["group", "step", "entered", "p_value", "adj_r2", "max_vif"],
              steps)
    b.add_csv("model3_rejected.csv", ["group", "column", "reason"], rejected)
    b.add_csv("model3_comparison.csv", ["group", "status", *COMPARE_HEADER], compare)
    b.add_csv("model3_bandwidths.csv", ["group", *BANDWIDTH_HEADER], bws)
    b.add_csv("model3_r2_bins.csv", _bin_header(("group",)), bins)
    return b


def run_model4(cfg: RunConfig) -> Bundle:
    """GWR and MGWR per month on fixed covariates.

    Bandwidths are searched afresh each month unless ``local.pin_bandwidths``
    is set, in which case the first month's bandwidths are reused.
    """
    data = model_data(cfg, cfg.covariates)
    b = Bundle()
    _drop_note(b, data)
    kernel = AdaptiveKernel(data.coords, cfg.local.metric)
    compare, bws, bins, local = [], [], [], []
    pinned_k = pinned_bw = None
    for month, y in data.responses.items():
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            run = fit_local_pair(cfg, data.X, y, data.coords, kernel, pinned_k, pinned_bw)
        _warn_notes(b, caught)
        if cfg.local.pin_bandwidths and pinned_k is None:
            pinned_k = run.gwr.bandwidth
            pinned_bw = run.mgwr.bandwidths if run.mgwr is not None else None
        compare += [[month, *_compare_row(l, f)] for l, f in _fits(run)]
        bws += [[month, *r] for r in _bandwidth_rows(run)]
        bins += _bin_rows(run, (month,))
        for label, fit in _fits(run):
            for i, f in enumerate(data.ds.fips):
                local.append([f, month, label, fit.local_r2[i], fit.residuals[i],
                              *fit.local_coefficients[i]])
    b.add_csv("model4_months.csv", ["month", *COMPARE_HEADER], compare)
    b.add_csv("model4_bandwidths.csv", ["month", *BANDWIDTH_HEADER], bws)
    b.add_csv("model4_r2_bins.csv", _bin_header(("month",)), bins)
    b.add_csv("model4_local.csv", ["fips", "month", "model", "local_r2", "residual",
                                   *(f"beta_{t}" for t in data.X.full_names)], local)
    return b


# -- selection and importance ---------------------------------------------

def run_select(cfg: RunConfig) -> Bundle:
    """Stepwise forward screen; with groups, group-wise screens feed a pooled screen."""
    sc = cfg.selection
    columns = [c for cols in cfg.groups.values() for c in cols] if cfg.groups else cfg.covariates
    data = model_data(cfg, columns)
    b = Bundle()
    _drop_note(b, data)
    results = []
    if cfg.groups:
        groups = dict(sorted(cfg.groups.items()))
        per_group, pooled = pooled_selection(data.X, data.y, groups, sc.p_enter,
                                             sc.group_vif_cap, sc.vif_cap)
        results += list(per_group.items())
    else:
        pooled = stepwise_forward(data.X, data.y, sc.p_enter, sc.vif_cap)
    results.append(("pooled", pooled))
    b.add_csv("select_steps.csv", ["scope", "step", "entered", "p_value", "adj_r2", "max_vif"],
              [[scope, s.step, s.entered, s.p_value, s.adj_r2, s.max_vif]
               for scope, r in results for s in r.step_log])
    b.add_csv("select_rejected.csv", ["scope", "column", "reason"],
              [[scope, c, why] for scope, r in results for c, why in r.rejected.items()])
    confirm = confirm_enter(data.X.select(pooled.selected), data.y) if pooled.selected else []
    b.add_csv("select_confirm.csv", ["name", "coefficient", "vif", "t", "p"],
              [[c["name"], c["coefficient"], c["vif"], c["t"], c["p"]] for c in confirm])
    b.notes.append("selected: " + (", ".join(pooled.selected) or "none"))
    return b


def run_importance(cfg: RunConfig, n_jobs: int | None = None) -> Bundle:
    data = model_data(cfg, cfg.covariates)
    fc = cfg.forest
    forest = fit_forest(data.X, data.y, ForestConfig(fc.n_trees, fc.max_features, fc.min_leaf,
                                                     fc.bootstrap, cfg.seed), n_jobs=n_jobs)
    rep = relative_importance(forest, data.X.names)
    b = Bundle()
    _drop_note(b, data)
    b.add_csv("importance.csv", ["variable", "relative_importance", "normalized_importance"],
              rep.ranked())
    return b


RUNNERS = {
    "ingest": run_ingest, "weights": run_weights, "model1": run_model1, "model2": run_model2,
    "model3": run_model3, "model4": run_model4, "select": run_select, "importance": run_importance,
}
