"""County feature tables: FIPS joins, temporal aggregation and IDW/zonal transfer.

Geometry is kept as plain lon/lat rings (``(m, 2)`` float arrays, closed).
A feature may hold several polygons, each a list of rings whose first ring
is the exterior.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FIPS_PROPERTIES = ("FIPS", "fips", "GEOID", "geoid", "countyFIPS", "COUNTYFIPS")
MISSING_TOKENS = {"", "na", "nan", "null", "none", "n/a"}
IDW_EXACT_HIT = 1e-12


class DatasetError(ValueError):
    pass


class NoDataWarning(UserWarning):
    """A county has no observations inside the requested period."""


class NegativeTotalWarning(UserWarning):
    """Daily revisions drove a cumulative total below zero."""


def normalize_fips(value) -> str:
    """Return the 5-character zero-padded FIPS code for ``value``.

    >>> normalize_fips("1001"), normalize_fips(6037), normalize_fips("01001")
    ('01001', '06037', '01001')
    """
    if isinstance(value, bool):
        raise DatasetError(f"invalid FIPS code {value!r}")
    if isinstance(value, (int, np.integer)):
        text = str(int(value))
    elif isinstance(value, (float, np.floating)):
        if not float(value).is_integer():
            raise DatasetError(f"invalid FIPS code {value!r}")
        text = str(int(value))
    else:
        text = str(value).strip()
        if text.endswith(".0") and text[:-2].isdigit():
            text = text[:-2]
    if not text or not text.isdigit() or not text.isascii():
        raise DatasetError(f"invalid FIPS code {value!r}: expected decimal digits")
    if len(text) > 5:
        raise DatasetError(f"invalid FIPS code {value!r}: more than 5 digits")
    return text.zfill(5)


# -- geometry ---------------------------------------------------------------

def _ring_area_centroid(ring: np.ndarray) -> tuple[float, float, float]:
    x, y = ring[:, 0], ring[:, 1]
    cross = x[:-1] * y[1:] - x[1:] * y[:-1]
    area = cross.sum() / 2.0
    if area == 0.0:
        return 0.0, float(x.mean()), float(y.mean())
    cx = ((x[:-1] + x[1:]) * cross).sum() / (6.0 * area)
    cy = ((y[:-1] + y[1:]) * cross).sum() / (6.0 * area)
    return abs(area), cx, cy


def polygon_centroid(polygons: Sequence[Sequence[np.ndarray]]) -> tuple[float, float]:
    """Area-weighted centroid of a (multi)polygon; holes subtract."""
    total = sx = sy = 0.0
    for rings in polygons:
        for k, ring in enumerate(rings):
            a, cx, cy = _ring_area_centroid(ring)
            if k > 0:
                a = -a
            total += a
            sx += a * cx
            sy += a * cy
    if total == 0.0:
        pts = np.vstack([r[:-1] for rings in polygons for r in rings])
        return float(pts[:, 0].mean()), float(pts[:, 1].mean())
    return sx / total, sy / total


def _as_ring(coords) -> np.ndarray:
    ring = np.asarray(coords, dtype=float)
    if ring.ndim != 2 or ring.shape[1] < 2:
        raise DatasetError("ring coordinates must be lon/lat pairs")
    ring = ring[:, :2]
    if not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[:1]])
    if len(ring) < 4:
        raise DatasetError("polygon ring needs at least 4 vertices (first == last)")
    return ring


def _parse_geometry(geom: dict) -> list[list[np.ndarray]]:
    if geom is None:
        raise DatasetError("feature without geometry")
    kind = geom.get("type")
    if kind == "Polygon":
        parts = [geom["coordinates"]]
    elif kind == "MultiPolygon":
        parts = geom["coordinates"]
    else:
        raise DatasetError(f"unsupported geometry type {kind!r}")
    return [[_as_ring(r) for r in part] for part in parts]


# -- core types -------------------------------------------------------------

@dataclass(frozen=True)
class Feature:
    fips: str
    polygons: tuple
    centroid: tuple[float, float]

    @property
    def rings(self) -> list[np.ndarray]:
        return [r for rings in self.polygons for r in rings]


@dataclass(frozen=True)
class JoinReport:
    unmatched_attributes: tuple[str, ...] = ()
    unmatched_geometry: tuple[str, ...] = ()


@dataclass(frozen=True)
class SpatialDataset:
    """Features in canonical (sorted FIPS) order with an aligned attribute table."""

    features: tuple[Feature, ...]
    columns: tuple[str, ...]
    attributes: np.ndarray
    join_report: JoinReport = field(default_factory=JoinReport)

    def __post_init__(self):
        attrs = np.asarray(self.attributes, dtype=float).reshape(len(self.features), len(self.columns))
        if len({f.fips for f in self.features}) != len(self.features):
            raise DatasetError("duplicate FIPS codes in dataset")
        if len(set(self.columns)) != len(self.columns):
            raise DatasetError("duplicate attribute column names")
        attrs.setflags(write=False)
        object.__setattr__(self, "attributes", attrs)

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def fips(self) -> list[str]:
        return [f.fips for f in self.features]

    @property
    def centroids(self) -> np.ndarray:
        return np.array([f.centroid for f in self.features], dtype=float)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.attributes[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"unknown attribute column {name!r}") from None

    def with_column(self, name: str, values: Sequence[float]) -> "SpatialDataset":
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n,):
            raise DatasetError(f"column {name!r} needs {self.n} values")
        if name in self.columns:
            attrs = self.attributes.copy()
            attrs[:, self.columns.index(name)] = values
            return SpatialDataset(self.features, self.columns, attrs, self.join_report)
        return SpatialDataset(self.features, self.columns + (name,),
                              np.column_stack([self.attributes, values]), self.join_report)

    def subset(self, rows: Sequence[int]) -> "SpatialDataset":
        rows = np.asarray(rows, dtype=int)
        return SpatialDataset(tuple(self.features[i] for i in rows), self.columns,
                              self.attributes[rows], self.join_report)

    def complete_rows(self, names: Iterable[str]) -> np.ndarray:
        """Boolean mask of rows with no missing value in ``names``."""
        idx = [self.columns.index(c) for c in names]
        return ~np.isnan(self.attributes[:, idx]).any(axis=1)


def _read_geometry(geometry_source: str, fips_property: str | None):
    try:
        doc = json.loads(geometry_source)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"geometry is not valid JSON: {exc}") from None
    if doc.get("type") != "FeatureCollection":
        raise DatasetError("geometry must be a GeoJSON FeatureCollection")
    keys = (fips_property,) if fips_property else FIPS_PROPERTIES
    out: dict[str, Feature] = {}
    for k, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        raw = next((props[key] for key in keys if key in props), None)
        if raw is None:
            raise DatasetError(f"feature {k} has no FIPS property (looked for {', '.join(keys)})")
        fips = normalize_fips(raw)
        if fips in out:
            raise DatasetError(f"duplicate FIPS {fips} in geometry")
        polygons = _parse_geometry(feat.get("geometry"))
        out[fips] = Feature(fips, tuple(tuple(p) for p in polygons), polygon_centroid(polygons))
    return out


def _parse_cell(text: str, line: int, column: str) -> float:
    if text.strip().lower() in MISSING_TOKENS:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"non-numeric value {text!r} at line {line}, column {column!r}") from None
    if math.isinf(value):
        raise DatasetError(f"infinite value at line {line}, column {column!r}")
    return value


def read_attribute_csv(attribute_source: str, fips_column: str,
                       columns: Sequence[str] | None = None) -> tuple[list[str], dict[str, list[float]]]:
    """Parse an attribute CSV into (column names, {fips: row values})."""
    reader = csv.DictReader(io.StringIO(attribute_source))
    if reader.fieldnames is None:
        raise DatasetError("attribute CSV is empty")
    header = [h.strip() for h in reader.fieldnames]
    reader.fieldnames = header
    if fips_column not in header:
        raise DatasetError(f"attribute CSV has no column {fips_column!r}")
    if columns is None:
        columns = [h for h in header if h != fips_column]
    else:
        missing = [c for c in columns if c not in header]
        if missing:
            raise DatasetError(f"attribute CSV lacks columns: {', '.join(missing)}")
        columns = list(columns)
    rows: dict[str, list[float]] = {}
    for line, rec in enumerate(reader, start=2):
        fips = normalize_fips(rec[fips_column])
        if fips in rows:
            raise DatasetError(f"duplicate FIPS {fips} in attribute CSV (line {line})")
        rows[fips] = [_parse_cell(rec[c] or "", line, c) for c in columns]
    return columns, rows


def load_dataset(geometry_source: str, attribute_source: str, fips_column: str = "FIPS",
                 columns: Sequence[str] | None = None,
                 fips_property: str | None = None) -> SpatialDataset:
    """Inner-join GeoJSON features and CSV attribute rows on normalized FIPS.

    Unmatched codes on either side are kept in ``join_report``.
    """
    geoms = _read_geometry(geometry_source, fips_property)
    names, rows = read_attribute_csv(attribute_source, fips_column, columns)
    matched = sorted(set(geoms) & set(rows))
    if not matched:
        raise DatasetError("no FIPS codes matched between geometry and attributes")
    report = JoinReport(tuple(sorted(set(rows) - set(geoms))),
                        tuple(sorted(set(geoms) - set(rows))))
    attrs = np.array([rows[f] for f in matched], dtype=float).reshape(len(matched), len(names))
    return SpatialDataset(tuple(geoms[f] for f in matched), tuple(names), attrs, report)


def join_attributes(ds: SpatialDataset, attribute_source: str, fips_column: str = "FIPS",
                    columns: Sequence[str] | None = None) -> SpatialDataset:
    """Left-join another attribute CSV onto ``ds``; absent counties get NaN."""
    names, rows = read_attribute_csv(attribute_source, fips_column, columns)
    clash = set(names) & set(ds.columns)
    if clash:
        raise DatasetError(f"attribute columns already present: {', '.join(sorted(clash))}")
    blank = [math.nan] * len(names)
    extra = np.array([rows.get(f, blank) for f in ds.fips], dtype=float).reshape(ds.n, len(names))
    return SpatialDataset(ds.features, ds.columns + tuple(names),
                          np.column_stack([ds.attributes, extra]), ds.join_report)


def _fmt(value: float):
    return None if math.isnan(value) else float(value)


def to_geojson(ds: SpatialDataset, extra: dict[str, Sequence] | None = None) -> str:
    """Serialize features with their attributes (and ``extra`` columns) as properties."""
    extra = extra or {}
    feats = []
    for i, feat in enumerate(ds.features):
        props = {"FIPS": feat.fips}
        props.update({c: _fmt(v) for c, v in zip(ds.columns, ds.attributes[i])})
        for name, values in extra.items():
            v = values[i]
            props[name] = _fmt(float(v)) if isinstance(v, (float, np.floating)) else v
        coords = [[r.tolist() for r in rings] for rings in feat.polygons]
        geom = ({"type": "Polygon", "coordinates": coords[0]} if len(coords) == 1
                else {"type": "MultiPolygon", "coordinates": coords})
        feats.append({"type": "Feature", "properties": props, "geometry": geom})
    return json.dumps({"type": "FeatureCollection", "features": feats}, separators=(",", ":"))


# -- temporal aggregation ---------------------------------------------------

@dataclass(frozen=True)
class DailySeries:
    fips: str
    dates: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        counts = np.asarray(self.counts, dtype=float)
        if dates.shape != counts.shape or dates.ndim != 1:
            raise DatasetError("dates and counts must be 1-D and of equal length")
        if len(dates) and np.any(np.diff(dates).astype(int) <= 0):
            raise DatasetError(f"dates for {self.fips} are not strictly increasing")
        object.__setattr__(self, "fips", normalize_fips(self.fips))
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "counts", counts)


def _day(value) -> np.datetime64:
    if isinstance(value, str):
        value = dt.date.fromisoformat(value)
    return np.datetime64(value, "D")


def cumulative_total(series: DailySeries, through) -> float:
    through = _day(through)
    if len(series.dates) == 0 or through < series.dates[0]:
        raise DatasetError(f"{through} precedes the start of the series for {series.fips}")
    total = float(series.counts[series.dates <= through].sum())
    if total < 0:
        warnings.warn(f"negative cumulative total {total} for {series.fips}", NegativeTotalWarning,
                      stacklevel=2)
    return total


def monthly_total(series: DailySeries, year: int, month: int) -> float:
    if not 1 <= month <= 12:
        raise DatasetError(f"month must be 1..12, got {month}")
    start = np.datetime64(f"{year:04d}-{month:02d}", "M")
    in_month = series.dates.astype("datetime64[M]") == start
    if not in_month.any():
        warnings.warn(f"{series.fips} has no data for {year:04d}-{month:02d}", NoDataWarning,
                      stacklevel=2)
        return 0.0
    return float(series.counts[in_month].sum())


def per_capita(count: float, population: float, scale: float = 10000.0) -> float:
    if not population > 0:
        raise DatasetError(f"population must be positive, got {population}")
    return count / population * scale


def read_daily_csv(source: str, value_column: str, fips_column: str = "fips",
                   date_column: str = "date") -> dict[str, DailySeries]:
    """Parse long-format daily counts (one row per county and day)."""
    reader = csv.DictReader(io.StringIO(source))
    if reader.fieldnames is None:
        raise DatasetError("daily-count CSV is empty")
    for col in (fips_column, date_column, value_column):
        if col not in reader.fieldnames:
            raise DatasetError(f"daily-count CSV has no column {col!r}")
    acc: dict[str, list[tuple[np.datetime64, float]]] = {}
    for line, rec in enumerate(reader, start=2):
        try:
            day = _day(rec[date_column].strip())
        except ValueError:
            raise DatasetError(f"bad date {rec[date_column]!r} at line {line}") from None
        value = _parse_cell(rec[value_column] or "", line, value_column)
        if math.isnan(value):
            continue
        acc.setdefault(normalize_fips(rec[fips_column]), []).append((day, value))
    out = {}
    for fips, pairs in acc.items():
        pairs.sort(key=lambda t: t[0])
        out[fips] = DailySeries(fips, [d for d, _ in pairs], [v for _, v in pairs])
    return out


# -- point samples to county means -----------------------------------------

@dataclass(frozen=True)
class PointSamples:
    lon: np.ndarray
    lat: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float).ravel() for a in (self.lon, self.lat, self.values)]
        if len({a.size for a in arrs}) != 1:
            raise DatasetError("point samples need equal-length lon, lat and values")
        if arrs[0].size == 0:
            raise DatasetError("point samples are empty")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise DatasetError("point samples contain non-finite values")
        for name, a in zip(("lon", "lat", "values"), arrs):
            object.__setattr__(self, name, a)

    @classmethod
    def from_csv(cls, source: str, value_column: str = "value") -> "PointSamples":
        reader = csv.DictReader(io.StringIO(source))
        rows = [(float(r["lon"]), float(r["lat"]), float(r[value_column])) for r in reader]
        if not rows:
            raise DatasetError("point-sample CSV has no rows")
        lon, lat, val = zip(*rows)
        return cls(lon, lat, val)


def idw_interpolate(samples: PointSamples, targets, power: float = 2.0) -> np.ndarray:
    """Inverse-distance weighted values at ``targets`` (``(m, 2)`` lon/lat)."""
    if not power > 0:
        raise DatasetError("IDW power must be positive")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    dx = targets[:, 0, None] - samples.lon[None, :]
    dy = targets[:, 1, None] - samples.lat[None, :]
    d = np.hypot(dx, dy)
    hit = d < IDW_EXACT_HIT
    w = np.power(d, -power, out=np.zeros_like(d), where=~hit)
    with np.errstate(invalid="ignore"):
        # rows made only of exact hits are 0/0 here and overwritten below
        out = (w @ samples.values) / w.sum(axis=1)
    rows = hit.any(axis=1)
    if rows.any():
        out[rows] = samples.values[hit[rows].argmax(axis=1)]
    return out


@dataclass(frozen=True)
class GridSurface:
    """Values on a regular grid; ``values[r, c]`` sits at ``(x0 + c*dx, y0 + r*dy)``."""

    x0: float
    y0: float
    dx: float
    dy: float
    values: np.ndarray

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = np.shape(self.values)
        xs = self.x0 + self.dx * np.arange(nx)
        ys = self.y0 + self.dy * np.arange(ny)
        return np.meshgrid(xs, ys)

    @classmethod
    def covering(cls, bounds: tuple[float, float, float, float], cell: float) -> "GridSurface":
        xmin, ymin, xmax, ymax = bounds
        nx = max(1, int(math.ceil((xmax - xmin) / cell)))
        ny = max(1, int(math.ceil((ymax - ymin) / cell)))
        return cls(xmin + cell / 2, ymin + cell / 2, cell, cell, np.zeros((ny, nx)))


def interpolate_grid(samples: PointSamples, grid: GridSurface, power: float = 2.0) -> GridSurface:
    gx, gy = grid.centers()
    vals = idw_interpolate(samples, np.column_stack([gx.ravel(), gy.ravel()]), power)
    return GridSurface(grid.x0, grid.y0, grid.dx, grid.dy, vals.reshape(gx.shape))


def points_in_rings(px: np.ndarray, py: np.ndarray, rings: Sequence[np.ndarray]) -> np.ndarray:
    """Even-odd containment of points in the union of ``rings``."""
    inside = np.zeros(np.shape(px), dtype=bool)
    for ring in rings:
        x1, y1 = ring[:-1, 0], ring[:-1, 1]
        x2, y2 = ring[1:, 0], ring[1:, 1]
        for a, b, c, d in zip(x1, y1, x2, y2):
            if b == d:
                continue
            crosses = (b > py) != (d > py)
            xint = (c - a) * (py - b) / (d - b) + a
            inside ^= crosses & (px < xint)
    return inside


def zonal_mean(surface: GridSurface, rings: Sequence[np.ndarray]) -> float:
    """Mean of grid values whose cell centers fall inside the polygon."""
    gx, gy = surface.centers()
    mask = points_in_rings(gx, gy, [np.asarray(r, float) for r in rings])
    if not mask.any():
        raise DatasetError("no grid cell centre falls inside the polygon; use a finer grid")
    return float(np.asarray(surface.values)[mask].mean())


def dataset_bounds(ds: SpatialDataset) -> tuple[float, float, float, float]:
    pts = np.vstack([r for f in ds.features for r in f.rings])
    return float(pts[:, 0].min()), float(pts[:, 1].min()), float(pts[:, 0].max()), float(pts[:, 1].max())
