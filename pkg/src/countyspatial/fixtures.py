"""Synthetic lattice fixtures with known spatial parameters.

The bundled ``fixtures/`` directory is produced by :func:`write_lattice_fixture`;
the generators here are also used directly by the test suite.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
from pathlib import Path

import numpy as np

from .dataset import Feature, SpatialDataset, polygon_centroid

ORIGIN = (-100.0, 35.0)
CELL = 0.5
MONTHS = ((2020, 3), (2020, 4), (2020, 5), (2020, 6), (2020, 7))
START, END = dt.date(2020, 1, 22), dt.date(2020, 7, 26)


def lattice_fips(i: int) -> str:
    # leading zero so unpadded spellings in the fixture exercise normalization
    return f"{1001 + i:05d}"


def lattice_dataset(nx: int, ny: int | None = None, cell: float = CELL,
                    origin: tuple[float, float] = ORIGIN) -> SpatialDataset:
    """``nx`` by ``ny`` grid of square counties, row-major from the south-west."""
    ny = nx if ny is None else ny
    feats = []
    for r in range(ny):
        for c in range(nx):
            x0, y0 = origin[0] + c * cell, origin[1] + r * cell
            ring = np.array([[x0, y0], [x0 + cell, y0], [x0 + cell, y0 + cell],
                             [x0, y0 + cell], [x0, y0]])
            polys = ((ring,),)
            feats.append(Feature(lattice_fips(r * nx + c), polys, polygon_centroid(polys)))
    feats.sort(key=lambda f: f.fips)
    return SpatialDataset(tuple(feats), (), np.zeros((len(feats), 0)))


def grid_coords(nx: int, ny: int | None = None) -> np.ndarray:
    """Integer (u, v) coordinates in the same order as :func:`lattice_dataset`."""
    ny = nx if ny is None else ny
    v, u = np.divmod(np.arange(nx * ny), nx)
    return np.column_stack([u, v]).astype(float)


def simulate_lag(w, X, beta, rho, rng, sigma=1.0):
    """Draw y = (I - rho W)^-1 (X beta + e) with a leading intercept in ``beta``."""
    n = w.n
    A = np.column_stack([np.ones(n), X])
    e = rng.normal(0.0, sigma, n)
    return np.linalg.solve(np.eye(n) - rho * w.dense(), A @ beta + e)


def simulate_error(w, X, beta, lam, rng, sigma=1.0):
    """Draw y = X beta + u with u = (I - lam W)^-1 v."""
    n = w.n
    A = np.column_stack([np.ones(n), X])
    u = np.linalg.solve(np.eye(n) - lam * w.dense(), rng.normal(0.0, sigma, n))
    return A @ beta + u


def mixed_surfaces(nx: int = 15, seed: int = 0, sigma: float = 0.5):
    """One spatially constant and one rapidly varying coefficient on a grid.

    Returns ``(coords, X, y, beta)`` where ``beta`` is ``(n, 3)`` (intercept,
    constant-coefficient covariate, varying-coefficient covariate).
    """
    rng = np.random.default_rng(seed)
    coords = grid_coords(nx)
    u, v = coords[:, 0], coords[:, 1]
    n = len(coords)
    X = rng.normal(size=(n, 2))
    b0 = np.full(n, 3.0)
    b1 = np.full(n, 1.0)
    b2 = 1.0 + 2.0 * np.sin(np.pi * u / 4.0) * np.cos(np.pi * v / 4.0)
    beta = np.column_stack([b0, b1, b2])
    y = beta[:, 0] + (X * beta[:, 1:]).sum(axis=1) + rng.normal(0.0, sigma, n)
    return coords, X, y, beta


# -- bundled on-disk fixture ------------------------------------------------

def _geojson(ds: SpatialDataset) -> str:
    feats = [{"type": "Feature", "properties": {"FIPS": f.fips},
              "geometry": {"type": "Polygon", "coordinates": [f.rings[0].tolist()]}}
             for f in ds.features]
    return json.dumps({"type": "FeatureCollection", "features": feats}, indent=1) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


def _days():
    d = START
    while d <= END:
        yield d
        d += dt.timedelta(days=1)


def build_lattice_fixture(nx: int = 12, seed: int = 20200726) -> dict[str, str]:
    """Text contents of the bundled fixture files, keyed by file name.

    Cases follow a spatial lag process (rho = 0.5) in four covariates plus two
    pure-noise candidates; deaths follow independent errors. Daily counts
    spread each county's monthly share evenly across the month's days.
    """
    from .weights import contiguity_weights, row_standardize

    rng = np.random.default_rng(seed)
    ds = lattice_dataset(nx)
    n = ds.n
    w = row_standardize(contiguity_weights(ds, "rook"))
    u, v = (ds.centroids - ds.centroids.min(axis=0)).T / CELL
    pop = np.round(rng.uniform(20_000, 200_000, n))
    cov = {
        "ARSON": rng.gamma(2.0, 2.0, n),
        "MHHInc": rng.normal(55.0, 8.0, n),
        "HBACM": rng.gamma(3.0, 1.5, n) + 0.2 * u,
        "DomMig": rng.normal(0.0, 2.0, n),
        "NoiseA": rng.normal(0.0, 1.0, n),
        "NoiseB": rng.normal(0.0, 1.0, n),
    }
    cov["MHHIncPer"] = cov["MHHInc"] / 55.0 * 100.0 + rng.normal(0.0, 6.0, n)
    mean = (40.0 + 3.0 * cov["ARSON"] + 0.5 * cov["MHHInc"] + (1.0 + 0.15 * v) * cov["HBACM"]
            - 2.0 * cov["DomMig"])
    cases = np.linalg.solve(np.eye(n) - 0.5 * w.dense(), mean + rng.normal(0.0, 4.0, n))
    deaths = 5.0 + 0.4 * cov["ARSON"] + 0.05 * cov["MHHInc"] - 0.3 * cov["DomMig"] + rng.normal(0, 1.0, n)
    cases, deaths = np.maximum(cases, 1.0), np.maximum(deaths, 0.5)

    shares = np.array([0.05, 0.15, 0.2, 0.25, 0.35])
    month_case = cases[:, None] * shares[None, :]
    month_case *= np.exp(0.3 * np.sin(np.pi * (u[:, None] + v[:, None]) / nx * np.arange(1, 6)[None, :]))
    month_case *= cases[:, None] / month_case.sum(axis=1, keepdims=True)
    month_death = deaths[:, None] * shares[None, :]

    days = list(_days())
    daily = []
    for i, fips in enumerate(ds.fips):
        for d in days:
            if (d.year, d.month) in MONTHS:
                m = MONTHS.index((d.year, d.month))
                ndays = (dt.date(d.year + d.month // 12, d.month % 12 + 1, 1) - dt.date(d.year, d.month, 1)).days
                if d.month == END.month:
                    ndays = END.day
                c, dd = month_case[i, m] / ndays, month_death[i, m] / ndays
            else:
                c = dd = 0.0
            daily.append((fips, d.isoformat(), f"{c:.6f}", f"{dd:.6f}"))

    names = ["ARSON", "MHHInc", "MHHIncPer", "HBACM", "DomMig", "NoiseA", "NoiseB", "POP"]
    cols = dict(cov, POP=pop)
    attr_rows = [[f.lstrip("0") if i % 2 else f] + [f"{cols[c][i]:.6f}" for c in names]
                 for i, f in enumerate(ds.fips)]
    points = np.column_stack([rng.uniform(u.min(), u.max() + 1, 60) * CELL + ORIGIN[0],
                              rng.uniform(v.min(), v.max() + 1, 60) * CELL + ORIGIN[1]])
    pm = 8.0 + 0.3 * (points[:, 0] - ORIGIN[0]) + rng.normal(0, 0.2, 60)
    return {
        "counties.geojson": _geojson(ds),
        "attributes.csv": _csv(["FIPS"] + names, attr_rows),
        "daily.csv": _csv(["fips", "date", "cases", "deaths"], daily),
        "pm25.csv": _csv(["lon", "lat", "value"],
                         [(f"{a:.6f}", f"{b:.6f}", f"{c:.6f}") for (a, b), c in zip(points, pm)]),
    }


def write_lattice_fixture(out_dir: str | Path, nx: int = 12, seed: int = 20200726) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in build_lattice_fixture(nx, seed).items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written
