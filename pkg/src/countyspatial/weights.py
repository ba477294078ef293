"""Sparse spatial weight matrices: contiguity, distance bands, standardization."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sla
from scipy.spatial.distance import cdist

EARTH_RADIUS_KM = 6371.0088
SNAP = 1e-9
DENSE_EIGEN_LIMIT = 5000

KINDS = ("queen", "rook", "distance_band")
METRICS = ("euclidean", "arc", "manhattan")


class WeightsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Spatial weights held as a CSR matrix with construction metadata."""

    matrix: sparse.csr_matrix
    kind: str
    metric: str | None = None
    row_standardized: bool = False
    threshold: float | None = None
    ids: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        m = sparse.csr_matrix(self.matrix, dtype=float)
        m.eliminate_zeros()
        m.sort_indices()
        if m.shape[0] != m.shape[1]:
            raise WeightsError("weights must be square")
        if m.diagonal().any():
            raise WeightsError("self-weights are not allowed")
        if m.nnz and m.data.min() <= 0:
            raise WeightsError("weights must be positive")
        if self.kind not in KINDS:
            raise WeightsError(f"unknown weights kind {self.kind!r}")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    @cached_property
    def cardinalities(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    @property
    def islands(self) -> list[int]:
        return np.flatnonzero(self.cardinalities == 0).tolist()

    @property
    def s0(self) -> float:
        return float(self.matrix.sum())

    def neighbors(self, i: int) -> list[int]:
        m = self.matrix
        return m.indices[m.indptr[i]:m.indptr[i + 1]].tolist()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """All eigenvalues (complex dtype) from a dense solve; n <= 5000."""
        if self.n > DENSE_EIGEN_LIMIT:
            raise WeightsError("dense eigendecomposition limited to n <= 5000")
        try:
            return np.linalg.eigvals(self.dense())
        except np.linalg.LinAlgError as exc:
            raise WeightsError(f"eigenvalue computation failed: {exc}") from None

    def subset(self, rows: Sequence[int]) -> "WeightMatrix":
        """Restrict to ``rows`` (and the same columns), restandardizing if needed."""
        rows = np.asarray(rows, dtype=int)
        sub = self.matrix[rows][:, rows]
        sub = sparse.csr_matrix(sub)
        ids = tuple(self.ids[i] for i in rows) if self.ids else None
        if self.row_standardized:
            sub.data[:] = 1.0
            return _standardized(sub, self, ids)
        return replace(self, matrix=sub, ids=ids)


def _standardized(m: sparse.csr_matrix, like: WeightMatrix, ids=None) -> WeightMatrix:
    sums = np.asarray(m.sum(axis=1)).ravel()
    scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    out = sparse.diags(scale) @ m
    return replace(like, matrix=sparse.csr_matrix(out), row_standardized=True,
                   ids=ids if ids is not None else like.ids)


def row_standardize(w: WeightMatrix) -> WeightMatrix:
    if w.row_standardized:
        raise WeightsError("weights are already row-standardized")
    return _standardized(w.matrix.copy(), w)


def _snap(xy) -> tuple[int, int]:
    return int(round(xy[0] / SNAP)), int(round(xy[1] / SNAP))


def contiguity_weights(ds, kind: str = "queen") -> WeightMatrix:
    """First-order contiguity from shared boundary vertices (queen) or edges (rook)."""
    if kind not in ("queen", "rook"):
        raise WeightsError(f"contiguity kind must be queen or rook, got {kind!r}")
    owners: dict = defaultdict(set)
    for i, feat in enumerate(ds.features):
        for ring in feat.rings:
            keys = [_snap(p) for p in ring]
            if kind == "queen":
                for key in keys:
                    owners[key].add(i)
            else:
                for a, b in zip(keys[:-1], keys[1:]):
                    if a != b:
                        owners[frozenset((a, b))].add(i)
    pairs = set()
    for members in owners.values():
        if len(members) > 1:
            pairs.update(combinations(sorted(members), 2))
    return _from_pairs(ds.n, pairs, kind, ids=tuple(ds.fips))


def _from_pairs(n, pairs, kind, metric=None, threshold=None, ids=None, symmetric=True):
    if pairs:
        r, c = np.array(sorted(pairs)).T
        if symmetric:
            r, c = np.concatenate([r, c]), np.concatenate([c, r])
    else:
        r = c = np.array([], dtype=int)
    m = sparse.csr_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    return WeightMatrix(m, kind, metric=metric, threshold=threshold, ids=ids)


def arc_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Great-circle distances (km) between lon/lat rows of ``a`` and ``b``."""
    a = np.radians(np.atleast_2d(a))
    b = np.radians(np.atleast_2d(b))
    dlon = a[:, None, 0] - b[None, :, 0]
    dlat = a[:, None, 1] - b[None, :, 1]
    h = np.sin(dlat / 2) ** 2 + np.cos(a[:, None, 1]) * np.cos(b[None, :, 1]) * np.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def distance_matrix(coords, metric: str = "euclidean", targets=None) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    targets = coords if targets is None else np.asarray(targets, dtype=float)
    if metric == "euclidean":
        return cdist(targets, coords)
    if metric == "manhattan":
        return cdist(targets, coords, "cityblock")
    if metric == "arc":
        return arc_distance(targets, coords)
    raise WeightsError(f"unknown distance metric {metric!r}")


def distance_band_weights(ds_or_coords, metric: str = "euclidean", threshold: float = 1.0,
                          min_neighbors: int = 1) -> WeightMatrix:
    """Binary weights for centroid pairs within ``threshold``.

    Rows left with fewer than ``min_neighbors`` links are instead linked to
    their ``min_neighbors`` nearest centroids, so the result may be asymmetric.
    """
    if hasattr(ds_or_coords, "centroids"):
        coords, ids = ds_or_coords.centroids, tuple(ds_or_coords.fips)
    else:
        coords, ids = np.asarray(ds_or_coords, dtype=float), None
    n = len(coords)
    if n < 2:
        raise WeightsError("distance weights need at least two features")
    if not threshold > 0:
        raise WeightsError("distance threshold must be positive")
    if min_neighbors < 0 or min_neighbors > n - 1:
        raise WeightsError(f"min_neighbors must lie in [0, {n - 1}]")
    d = distance_matrix(coords, metric)
    np.fill_diagonal(d, np.inf)
    adj = d <= threshold
    short = np.flatnonzero(adj.sum(axis=1) < min_neighbors)
    for i in short:
        nearest = np.argsort(d[i], kind="stable")[:min_neighbors]
        adj[i] = False
        adj[i, nearest] = True
    r, c = np.nonzero(adj)
    m = sparse.csr_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    return WeightMatrix(m, "distance_band", metric=metric, threshold=float(threshold), ids=ids)


def rho_bounds(w: WeightMatrix) -> tuple[float, float]:
    """(1/smallest, 1/largest) real eigenvalue of ``w``."""
    if not w.row_standardized:
        raise WeightsError("rho_bounds expects row-standardized weights")
    if w.n <= DENSE_EIGEN_LIMIT:
        ev = w.eigenvalues
        real = ev[np.abs(ev.imag) <= 1e-10 * max(1.0, np.abs(ev).max())].real
    else:
        try:
            lo = sla.eigs(w.matrix, k=1, which="SR", return_eigenvectors=False)
            hi = sla.eigs(w.matrix, k=1, which="LR", return_eigenvectors=False)
        except sla.ArpackError as exc:
            raise WeightsError(f"eigenvalue computation failed: {exc}") from None
        real = np.concatenate([lo.real, hi.real])
    if real.size == 0 or real.min() >= 0 or real.max() <= 0:
        raise WeightsError("weights lack eigenvalues of both signs")
    return float(1.0 / real.min()), float(1.0 / real.max())


def to_gal(w: WeightMatrix, ids: Sequence[str] | None = None) -> str:
    """GAL adjacency text: a header with ``n``, then ``id count`` / neighbor-id lines."""
    ids = list(ids or w.ids or range(w.n))
    lines = [str(w.n)]
    for i in range(w.n):
        nb = w.neighbors(i)
        lines.append(f"{ids[i]} {len(nb)}")
        lines.append(" ".join(str(ids[j]) for j in nb))
    return "\n".join(lines) + "\n"


def from_gal(text: str, kind: str = "queen") -> WeightMatrix:
    lines = text.splitlines()
    if not lines:
        raise WeightsError("empty GAL document")
    header = lines[0].split()
    try:
        n = int(header[-1] if len(header) > 1 else header[0])
    except (ValueError, IndexError):
        raise WeightsError("GAL header must state n") from None
    ids, neigh = [], []
    pos = 1
    for _ in range(n):
        try:
            ident, count = lines[pos].split()[:2]
        except (IndexError, ValueError):
            raise WeightsError(f"malformed GAL record at line {pos + 1}") from None
        members = lines[pos + 1].split() if pos + 1 < len(lines) else []
        if int(count) and len(members) != int(count):
            raise WeightsError(f"GAL record for {ident} lists {len(members)} of {count} neighbours")
        ids.append(ident)
        neigh.append(members)
        pos += 2
    index = {k: i for i, k in enumerate(ids)}
    r = [index[a] for a, nb in zip(ids, neigh) for _ in nb]
    c = [index[b] for nb in neigh for b in nb]
    m = sparse.csr_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    return WeightMatrix(m, kind, ids=tuple(ids))
