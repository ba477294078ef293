"""Adaptive bisquare kernels."""

from __future__ import annotations

import numpy as np

from ..weights import distance_matrix


def rowdot(K: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``K @ v`` with a per-row reduction that does not depend on row position.

    BLAS gemv may round a row differently depending on where it sits in the
    matrix, which would make local fits depend on location order.
    """
    return np.einsum("ij,j->i", K, v)


def bisquare_weights(distances, k: int) -> np.ndarray:
    """Bisquare weights with the bandwidth set to the ``k``-th nearest distance.

    The focal point (distance 0) counts as the first neighbour, so the
    ``k``-th nearest point itself receives weight 0.
    """
    d = np.asarray(distances, dtype=float)
    k = int(k)
    if k < 1:
        raise ValueError(f"bandwidth must be at least 1 neighbour, got {k}")
    if k > d.size:
        raise ValueError(f"bandwidth {k} exceeds the number of locations {d.size}")
    b = np.partition(d, k - 1)[k - 1]
    if b == 0.0:
        return (d == 0.0).astype(float)
    z = d / b
    return np.where(z < 1.0, (1.0 - z ** 2) ** 2, 0.0)


class AdaptiveKernel:
    """Bisquare weights for every focal location, reusing one distance matrix."""

    def __init__(self, coords, metric: str = "euclidean"):
        self.coords = np.asarray(coords, dtype=float)
        self.metric = metric
        self.distances = distance_matrix(self.coords, metric)
        self._sorted = np.sort(self.distances, axis=1)

    @property
    def n(self) -> int:
        return self.distances.shape[0]

    def bandwidths(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.n:
            raise ValueError(f"bandwidth {k} outside [1, {self.n}]")
        return self._sorted[:, int(k) - 1]

    def weights(self, k: int) -> np.ndarray:
        """``(n, n)`` matrix whose row ``i`` holds the kernel centred on ``i``."""
        b = self.bandwidths(k)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(b > 0, self.distances / b, np.where(self.distances == 0, 0.0, np.inf))
        return np.where(z < 1.0, (1.0 - z ** 2) ** 2, 0.0)
