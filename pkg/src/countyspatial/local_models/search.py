"""Integer bandwidth search on a continuous golden-section relaxation."""

from __future__ import annotations

import math
from typing import Callable

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
POLISH_PATIENCE = 30


class BandwidthSearchError(ValueError):
    pass


class CachedObjective:
    """Memoizes an integer objective; non-finite values are stored as +inf."""

    def __init__(self, func: Callable[[int], float]):
        self.func = func
        self.values: dict[int, float] = {}

    def __call__(self, k: int) -> float:
        k = int(k)
        if k not in self.values:
            v = float(self.func(k))
            self.values[k] = v if math.isfinite(v) else math.inf
        return self.values[k]

    def best(self) -> tuple[int, float]:
        k = min(self.values, key=lambda j: (self.values[j], j))
        return k, self.values[k]


def golden_search_bandwidth(objective: Callable[[int], float], k_min: int, k_max: int,
                            patience: int = POLISH_PATIENCE) -> int:
    """Minimize ``objective`` over integers in ``[k_min, k_max]``.

    The golden-section bracket moves over real values, evaluating at the
    rounded interior points, until it is narrower than one. Every integer
    left in the final bracket is then evaluated, and the best point is
    polished by stepping outward in both directions until ``patience``
    consecutive steps fail to improve. The smallest value wins, ties going
    to the smaller bandwidth.
    """
    k_min, k_max = int(k_min), int(k_max)
    if k_min >= k_max:
        if k_min == k_max:
            return k_min
        raise BandwidthSearchError(f"empty bandwidth range [{k_min}, {k_max}]")
    f = objective if isinstance(objective, CachedObjective) else CachedObjective(objective)
    a, b = float(k_min), float(k_max)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(round(c)), f(round(d))
    while b - a >= 1.0:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(round(c))
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(round(d))
    for k in range(max(k_min, math.floor(a)), min(k_max, math.ceil(b)) + 1):
        f(k)
    k, value = f.best()
    if math.isinf(value):
        raise BandwidthSearchError("objective is not finite anywhere in the bandwidth range")
    for step in (-1, 1):
        best_k, best_v, miss = k, value, 0
        j = best_k + step
        while k_min <= j <= k_max and miss < patience:
            v = f(j)
            if v < best_v or (v == best_v and j < best_k):
                best_k, best_v, miss = j, v, 0
            else:
                miss += 1
            j += step
    return f.best()[0]


def bandwidth_interval(objective: Callable[[int], float], k_star: int, k_min: int, k_max: int,
                       delta: float = 2.0) -> tuple[int, int]:
    """Widest contiguous integer run around ``k_star`` within ``delta`` of its value."""
    f = objective if isinstance(objective, CachedObjective) else CachedObjective(objective)
    limit = f(k_star) + delta
    lo = k_star
    while lo > k_min and f(lo - 1) <= limit:
        lo -= 1
    hi = k_star
    while hi < k_max and f(hi + 1) <= limit:
        hi += 1
    return lo, hi
