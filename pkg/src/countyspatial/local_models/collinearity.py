"""Local collinearity: condition numbers, local VIF and variance-decomposition proportions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..design import DesignMatrix, as_design
from .kernels import AdaptiveKernel

CN_THRESHOLD = 30.0
VDP_THRESHOLD = 0.5


@dataclass
class LocalCollinearity:
    """Per-location diagnostics.

    ``vdp[i]`` is a components-by-columns matrix whose columns each sum to 1;
    its last row belongs to the smallest singular value. ``vdp_flag`` marks
    two or more columns with VDP > 0.5 on that component at a location whose
    condition number also exceeds the threshold. ``flags`` is the
    union of the CN, VDP and zero-variance flags.
    """

    names: tuple[str, ...]
    condition_number: np.ndarray
    local_vif: np.ndarray
    vdp: np.ndarray
    cn_flag: np.ndarray
    vdp_flag: np.ndarray
    zero_variance: np.ndarray

    @property
    def flags(self) -> np.ndarray:
        return self.cn_flag | self.vdp_flag | self.zero_variance


def _local_vif(Z: np.ndarray, w: np.ndarray) -> np.ndarray:
    p = Z.shape[1]
    if p == 1:
        return np.ones(1)
    wn = w / w.sum()
    mu = wn @ Z
    C = (Z - mu).T @ ((Z - mu) * wn[:, None])
    sd = np.sqrt(np.diag(C))
    if np.any(sd == 0):
        return np.full(p, np.inf)
    R = C / np.outer(sd, sd)
    try:
        return np.diag(np.linalg.inv(R))
    except np.linalg.LinAlgError:
        return np.full(p, np.inf)


def collinearity_from_weights(A: np.ndarray, K: np.ndarray,
                              names: tuple[str, ...] | None = None) -> LocalCollinearity:
    """Diagnostics for design ``A`` (intercept included) under kernel rows ``K``."""
    n, m = A.shape
    names = names or tuple(f"x{j}" for j in range(m))
    cn = np.empty(n)
    vif = np.empty((n, m - 1))
    vdp = np.empty((n, m, m))
    zero = np.zeros(n, dtype=bool)
    for i in range(n):
        w = K[i]
        keep = w > 0
        Z = A[keep] * np.sqrt(w[keep])[:, None]
        norms = np.linalg.norm(Z, axis=0)
        vif[i] = _local_vif(A[keep, 1:], w[keep]) if m > 1 else np.empty(0)
        if np.any(norms == 0) or (m > 1 and np.any(np.ptp(A[keep, 1:], axis=0) == 0)):
            zero[i] = True
        if np.any(norms == 0):
            cn[i] = np.inf
            vdp[i] = np.nan
            continue
        _, s, vt = np.linalg.svd(Z / norms, full_matrices=False)
        cn[i] = s[0] / s[-1] if s[-1] > 0 else np.inf
        with np.errstate(divide="ignore"):
            phi = vt.T ** 2 / s[None, :] ** 2
        vdp[i] = (phi / phi.sum(axis=1, keepdims=True)).T
    cn_flag = cn > CN_THRESHOLD
    # high proportions only signal a dependency when the component is also weak
    vdp_flag = cn_flag & ((np.nan_to_num(vdp[:, -1, :]) > VDP_THRESHOLD).sum(axis=1) >= 2)
    return LocalCollinearity(tuple(names), cn, vif, vdp, cn_flag, vdp_flag, zero)


def local_collinearity(X: DesignMatrix | np.ndarray, coords, k: int,
                       metric: str = "euclidean") -> LocalCollinearity:
    X = as_design(X)
    kernel = AdaptiveKernel(coords, metric)
    return collinearity_from_weights(X.full, kernel.weights(k), X.full_names)
