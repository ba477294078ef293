"""Local regression: GWR, MGWR, bandwidth search and local diagnostics."""

from .collinearity import LocalCollinearity, collinearity_from_weights, local_collinearity
from .gwr import (R2_BIN_EDGES, GwrFit, LocalModelError, bin_local_r2, corrected_inference,
                  fit_gwr)
from .kernels import AdaptiveKernel, bisquare_weights
from .mgwr import ConvergenceWarning, MgwrFit, fit_mgwr
from .search import BandwidthSearchError, bandwidth_interval, golden_search_bandwidth

__all__ = [
    "AdaptiveKernel", "BandwidthSearchError", "ConvergenceWarning", "GwrFit", "LocalCollinearity",
    "LocalModelError", "MgwrFit", "R2_BIN_EDGES", "bandwidth_interval", "bin_local_r2",
    "bisquare_weights", "collinearity_from_weights", "corrected_inference", "fit_gwr", "fit_mgwr",
    "golden_search_bandwidth", "local_collinearity",
]
