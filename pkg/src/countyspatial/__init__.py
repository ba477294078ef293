"""Spatial regression toolkit for county-level attribute data.

Global OLS / spatial lag / spatial error models with dependence diagnostics,
GWR and multiscale GWR, VIF-gated stepwise selection and random-forest
relative importance, orchestrated by a batch CLI.
"""

__version__ = "0.1.0"

from .dataset import SpatialDataset, load_dataset
from .design import DesignMatrix
from .global_models import dependence_diagnostics, fit_ols, fit_sem, fit_slm
from .importance import ForestConfig, fit_forest, relative_importance
from .local_models import fit_gwr, fit_mgwr
from .selection import confirm_enter, stepwise_forward, vif
from .weights import WeightMatrix, contiguity_weights, distance_band_weights, row_standardize

__all__ = [
    "DesignMatrix", "ForestConfig", "SpatialDataset", "WeightMatrix", "__version__",
    "confirm_enter", "contiguity_weights", "dependence_diagnostics", "distance_band_weights",
    "fit_forest", "fit_gwr", "fit_mgwr", "fit_ols", "fit_sem", "fit_slm", "load_dataset",
    "relative_importance", "row_standardize", "stepwise_forward", "vif",
]
