"""Random-forest regression and impurity-based relative importance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.ensemble import RandomForestRegressor

from .design import DesignMatrix, as_design


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    max_features: int | None = None  # None means ceil(p / 3)
    min_leaf: int = 5
    bootstrap: bool = True
    seed: int = 0

    def resolved_max_features(self, p: int) -> int:
        m = math.ceil(p / 3) if self.max_features is None else int(self.max_features)
        if not 1 <= m <= p:
            raise ValueError(f"max_features must lie in [1, {p}], got {m}")
        return m


def _tree_seed(seed: int) -> int:
    # sklearn takes 32-bit seeds; fold the 64-bit seed through SeedSequence
    return int(np.random.SeedSequence(int(seed)).generate_state(1)[0])


def fit_forest(X: DesignMatrix | np.ndarray, y, cfg: ForestConfig = ForestConfig(),
               n_jobs: int | None = None) -> RandomForestRegressor:
    """Bagged CART regression trees; identical seeds give identical forests."""
    X = as_design(X)
    y = np.asarray(y, dtype=float).ravel()
    if cfg.n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    if y.size != X.n:
        raise ValueError(f"y has {y.size} rows but X has {X.n}")
    if X.n < 2 * cfg.min_leaf:
        raise ValueError(f"need n >= 2 * min_leaf ({2 * cfg.min_leaf}), got {X.n}")
    if not (np.all(np.isfinite(X.values)) and np.all(np.isfinite(y))):
        raise ValueError("forest inputs contain missing or non-finite values")
    forest = RandomForestRegressor(
        n_estimators=cfg.n_trees, max_features=cfg.resolved_max_features(X.p),
        min_samples_leaf=cfg.min_leaf, bootstrap=cfg.bootstrap,
        random_state=_tree_seed(cfg.seed), n_jobs=n_jobs)
    forest.fit(X.values, y)
    # threaded predict sums tree outputs in completion order; keep predictions reproducible
    forest.n_jobs = 1
    forest.feature_names_ = list(X.names)
    return forest


@dataclass(frozen=True)
class ImportanceReport:
    names: tuple[str, ...]
    relative_importance: dict[str, float]
    normalized_importance: dict[str, float]

    def ranked(self) -> list[tuple[str, float, float]]:
        order = sorted(self.names, key=lambda v: (-self.relative_importance[v], v))
        return [(v, self.relative_importance[v], self.normalized_importance[v]) for v in order]


def relative_importance(forest: RandomForestRegressor,
                        names: Sequence[str] | None = None) -> ImportanceReport:
    """Total impurity decrease per variable, as a percentage share and scaled to max 100.

    Raw decreases are summed over trees before normalizing, so trees that
    split more contribute more. A forest that never splits reports zeros.
    """
    names = tuple(names if names is not None else getattr(forest, "feature_names_", []))
    raw = np.zeros(forest.n_features_in_)
    for tree in forest.estimators_:
        raw += tree.tree_.compute_feature_importances(normalize=False)
    if len(names) != raw.size:
        raise ValueError(f"got {len(names)} names for {raw.size} variables")
    total, top = raw.sum(), raw.max()
    share = raw / total * 100.0 if total > 0 else np.zeros_like(raw)
    scaled = raw / top * 100.0 if top > 0 else np.zeros_like(raw)
    return ImportanceReport(names, dict(zip(names, share.tolist())),
                            dict(zip(names, scaled.tolist())))
