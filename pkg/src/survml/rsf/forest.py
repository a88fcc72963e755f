"""Random survival forest: bootstrap ensembles of log-rank survival trees."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..dataset import SurvivalDataset
from ..errors import DataError
from ..seeding import derive_seed
from .tree import SurvivalTree, grow_tree

DEFAULT_N_TREES = 500
DEFAULT_MIN_NODE_SIZES = (1, 10, 20)


@dataclass(frozen=True)
class Forest:
    trees: tuple[SurvivalTree, ...]
    mtry: int
    min_node_size: int
    event_time_grid: np.ndarray
    seed: int
    column_names: tuple[str, ...]

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def oob_indices(self, tree_index: int) -> np.ndarray:
        return np.flatnonzero(self.trees[tree_index].oob_mask)

    def mortality_matrix(self, X) -> np.ndarray:
        """Per-tree ensemble-mortality contributions, shape (n_rows, n_trees)."""
        X = self._matrix(X)
        return np.column_stack([t.predict_mortality(X) for t in self.trees])

    def predict_mortality(self, X) -> np.ndarray:
        """Sum over the event-time grid of the tree-averaged terminal CHF."""
        return self.mortality_matrix(X).mean(axis=1)

    predict_risk = predict_mortality

    def _matrix(self, X) -> np.ndarray:
        if isinstance(X, SurvivalDataset):
            if tuple(X.column_names) != self.column_names:
                raise DataError("prediction columns differ from the training columns")
            X = X.features
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.column_names):
            raise DataError(f"expected {len(self.column_names)} columns, got shape {X.shape}")
        if np.isnan(X).any():
            raise DataError("forest prediction requires a complete feature matrix")
        return X


def fit_rsf(train: SurvivalDataset, mtry: int, min_node_size: int,
            n_trees: int = DEFAULT_N_TREES, seed: int = 0) -> Forest:
    """Grow ``n_trees`` log-rank trees, each on a bootstrap copy of ``train``.

    Tree ``b`` draws its bootstrap sample and candidate columns from a stream
    seeded by ``(seed, b)``, so the forest does not depend on build order.
    """
    p = train.n_columns
    if not 1 <= mtry <= p:
        raise DataError(f"mtry must lie in [1, {p}], got {mtry}")
    if min_node_size < 1:
        raise DataError("min_node_size must be at least 1")
    if n_trees < 1:
        raise DataError("n_trees must be at least 1")
    if train.n_events < 1:
        raise DataError("training set has no events")
    if np.isnan(train.features).any():
        raise DataError("forest fitting requires a complete (imputed) feature matrix")
    grid = np.unique(train.times[train.events == 1])
    grid_index = np.searchsorted(grid, train.times)
    trees = tuple(
        grow_tree(train.features, train.times, train.events, grid_index, grid.size,
                  mtry, min_node_size, derive_seed(seed, b))
        for b in range(n_trees)
    )
    grid.setflags(write=False)
    return Forest(trees, int(mtry), int(min_node_size), grid, int(seed), tuple(train.column_names))


def predict_mortality(forest: Forest, X) -> np.ndarray:
    return forest.predict_mortality(X)


def rsf_grid(n_columns: int, min_node_sizes=DEFAULT_MIN_NODE_SIZES) -> list[dict]:
    """mtry from 10 to half the column count in steps of 3, crossed with node sizes.

    Below 20 columns the mtry list collapses to ``[min(10, n_columns)]``.
    """
    if n_columns < 20:
        mtrys = [min(10, n_columns)]
    else:
        mtrys = list(range(10, n_columns // 2 + 1, 3))
    return [
        {"mtry": m, "min_node_size": s} for m, s in itertools.product(mtrys, min_node_sizes)
    ]
