"""Out-of-bag permutation importance for random survival forests."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..dataset import SurvivalDataset
from ..errors import DataError
from ..metrics import concordance_index
from ..seeding import derive_seed
from .forest import Forest


@dataclass(frozen=True)
class ImportanceRanking:
    """(column, score) entries sorted by descending score, ties by name."""

    entries: tuple[tuple[str, float], ...]
    sd: dict
    n_repeats: int
    baseline_cindex: float

    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    def rank_of(self, name: str) -> int:
        return self.names().index(name)


def oob_predictions(forest: Forest, X, matrix: np.ndarray | None = None):
    """Mean mortality per row over the trees for which the row is out-of-bag.

    Returns ``(predictions, covered)``; rows in-bag for every tree are not
    covered and get NaN.
    """
    M = forest.mortality_matrix(X) if matrix is None else matrix
    oob = np.column_stack([t.oob_mask for t in forest.trees])
    if oob.shape[0] != M.shape[0]:
        raise DataError("OOB predictions need the forest's own training rows")
    counts = oob.sum(axis=1)
    covered = counts > 0
    sums = np.where(oob, M, 0.0).sum(axis=1)
    pred = np.full(M.shape[0], np.nan)
    pred[covered] = sums[covered] / counts[covered]
    return pred, covered


def permutation_importance(forest: Forest, data: SurvivalDataset, n_repeats: int = 5,
                           seed: int = 0) -> ImportanceRanking:
    """Drop in OOB C-index when one column is permuted, averaged over repeats.

    ``data`` must be the (preprocessed) training set the forest was grown on.
    """
    if n_repeats < 1:
        raise DataError("n_repeats must be at least 1")
    X = forest._matrix(data)
    base_matrix = forest.mortality_matrix(X)
    base_pred, covered = oob_predictions(forest, X, base_matrix)
    uncovered = 1 - covered.mean()
    if uncovered > 0.05:
        warnings.warn(
            f"{uncovered:.1%} of rows are in-bag for every tree and are excluded from OOB scoring",
            stacklevel=2,
        )
    times, events = data.times[covered], data.events[covered]
    baseline = concordance_index(times, events, base_pred[covered]).cindex

    users = [
        [b for b, t in enumerate(forest.trees) if j in t.used_columns]
        for j in range(X.shape[1])
    ]
    scores = np.zeros((X.shape[1], n_repeats))
    for r in range(n_repeats):
        perm = np.random.default_rng(derive_seed(seed, r)).permutation(X.shape[0])
        for j in range(X.shape[1]):
            if not users[j]:
                continue
            Xp = X.copy()
            Xp[:, j] = X[perm, j]
            M = base_matrix.copy()
            for b in users[j]:
                M[:, b] = forest.trees[b].predict_mortality(Xp)
            pred, _ = oob_predictions(forest, Xp, M)
            scores[j, r] = baseline - concordance_index(times, events, pred[covered]).cindex
    mean = scores.mean(axis=1)
    sd = scores.std(axis=1, ddof=1) if n_repeats > 1 else np.zeros(X.shape[1])
    names = forest.column_names
    order = sorted(range(len(names)), key=lambda j: (-mean[j], names[j]))
    return ImportanceRanking(
        entries=tuple((names[j], float(mean[j])) for j in order),
        sd={names[j]: float(sd[j]) for j in order},
        n_repeats=n_repeats,
        baseline_cindex=float(baseline),
    )
