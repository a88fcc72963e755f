"""Centering/scaling and K-nearest-neighbour imputation.

Both transforms are fitted on training rows only and then applied to any
partition, so a held-out row never influences how another row is filled.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import SurvivalDataset
from .errors import DataError


class ImputationWarning(UserWarning):
    """Fewer than k eligible neighbours were available for a missing cell."""


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    sd: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.mean.shape[0]:
            raise DataError(f"expected {self.mean.shape[0]} columns, got {X.shape[1]}")
        return (X - self.mean) / self.sd

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.sd + self.mean


def fit_standardizer(train) -> Standardizer:
    """Per-column mean and sample SD over observed cells.

    Columns with zero spread (or a single observed value) get ``sd = 1`` so
    they pass through centred but unscaled.
    """
    X = np.asarray(train, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("standardizer needs a non-empty 2-D training matrix")
    observed = ~np.isnan(X)
    counts = observed.sum(axis=0)
    if np.any(counts == 0):
        bad = np.flatnonzero(counts == 0).tolist()
        raise DataError(f"columns {bad} have no observed training cells")
    filled = np.where(observed, X, 0.0)
    mean = filled.sum(axis=0) / counts
    resid = np.where(observed, X - mean, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        var = (resid**2).sum(axis=0) / (counts - 1)
    sd = np.sqrt(var)
    sd = np.where((counts < 2) | ~np.isfinite(sd) | (sd == 0), 1.0, sd)
    return Standardizer(mean, sd)


@dataclass(frozen=True)
class KnnImputer:
    """Reference rows (standardized training matrix) and neighbour settings.

    ``distance_columns`` marks the coordinates that enter the distance;
    ``binary_columns`` are cells rounded back to {0, 1} on the raw scale
    after averaging, which needs the standardizer that produced ``reference``.
    """

    reference: np.ndarray
    k: int
    distance_columns: np.ndarray
    binary_columns: np.ndarray
    standardizer: Standardizer | None = None

    def __post_init__(self):
        if self.k < 1:
            raise DataError("k must be at least 1")
        if self.k > self.reference.shape[0]:
            raise DataError(f"k={self.k} exceeds the {self.reference.shape[0]} reference rows")


def fit_knn_imputer(reference, k: int = 5, distance_columns=None, binary_columns=None,
                    standardizer: Standardizer | None = None) -> KnnImputer:
    ref = np.array(reference, dtype=float, copy=True)
    p = ref.shape[1]
    dist = np.ones(p, bool) if distance_columns is None else np.asarray(distance_columns, bool)
    binary = np.zeros(p, bool) if binary_columns is None else np.asarray(binary_columns, bool)
    ref.setflags(write=False)
    return KnnImputer(ref, int(k), dist, binary, standardizer)


def rescaled_distances(row: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Euclidean distance over mutually observed coordinates, scaled by sqrt(p / p_obs).

    Rows sharing no observed coordinate with ``row`` are at infinite distance.
    """
    p = row.shape[0]
    both = ~np.isnan(reference) & ~np.isnan(row)
    diff = np.where(both, reference - np.nan_to_num(row), 0.0)
    n_obs = both.sum(axis=1)
    sq = (diff**2).sum(axis=1)
    out = np.full(reference.shape[0], np.inf)
    ok = n_obs > 0
    out[ok] = np.sqrt(sq[ok] * (p / n_obs[ok]))
    return out


def knn_impute(target, imputer: KnnImputer) -> np.ndarray:
    """Fill every missing cell of ``target`` from its nearest reference rows.

    A cell (r, c) becomes the plain mean of column c over the k reference
    rows closest to r among those observing c. Equal distances resolve to
    the lower reference index.
    """
    X = np.array(target, dtype=float, copy=True)
    ref = imputer.reference
    if X.shape[1] != ref.shape[1]:
        raise DataError(f"expected {ref.shape[1]} columns, got {X.shape[1]}")
    missing_rows = np.flatnonzero(np.isnan(X).any(axis=1))
    if missing_rows.size == 0:
        return X
    coords = imputer.distance_columns
    ref_observed = ~np.isnan(ref)
    for c in np.flatnonzero(np.isnan(X).any(axis=0)):
        if not ref_observed[:, c].any():
            raise DataError(f"no reference row observes column {c}")
    short = 0
    for r in missing_rows:
        row = X[r]
        miss = np.flatnonzero(np.isnan(row))
        dist = rescaled_distances(row[coords], ref[:, coords])
        for c in miss:
            eligible = np.flatnonzero(ref_observed[:, c])
            # stable sort keeps ascending reference index among equal distances
            nearest = eligible[np.argsort(dist[eligible], kind="stable")[: imputer.k]]
            if nearest.size < imputer.k:
                short += 1
            X[r, c] = ref[nearest, c].mean()
    if short:
        warnings.warn(
            f"{short} cells had fewer than k={imputer.k} eligible neighbours; used all available",
            ImputationWarning,
            stacklevel=2,
        )
    if imputer.binary_columns.any():
        X = _round_binary(X, target, imputer)
    return X


def _round_binary(X, original, imputer: KnnImputer) -> np.ndarray:
    # 0.5 rounds to 0
    filled = np.isnan(np.asarray(original, dtype=float))
    st = imputer.standardizer
    for c in np.flatnonzero(imputer.binary_columns):
        cells = filled[:, c]
        if not cells.any():
            continue
        values = X[cells, c]
        if st is not None:
            raw = values * st.sd[c] + st.mean[c]
            X[cells, c] = (np.where(raw > 0.5, 1.0, 0.0) - st.mean[c]) / st.sd[c]
        else:
            X[cells, c] = np.where(values > 0.5, 1.0, 0.0)
    return X


@dataclass(frozen=True)
class Preprocessor:
    """Standardizer plus KNN imputer fitted on one training partition."""

    standardizer: Standardizer
    imputer: KnnImputer
    column_names: tuple[str, ...]

    def transform(self, dataset: SurvivalDataset) -> SurvivalDataset:
        if tuple(dataset.column_names) != self.column_names:
            raise DataError("dataset columns differ from those the preprocessor was fitted on")
        Z = self.standardizer.transform(dataset.features)
        Z = knn_impute(Z, self.imputer)
        return dataset.with_features(Z, step="impute")


def fit_preprocessor(train: SurvivalDataset, k: int = 5) -> Preprocessor:
    standardizer = fit_standardizer(train.features)
    indicator = np.array([c.is_indicator for c in train.columns], dtype=bool)
    Z = standardizer.transform(train.features)
    imputer = fit_knn_imputer(
        Z,
        k=min(k, train.n_rows),
        distance_columns=~indicator,
        binary_columns=indicator,
        standardizer=standardizer,
    )
    return Preprocessor(standardizer, imputer, tuple(train.column_names))
