import itertools
import math
import warnings

import numpy as np
import pytest

from survml import dataset as D
from survml.errors import DataError
from survml.impute import (ImputationWarning, fit_knn_imputer, fit_preprocessor, fit_standardizer,
                           knn_impute)

from conftest import make_dataset


def test_standardizer_basic():
    st = fit_standardizer(np.array([[2.0], [4.0], [6.0]]))
    assert st.mean[0] == 4.0
    assert st.sd[0] == pytest.approx(math.sqrt(((2 - 4) ** 2 + 0 + (6 - 4) ** 2) / 2))


def test_standardizer_constant_and_missing():
    st = fit_standardizer(np.array([[5.0, 1.0], [5.0, np.nan], [5.0, 3.0]]))
    assert st.sd[0] == 1.0
    assert st.mean[1] == 2.0
    np.testing.assert_array_equal(st.transform(np.array([[5.0, 2.0]]))[:, 0], [0.0])


def test_standardizer_all_missing_column():
    with pytest.raises(DataError):
        fit_standardizer(np.array([[1.0, np.nan], [2.0, np.nan]]))


def test_complete_target_unchanged(rng):
    ref = rng.standard_normal((10, 3))
    target = rng.standard_normal((4, 3))
    np.testing.assert_array_equal(knn_impute(target, fit_knn_imputer(ref, 5)), target)


def test_identical_neighbour_values():
    ref = np.column_stack([np.arange(8.0), np.full(8, 7.0)])
    out = knn_impute(np.array([[3.0, np.nan]]), fit_knn_imputer(ref, 5))
    assert out[0, 1] == 7.0


def brute_force_impute(row, ref, col, k):
    # hand-rolled: every rescaled distance, then the k nearest rows observing col
    p = ref.shape[1]
    dists = []
    for i in range(ref.shape[0]):
        if np.isnan(ref[i, col]):
            continue
        shared = [j for j in range(p) if not np.isnan(row[j]) and not np.isnan(ref[i, j])]
        sq = sum((row[j] - ref[i, j]) ** 2 for j in shared)
        d = math.sqrt(sq * p / len(shared)) if shared else math.inf
        dists.append((d, i))
    dists.sort()
    return sum(ref[i, col] for _, i in dists[:k]) / k


def test_8x3_matches_brute_force(rng):
    ref = rng.standard_normal((8, 3))
    ref[2, 0] = np.nan
    ref[5, 1] = np.nan
    row = np.array([0.3, np.nan, -0.4])
    out = knn_impute(row[None, :], fit_knn_imputer(ref, 5))
    assert out[0, 1] == pytest.approx(brute_force_impute(row, ref, 1, 5), rel=1e-12)


def test_tie_to_lower_index_and_permutation_equivariance():
    # rows 0..3 are all at distance 1 from the target; values differ
    ref = np.array([[1.0, 10], [-1.0, 20], [1.0, 30], [-1.0, 40], [5.0, 50]])
    target = np.array([[0.0, np.nan]])
    out = knn_impute(target, fit_knn_imputer(ref, 2))
    assert out[0, 1] == 15.0
    # no ties at the boundary: equivariant under reference reordering
    ref2 = np.array([[0.1, 1.0], [0.5, 2.0], [0.9, 3.0], [2.0, 4.0], [-3.0, 5.0]])
    base = knn_impute(target, fit_knn_imputer(ref2, 3))
    for perm in itertools.permutations(range(5)):
        np.testing.assert_array_equal(knn_impute(target, fit_knn_imputer(ref2[list(perm)], 3)), base)


def test_fewer_eligible_than_k_warns():
    ref = np.array([[0.0, 1.0], [1.0, np.nan], [2.0, np.nan]])
    with pytest.warns(ImputationWarning):
        out = knn_impute(np.array([[0.5, np.nan]]), fit_knn_imputer(ref, 2))
    assert out[0, 1] == 1.0


def test_heldout_row_independent_of_other_heldout_rows(rng):
    ref = rng.standard_normal((20, 4))
    held = rng.standard_normal((6, 4))
    held[held > 1.0] = np.nan
    imp = fit_knn_imputer(ref, 5)
    full = knn_impute(held, imp)
    for r in range(6):
        np.testing.assert_array_equal(knn_impute(held[[r]], imp)[0], full[r])
    perm = rng.permutation(6)
    np.testing.assert_array_equal(knn_impute(held[perm], imp), full[perm])


def test_preprocessor_rounds_indicators_and_excludes_them_from_distance():
    X = np.array([[1.0, 0], [2.0, np.nan], [3.0, 1], [4.0, 2], [np.nan, 3], [6.0, 4]])
    ds = D.add_missing_indicators(D.normalize_missing(make_dataset(X, np.arange(1, 7), [1, 0] * 3)))
    # blank out an indicator cell to force its imputation
    feats = ds.features.copy()
    feats[0, 3] = np.nan
    ds = ds.with_features(feats)
    pre = fit_preprocessor(ds, k=3)
    out = pre.transform(ds)
    assert not np.isnan(out.features).any()
    raw = pre.standardizer.inverse_transform(out.features)
    assert raw[0, 3] in (0.0, 1.0)
    assert not pre.imputer.distance_columns[2:].any()
    assert pre.imputer.binary_columns[2:].all()


def test_preprocessor_refuses_other_columns(cohort):
    pre = fit_preprocessor(cohort)
    other = make_dataset(cohort.features, cohort.times, cohort.events, ["a", "b", "c", "d"])
    with pytest.raises(DataError):
        pre.transform(other)


def test_transform_idempotent_on_complete_data(cohort):
    pre = fit_preprocessor(cohort)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = pre.transform(cohort)
    np.testing.assert_allclose(pre.standardizer.inverse_transform(out.features), cohort.features)
