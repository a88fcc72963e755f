import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survml import dataset as D
from survml.errors import DataError, PipelineOrderError

from conftest import make_dataset


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_simple(tmp_path):
    ds = D.load_csv(write(tmp_path, "time,event,x1\n1,1,0.5\n2,0,NA\n3,1,2\n"))
    assert ds.n_rows == 3 and ds.column_names == ["x1"]
    assert np.isnan(ds.features[1, 0])
    np.testing.assert_array_equal(ds.events, [1, 0, 1])


def test_load_excludes_feature_and_its_indicator(tmp_path):
    path = write(tmp_path, "time,event,scfru,x\n1,1,NA,1\n2,0,3,NA\n3,1,4,2\n")
    raw = D.load_csv(path, D.SchemaConfig(exclude_features=("scfru",)))
    ds, _ = D.preprocess(raw)
    assert "scfru" not in ds.column_names
    assert not any(n.startswith("scfru") for n in ds.column_names)


@pytest.mark.parametrize("body,match", [
    ("time,event,x\n1,2,0\n", "event"),
    ("time,x\n1,0\n", "event"),
    ("time,event,x\n-1,1,0\n", "negative"),
    ("time,event,x,x\n1,1,0,0\n", "duplicate"),
    ("time,event,x\n1,1,abc\n", "non-numeric"),
])
def test_load_errors(tmp_path, body, match):
    with pytest.raises(DataError, match=match):
        D.load_csv(write(tmp_path, body))


def test_unknown_exclude_is_error(tmp_path):
    with pytest.raises(DataError):
        D.load_csv(write(tmp_path, "time,event,x\n1,1,0\n"), D.SchemaConfig(exclude_features=("y",)))


def test_normalize_missing():
    ds = make_dataset([[-9.0, 1.0], [2.0, 3.0]], [1, 2], [1, 0])
    out = D.normalize_missing(ds)
    assert np.isnan(out.features[0, 0]) and out.features[1, 0] == 2.0
    clean = make_dataset([[4.0], [5.0]], [1, 2], [1, 0])
    np.testing.assert_array_equal(D.normalize_missing(clean).features, clean.features)
    again = D.normalize_missing(make_dataset(out.features, [1, 2], [1, 0]))
    np.testing.assert_array_equal(again.features, out.features)


def test_indicator_definition():
    x = np.array([1.0, 2, np.nan, 4, 5, np.nan])
    ds = D.normalize_missing(make_dataset(np.column_stack([x, np.arange(6.0)]), np.arange(1, 7), [1] * 6))
    out = D.add_missing_indicators(ds)
    assert out.column_names == ["x1", "x2", "x1__miss"]
    np.testing.assert_array_equal(out.features[:, 2], [0, 0, 1, 0, 0, 1])
    assert out.columns[2].source == "x1" and out.columns[2].is_indicator


def test_two_partially_missing_columns_get_two_indicators():
    X = np.array([[np.nan, 1.0], [1.0, np.nan], [2.0, 2.0]])
    out = D.add_missing_indicators(D.normalize_missing(make_dataset(X, [1, 2, 3], [1, 0, 1])))
    assert out.n_columns == 4


def test_indicator_name_collision():
    assert D.indicator_name("a", {"a"}) == "a__miss"
    assert D.indicator_name("a", {"a", "a__miss"}) == "a__miss_2"
    with pytest.raises(DataError):
        D.indicator_name("a", {"a__miss", "a__miss_2"})


def _with_missing_fraction(n_missing, n=1000):
    x = np.arange(n, dtype=float)
    x[:n_missing] = np.nan
    ds = make_dataset(np.column_stack([x, np.arange(n, dtype=float) * 2]), np.arange(1, n + 1), [1] * n)
    return D.add_missing_indicators(D.normalize_missing(ds))


def test_missingness_cutoff_boundaries():
    kept, dropped = D.drop_high_missingness(_with_missing_fraction(508), 0.51)
    assert dropped == [] and "x1" in kept.column_names
    out, dropped = D.drop_high_missingness(_with_missing_fraction(510), 0.51)
    assert dropped == ["x1"]
    assert out.column_names == ["x2"]
    out, dropped = D.drop_high_missingness(_with_missing_fraction(0), 0.51)
    assert dropped == []


def test_orphan_indicator_kept_when_configured():
    out, dropped = D.drop_high_missingness(_with_missing_fraction(600), 0.51, keep_orphan_indicators=True)
    assert dropped == ["x1"]
    assert out.column_names == ["x2", "x1__miss"]
    assert not out.columns[1].is_indicator


def test_pipeline_order_enforced():
    ds = make_dataset([[1.0], [np.nan]], [1, 2], [1, 0])
    with pytest.raises(PipelineOrderError):
        D.add_missing_indicators(ds)
    with pytest.raises(PipelineOrderError):
        D.drop_high_missingness(D.normalize_missing(ds))
    done = D.add_missing_indicators(D.normalize_missing(ds))
    with pytest.raises(PipelineOrderError):
        D.normalize_missing(done)


def test_content_duplicates_collapse_to_first_by_name():
    x = np.array([1.0, np.nan, 3.0])
    ds = make_dataset(np.column_stack([x, x, x + 1]), [1, 2, 3], [1, 0, 1], ["b", "a", "c"])
    out, dropped = D.drop_duplicate_columns(D.normalize_missing(ds))
    assert dropped == ["b"]
    assert out.column_names == ["a", "c"]


def test_missing_fraction_matches_cells_after_every_step():
    X = np.array([[1.0, -9], [np.nan, 2], [3, 3], [np.nan, -9]])
    ds = make_dataset(X, [1, 2, 3, 4], [1, 0, 1, 1])
    ds = D.normalize_missing(ds)
    for step_ds in (ds, D.add_missing_indicators(ds), ds.subset([0, 2])):
        for j, c in enumerate(step_ds.columns):
            assert c.missing_fraction == np.isnan(step_ds.features[:, j]).mean()


def test_stratified_split_counts():
    events = np.array([1] * 90 + [0] * 210)
    s = D.stratified_split(events, 2 / 3, seed=5)
    assert abs(events[s.train_indices].sum() - 60) <= 1
    assert abs((events[s.train_indices] == 0).sum() - 140) <= 1
    assert np.array_equal(np.sort(np.concatenate([s.train_indices, s.test_indices])), np.arange(300))
    t = D.stratified_split(events, 2 / 3, seed=5)
    np.testing.assert_array_equal(s.train_indices, t.train_indices)


def test_stratified_split_test_size_large_cohort():
    # per-stratum floor(2n/3 + 1/2): 2000 events -> 1333 train, 5556 censored -> 3704 train
    events = np.array([1] * 2000 + [0] * 5556)
    s = D.stratified_split(events, 2 / 3, seed=1)
    assert s.test_indices.size == (2000 - 1333) + (5556 - 3704)
    assert abs(s.test_indices.size - 2519) <= 1


def test_split_needs_both_strata():
    with pytest.raises(DataError):
        D.stratified_split(np.array([1, 1, 1, 0]), 0.5, 0)


def test_kfold_divisible_strata():
    events = np.array([1] * 9 + [0] * 21)
    folds = D.stratified_kfold(events, 3, seed=0)
    for f in folds:
        assert events[f.test_indices].sum() == 3
        assert (events[f.test_indices] == 0).sum() == 7
    union = np.sort(np.concatenate([f.test_indices for f in folds]))
    np.testing.assert_array_equal(union, np.arange(30))


def test_kfold_remainder_rule():
    events = np.array([1] * 7 + [0] * 13)
    folds = D.stratified_kfold(events, 5, seed=3)
    counts = [int(events[f.test_indices].sum()) for f in folds]
    assert counts == [2, 2, 1, 1, 1]
    assert sum(counts) == 7


@settings(max_examples=60, deadline=None)
@given(st.integers(5, 40), st.integers(5, 60), st.integers(2, 5), st.integers(0, 2**31))
def test_kfold_partition_property(n_events, n_censored, k, seed):
    events = np.array([1] * n_events + [0] * n_censored)
    folds = D.stratified_kfold(events, k, seed)
    tests = [f.test_indices for f in folds]
    np.testing.assert_array_equal(np.sort(np.concatenate(tests)), np.arange(events.size))
    for f in folds:
        assert np.intersect1d(f.train_indices, f.test_indices).size == 0
        assert abs(events[f.test_indices].sum() - n_events / k) < 1


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 50), st.integers(2, 50), st.floats(0.2, 0.8), st.integers(0, 2**31))
def test_split_stratification_bound(n_events, n_censored, frac, seed):
    events = np.array([1] * n_events + [0] * n_censored)
    try:
        s = D.stratified_split(events, frac, seed)
    except DataError:
        return
    assert abs(events[s.train_indices].sum() - frac * n_events) <= 0.5 + 1e-9
    assert abs((events[s.train_indices] == 0).sum() - frac * n_censored) <= 0.5 + 1e-9


def test_write_then_load_roundtrip(tmp_path, cohort):
    path = tmp_path / "c.csv"
    D.write_csv(cohort, path)
    back = D.load_csv(path)
    np.testing.assert_array_equal(back.features, cohort.features)
    np.testing.assert_array_equal(back.times, cohort.times)
