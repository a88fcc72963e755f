import numpy as np
import pytest

from survml import coxnet
from survml.dataset import add_missing_indicators, normalize_missing
from survml.errors import DataError
from survml.synth import SynthSpec, generate
from survml.validation import (ModelSpec, NOT_TUNED, evaluate_partition, monte_carlo, nested_cv,
                               tune)

from conftest import make_dataset


def raw(spec):
    return add_missing_indicators(normalize_missing(generate(spec)))


@pytest.fixture(scope="module")
def linear():
    return raw(SynthSpec(n=150, p=4, beta_true=(1.5, -1.0, 0.0, 0.0), missing_rate=0.05, seed=2))


def test_single_combination_selected(linear):
    spec = ModelSpec.coxnet(alphas=(0.5,), lambdas=(0.1,))
    res = tune(spec, linear, inner_k=3, seed=0)
    assert res.best_params == {"alpha": 0.5, "lambda": 0.1}
    assert res.inner_cv_cindex == pytest.approx(res.all_results[0][1])
    assert res.inner_cv_cindex == pytest.approx(np.mean(res.all_results[0][2]))


def test_equal_means_go_to_first_in_grid(linear):
    # both lambdas are far above lambda_max: every fit is the zero model, scoring 0.5
    lam_hi = 50 * coxnet.lambda_max(linear.with_features(np.nan_to_num(linear.features)), 1.0)
    spec = ModelSpec.coxnet(alphas=(1.0,), lambdas=(lam_hi * 2, lam_hi))
    res = tune(spec, linear, inner_k=3, seed=1)
    assert res.all_results[0][1] == res.all_results[1][1] == 0.5
    assert res.best_params["lambda"] == lam_hi * 2


def test_dominating_lambda_selected(linear):
    spec = ModelSpec.coxnet(alphas=(1.0,), lambdas=(0.05, 0.3))
    res = tune(spec, linear, inner_k=3, seed=2)
    small, large = res.all_results[0][2], res.all_results[1][2]
    assert all(s > l for s, l in zip(small, large))
    assert res.best_params["lambda"] == 0.05


def test_cox_is_not_tuned(linear):
    res = tune(ModelSpec.cox(), linear)
    assert res.best_params == {} and res.inner_cv_cindex is None


def test_grid_order_is_row_major():
    spec = ModelSpec.rsf(mtry=(1, 2), min_node_sizes=(5, 10), n_trees=5)
    assert spec.combinations(4) == [
        {"mtry": 1, "min_node_size": 5}, {"mtry": 1, "min_node_size": 10},
        {"mtry": 2, "min_node_size": 5}, {"mtry": 2, "min_node_size": 10},
    ]
    assert len(ModelSpec.coxnet().combinations(10)) == 126
    with pytest.raises(DataError):
        ModelSpec.rsf(mtry=(12,)).combinations(4)


def test_nested_cv_shape_and_partition(linear):
    rep = nested_cv(ModelSpec.coxnet(alphas=(0.5,), lambdas=(0.05, 0.1)), linear,
                    outer_k=3, inner_k=3, seed=4)
    assert len(rep.entries) == 3 and rep.n_failed == 0
    agg = rep.aggregates()
    assert agg["test"][0] == pytest.approx(np.mean([e.test_cindex for e in rep.entries]), abs=1e-15)


def test_perfect_predictor():
    x = np.linspace(-2, 2, 60)
    t = np.exp(-3 * x)
    e = np.tile([1, 1, 0], 20)
    ds = add_missing_indicators(normalize_missing(make_dataset(x[:, None], t, e)))
    net = nested_cv(ModelSpec.coxnet(alphas=(0.0,), lambdas=(0.05,)), ds, 3, 3, seed=0)
    assert [e.test_cindex for e in net.entries] == [1.0, 1.0, 1.0]
    # the unpenalized fit diverges; each fold is recorded as a failure, not dropped
    cox = nested_cv(ModelSpec.cox(), ds, 3, 3, seed=0)
    assert cox.n_failed == 3
    assert all("MonotoneLikelihoodError" in e.error for e in cox.entries)


def test_rsf_train_exceeds_test():
    ds = raw(SynthSpec(n=120, p=5, beta_true=(0.5, 0, 0, 0, 0), seed=6))
    rep = nested_cv(ModelSpec.rsf(mtry=(2,), min_node_sizes=(1,), n_trees=30), ds, 3, 3, seed=1)
    agg = rep.aggregates()
    assert agg["train"][0] - agg["test"][0] > 0


def test_monte_carlo_shape_and_constant_model(linear):
    lam = 50 * coxnet.lambda_max(linear.with_features(np.nan_to_num(linear.features)), 1.0)
    rep = monte_carlo(ModelSpec.coxnet(alphas=(1.0,), lambdas=(lam,)), linear, n_experiments=6,
                      inner_k=3, seed=3)
    assert len(rep.entries) == 6
    assert all(e.test_cindex == 0.5 for e in rep.entries)
    assert rep.aggregates()["test"] == (0.5, 0.0)


def test_monte_carlo_deterministic_and_parallel_safe(linear):
    spec = ModelSpec.coxnet(alphas=(0.5,), lambdas=(0.05, 0.2))
    a = monte_carlo(spec, linear, 4, inner_k=3, seed=9)
    b = monte_carlo(spec, linear, 4, inner_k=3, seed=9)
    c = monte_carlo(spec, linear, 4, inner_k=3, seed=9, jobs=2)
    assert a == b == c
    assert len({e.seed for e in a.entries}) == 4


def test_cox_report_has_no_cv_column(linear):
    rep = monte_carlo(ModelSpec.cox(), linear, 3, inner_k=3, seed=0)
    assert rep.column("cv") == []
    assert NOT_TUNED == "NA (not tuned)"


@pytest.mark.parametrize("spec", [
    ModelSpec.cox(),
    ModelSpec.coxnet(alphas=(0.5,), lambdas=(0.05,)),
    ModelSpec.rsf(mtry=(2,), min_node_sizes=(5,), n_trees=10),
])
def test_no_leakage_both_directions(linear, spec):
    idx = np.arange(linear.n_rows)
    train, test = linear.subset(idx[:100]), linear.subset(idx[100:])
    params = spec.combinations(linear.n_columns)[0]
    clean = evaluate_partition(spec, train, test, params, seed=1)
    numeric = np.array([not c.is_indicator for c in test.columns])
    noise = np.random.default_rng(0).standard_normal(test.features.shape) * 100
    corrupt = test.with_features(np.where(numeric & ~np.isnan(test.features), noise, test.features))
    dirty = evaluate_partition(spec, train, corrupt, params, seed=1)
    # fitted state is untouched by the test rows
    np.testing.assert_array_equal(clean.preprocessor.standardizer.mean, dirty.preprocessor.standardizer.mean)
    np.testing.assert_array_equal(clean.preprocessor.imputer.reference, dirty.preprocessor.imputer.reference)
    if spec.kind == "rsf":
        for a, b in zip(clean.model.trees, dirty.model.trees):
            np.testing.assert_array_equal(a.threshold, b.threshold)
    else:
        np.testing.assert_array_equal(clean.model.beta, dirty.model.beta)
    assert clean.train_cindex == dirty.train_cindex
    assert clean.test_cindex != dirty.test_cindex
