"""Grid tuning by inner k-fold CV, nested cross-validation and Monte Carlo validation.

Standardization and KNN imputation are refitted inside every resampling
partition, on that partition's training rows only, so no score ever reflects
a transform that has seen its own test rows.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import cox, coxnet
from .dataset import SurvivalDataset, stratified_kfold, stratified_split
from .errors import DataError, FitError, SurvmlError
from .impute import fit_preprocessor
from .metrics import cindex
from .rsf import DEFAULT_N_TREES, fit_rsf, rsf_grid
from .rsf.forest import DEFAULT_MIN_NODE_SIZES
from .seeding import derive_seed

log = logging.getLogger(__name__)

MODEL_KINDS = ("cox", "coxnet", "rsf")
NOT_TUNED = "NA (not tuned)"


@dataclass(frozen=True)
class ModelSpec:
    """Model family plus its tuning grid.

    ``grid`` maps each hyperparameter to its candidate values in row-major
    order (first key outermost). For rsf an ``mtry`` of ``None`` means the
    default rule, evaluated on the column count of the data at hand.
    """

    kind: str
    grid: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise DataError(f"unknown model kind {self.kind!r}")
        if self.kind == "cox" and self.grid:
            raise DataError("the Cox baseline is not tuned; its grid must be empty")

    @classmethod
    def cox(cls, **options) -> "ModelSpec":
        return cls("cox", {}, options)

    @classmethod
    def coxnet(cls, alphas=coxnet.DEFAULT_ALPHAS, lambdas=coxnet.DEFAULT_LAMBDAS, **options):
        return cls("coxnet", {"alpha": tuple(alphas), "lambda": tuple(lambdas)}, options)

    @classmethod
    def rsf(cls, mtry=None, min_node_sizes=DEFAULT_MIN_NODE_SIZES, n_trees=DEFAULT_N_TREES, **options):
        grid = {"mtry": None if mtry is None else tuple(mtry),
                "min_node_size": tuple(min_node_sizes)}
        return cls("rsf", grid, {"n_trees": n_trees, **options})

    @property
    def tuned(self) -> bool:
        return self.kind != "cox"

    def combinations(self, n_columns: int) -> list[dict]:
        if self.kind == "cox":
            return [{}]
        if self.kind == "rsf" and self.grid.get("mtry") is None:
            return rsf_grid(n_columns, self.grid["min_node_size"])
        keys = list(self.grid)
        combos = [dict(zip(keys, values)) for values in itertools.product(*self.grid.values())]
        if self.kind == "rsf":
            combos = [c for c in combos if 1 <= c["mtry"] <= n_columns]
            if not combos:
                raise DataError(f"no rsf grid entry has mtry <= {n_columns}")
        return combos


# ---------------------------------------------------------------------------
# fitting


def fit_model(spec: ModelSpec, train: SurvivalDataset, params: dict, seed: int = 0):
    """Fit one model on a complete, standardized training set."""
    if spec.kind == "cox":
        return cox.fit_cox(train, cox.FitOptions(**spec.options))
    if spec.kind == "coxnet":
        return coxnet.fit_coxnet(train, params["alpha"], params["lambda"], **spec.options)
    n_trees = spec.options.get("n_trees", DEFAULT_N_TREES)
    return fit_rsf(train, params["mtry"], params["min_node_size"], n_trees=n_trees, seed=seed)


def fit_grid(spec: ModelSpec, train: SurvivalDataset, combos: list[dict], seed: int = 0) -> list:
    """Fit every combination; a failed cell yields its exception instead of a model.

    Coxnet cells sharing an alpha are solved along descending lambda with
    warm starts.
    """
    if spec.kind != "coxnet":
        out = []
        for params in combos:
            try:
                out.append(fit_model(spec, train, params, seed))
            except SurvmlError as exc:
                out.append(exc)
        return out
    problem = coxnet.CoxnetProblem.from_dataset(train)
    out: list = [None] * len(combos)
    by_alpha: dict[float, list[int]] = {}
    for i, params in enumerate(combos):
        by_alpha.setdefault(params["alpha"], []).append(i)
    for alpha, idx in by_alpha.items():
        beta = None
        for i in sorted(idx, key=lambda i: -combos[i]["lambda"]):
            try:
                model = coxnet.fit_coxnet(problem, alpha, combos[i]["lambda"], beta_init=beta,
                                          **spec.options)
            except SurvmlError as exc:
                out[i] = exc
                continue
            out[i] = model
            beta = model.beta
    return out


def score(model, data: SurvivalDataset) -> float:
    return cindex(data.times, data.events, model.predict_risk(data))


# ---------------------------------------------------------------------------
# tuning


@dataclass(frozen=True)
class TuneResult:
    best_params: dict
    inner_cv_cindex: float | None
    all_results: tuple = ()

    @property
    def tuned(self) -> bool:
        return self.inner_cv_cindex is not None


def tune(spec: ModelSpec, train: SurvivalDataset, inner_k: int = 5, seed: int = 0,
         knn_k: int = 5) -> TuneResult:
    """Pick the grid combination with the highest mean inner-fold C-index.

    ``train`` is raw (indicators added, not standardized or imputed). A
    combination must fit and score on every fold to be eligible; equal
    means go to the earlier combination in grid order.
    """
    if not spec.tuned:
        return TuneResult({}, None, ())
    if inner_k < 2:
        raise DataError("inner_k must be at least 2")
    combos = spec.combinations(train.n_columns)
    if not combos:
        raise DataError("empty tuning grid")
    folds = stratified_kfold(train, inner_k, derive_seed(seed, 0))
    scores = np.full((len(combos), inner_k), np.nan)
    for f, split in enumerate(folds):
        tr = train.subset(split.train_indices)
        te = train.subset(split.test_indices)
        pre = fit_preprocessor(tr, knn_k)
        tr_p, te_p = pre.transform(tr), pre.transform(te)
        models = fit_grid(spec, tr_p, combos, seed=derive_seed(seed, 1, f))
        for c, model in enumerate(models):
            if isinstance(model, Exception):
                continue
            try:
                scores[c, f] = score(model, te_p)
            except SurvmlError:
                pass
    complete = ~np.isnan(scores).any(axis=1)
    if not complete.any():
        raise FitError("every grid combination failed on at least one inner fold")
    means = np.where(complete, scores.mean(axis=1), -np.inf)
    best = int(np.argmax(means))
    results = tuple(
        (combos[c], float(scores[c].mean()) if complete[c] else float("nan"), tuple(scores[c].tolist()))
        for c in range(len(combos))
    )
    return TuneResult(dict(combos[best]), float(means[best]), results)


# ---------------------------------------------------------------------------
# resampling protocols


@dataclass(frozen=True)
class PartitionResult:
    train_cindex: float
    test_cindex: float
    model: object
    preprocessor: object


def evaluate_partition(spec: ModelSpec, train: SurvivalDataset, test: SurvivalDataset,
                       params: dict, seed: int = 0, knn_k: int = 5) -> PartitionResult:
    """Preprocess on ``train`` only, fit with ``params`` and score both sides."""
    pre = fit_preprocessor(train, knn_k)
    tr_p, te_p = pre.transform(train), pre.transform(test)
    model = fit_model(spec, tr_p, params, seed)
    return PartitionResult(score(model, tr_p), score(model, te_p), model, pre)


@dataclass(frozen=True)
class ResampleEntry:
    """One outer fold (nested CV) or one experiment (Monte Carlo)."""

    index: int
    seed: int
    status: str
    train_cindex: float
    cv_cindex: float | None
    test_cindex: float
    params: dict
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _failed(index, seed, exc) -> ResampleEntry:
    return ResampleEntry(index, seed, "failed", math.nan, None, math.nan, {},
                         f"{type(exc).__name__}: {exc}")


def _run_partition(spec, dataset, train_idx, test_idx, index, seed, inner_k, knn_k) -> ResampleEntry:
    try:
        train = dataset.subset(train_idx)
        test = dataset.subset(test_idx)
        tuned = tune(spec, train, inner_k, derive_seed(seed, 1), knn_k)
        part = evaluate_partition(spec, train, test, tuned.best_params, derive_seed(seed, 2), knn_k)
    except (SurvmlError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.warning("%s partition %d failed: %s", spec.kind, index, exc)
        return _failed(index, seed, exc)
    return ResampleEntry(index, seed, "ok", part.train_cindex, tuned.inner_cv_cindex,
                         part.test_cindex, tuned.best_params)


def _summary(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1)) if arr.size > 1 else math.nan
    return mean, sd


@dataclass(frozen=True)
class _Report:
    model: str
    entries: tuple[ResampleEntry, ...]

    @property
    def n_failed(self) -> int:
        return sum(not e.ok for e in self.entries)

    def column(self, name: str) -> list[float]:
        ok = [e for e in self.entries if e.ok]
        if name == "cv" and ok and ok[0].cv_cindex is None:
            return []
        attr = {"train": "train_cindex", "cv": "cv_cindex", "test": "test_cindex"}[name]
        return [getattr(e, attr) for e in ok]

    def aggregates(self) -> dict:
        """Mean and sample SD of train/cv/test over successful entries."""
        out = {}
        for name in ("test", "train", "cv"):
            out[name] = _summary(self.column(name))
        return out


@dataclass(frozen=True)
class NCVReport(_Report):
    outer_k: int = 3
    inner_k: int = 5

    @property
    def folds(self):
        return self.entries


@dataclass(frozen=True)
class MCReport(_Report):
    train_fraction: float = 2 / 3
    inner_k: int = 5

    @property
    def experiments(self):
        return self.entries


def _map(fn, tasks, jobs: int):
    if jobs == 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=jobs)(delayed(fn)(*t) for t in tasks)


def nested_cv(spec: ModelSpec, dataset: SurvivalDataset, outer_k: int = 3, inner_k: int = 5,
              seed: int = 0, knn_k: int = 5, jobs: int = 1) -> NCVReport:
    """Outer stratified k-fold; each outer-train is tuned by inner k-fold, refitted, scored."""
    folds = stratified_kfold(dataset, outer_k, derive_seed(seed, 0))
    tasks = [
        (spec, dataset, s.train_indices, s.test_indices, f, derive_seed(seed, 1, f), inner_k, knn_k)
        for f, s in enumerate(folds)
    ]
    entries = _map(_run_partition, tasks, jobs)
    return NCVReport(spec.kind, tuple(entries), outer_k, inner_k)


def experiment_seed(seed: int, experiment: int) -> int:
    return derive_seed(seed, experiment)


def monte_carlo(spec: ModelSpec, dataset: SurvivalDataset, n_experiments: int = 90,
                train_fraction: float = 2 / 3, inner_k: int = 5, seed: int = 0,
                knn_k: int = 5, jobs: int = 1) -> MCReport:
    """Repeated stratified train/test splits; experiment ``e`` is seeded by ``(seed, e)``."""
    if n_experiments < 1:
        raise DataError("n_experiments must be at least 1")
    tasks = []
    for e in range(n_experiments):
        s = experiment_seed(seed, e)
        split = stratified_split(dataset, train_fraction, s)
        tasks.append((spec, dataset, split.train_indices, split.test_indices, e, s, inner_k, knn_k))
    entries = _map(_run_partition, tasks, jobs)
    return MCReport(spec.kind, tuple(entries), train_fraction, inner_k)
