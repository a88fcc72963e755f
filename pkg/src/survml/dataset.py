"""Tabular survival data: ingestion, missingness handling and stratified resampling.

A :class:`SurvivalDataset` is immutable. Every preprocessing step returns a
new dataset and records itself in ``steps`` so the pipeline order
(normalize -> dedupe -> indicators -> cutoff -> impute) can be enforced.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, PipelineOrderError

NUMERIC = "numeric"
MISSING_INDICATOR = "missing_indicator"

DEFAULT_NA_SYNONYMS = ("", "NA", "N/A", "-9", "-8", "-1")
DEFAULT_MISSINGNESS_THRESHOLD = 0.51
INDICATOR_SUFFIX = "__miss"

STEP_ORDER = (
    "normalize_missing",
    "drop_duplicates",
    "add_missing_indicators",
    "drop_high_missingness",
    "impute",
)
_REQUIRES = {
    "add_missing_indicators": "normalize_missing",
    "drop_high_missingness": "add_missing_indicators",
}


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str = NUMERIC
    source: str | None = None
    missing_fraction: float = 0.0

    @property
    def is_indicator(self) -> bool:
        return self.kind == MISSING_INDICATOR


@dataclass(frozen=True)
class SchemaConfig:
    """Where the outcome lives in a CSV and how missing cells are spelled."""

    time_column: str = "time"
    event_column: str = "event"
    exclude_features: tuple[str, ...] = ()
    na_synonyms: tuple[str, ...] = DEFAULT_NA_SYNONYMS
    missingness_threshold: float = DEFAULT_MISSINGNESS_THRESHOLD
    keep_orphan_indicators: bool = False

    @classmethod
    def from_mapping(cls, mapping: dict) -> "SchemaConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(mapping) - known
        if unknown:
            raise DataError(f"unknown schema keys: {sorted(unknown)}")
        kwargs = dict(mapping)
        for key in ("exclude_features", "na_synonyms"):
            if key in kwargs:
                kwargs[key] = tuple(str(v) for v in kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class SurvivalDataset:
    """Feature matrix (NaN marks a missing cell) plus right-censored outcomes."""

    features: np.ndarray
    times: np.ndarray
    events: np.ndarray
    columns: tuple[ColumnMeta, ...]
    steps: tuple[str, ...] = field(default=())

    def __post_init__(self):
        features = np.array(self.features, dtype=float, copy=True)
        if features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        times = np.array(self.times, dtype=float, copy=True).reshape(-1)
        events = np.array(self.events, copy=True).reshape(-1)
        n = features.shape[0]
        if times.shape[0] != n or events.shape[0] != n:
            raise DataError(
                f"length mismatch: {n} rows, {times.shape[0]} times, {events.shape[0]} events"
            )
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise DataError("times must be finite and non-negative")
        if not np.all(np.isin(events, (0, 1))):
            raise DataError("events must be 0 or 1")
        events = events.astype(np.int64)
        columns = tuple(self.columns)
        if len(columns) != features.shape[1]:
            raise DataError(f"{len(columns)} column entries for {features.shape[1]} columns")
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        numeric = {c.name for c in columns if not c.is_indicator}
        for j, c in enumerate(columns):
            if c.is_indicator:
                if c.source not in numeric:
                    raise DataError(f"indicator {c.name!r} has no numeric source column")
                values = features[:, j]
                observed = values[~np.isnan(values)]
                if "impute" not in self.steps and not np.all(np.isin(observed, (0.0, 1.0))):
                    raise DataError(f"indicator {c.name!r} holds values outside {{0,1}}")
        for arr in (features, times, events):
            arr.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "steps", tuple(self.steps))

    @classmethod
    def from_arrays(cls, features, times, events, names: Sequence[str] | None = None):
        features = np.asarray(features, dtype=float)
        if names is None:
            names = [f"x{j + 1}" for j in range(features.shape[1])]
        columns = tuple(
            ColumnMeta(name, NUMERIC, None, _missing_fraction(features[:, j]))
            for j, name in enumerate(names)
        )
        return cls(features, times, events, columns)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_columns(self) -> int:
        return self.features.shape[1]

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def subset(self, indices) -> "SurvivalDataset":
        idx = np.asarray(indices, dtype=np.int64)
        rows = replace(self, times=self.times[idx], events=self.events[idx],
                       features=self.features[idx])
        return rows.with_features(rows.features)

    def with_features(self, features, columns=None, step: str | None = None) -> "SurvivalDataset":
        """Return a copy with a new feature matrix and refreshed missingness metadata."""
        columns = self.columns if columns is None else tuple(columns)
        steps = self.steps
        if step is not None and step not in steps:
            steps = steps + (step,)
        if "impute" not in steps:
            features = np.asarray(features, dtype=float)
            columns = tuple(
                replace(c, missing_fraction=_missing_fraction(features[:, j]))
                for j, c in enumerate(columns)
            )
        return replace(self, features=features, columns=columns, steps=steps)

    def check_fittable(self) -> None:
        """Raise unless the outcome carries enough information to fit a model."""
        if self.n_events < 1:
            raise DataError("dataset has no observed events")
        if np.unique(self.times).size < 2:
            raise DataError("dataset needs at least two distinct observed times")


@dataclass(frozen=True)
class SplitPair:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int

    def __post_init__(self):
        train = np.asarray(self.train_indices, dtype=np.int64)
        test = np.asarray(self.test_indices, dtype=np.int64)
        if np.intersect1d(train, test).size:
            raise DataError("train and test indices overlap")
        train.setflags(write=False)
        test.setflags(write=False)
        object.__setattr__(self, "train_indices", train)
        object.__setattr__(self, "test_indices", test)


def _missing_fraction(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    return float(np.isnan(values).sum() / values.size)


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _check_step(dataset: SurvivalDataset, step: str) -> None:
    rank = STEP_ORDER.index(step)
    later = [s for s in dataset.steps if STEP_ORDER.index(s) > rank]
    if later:
        raise PipelineOrderError(f"{step} cannot run after {later[0]}")
    required = _REQUIRES.get(step)
    if required is not None and required not in dataset.steps:
        raise PipelineOrderError(f"{step} requires {required} first")


# ---------------------------------------------------------------------------
# ingestion


def load_csv(path, schema: SchemaConfig | None = None) -> SurvivalDataset:
    """Read a UTF-8 CSV with one header row into a dataset.

    Non-numeric tokens listed in ``schema.na_synonyms`` become NaN here;
    numeric-looking synonyms ("-9") are kept as numbers until
    :func:`normalize_missing` runs. Any other non-numeric feature cell is an
    error.
    """
    schema = schema or SchemaConfig()
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        dup = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"duplicate column names: {dup}")
    for key in (schema.time_column, schema.event_column):
        if key not in header:
            raise DataError(f"missing required column {key!r}")
    unknown = sorted(set(schema.exclude_features) - set(header))
    if unknown:
        raise DataError(f"excluded features not in file: {unknown}")

    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(r)}")

    t_idx = header.index(schema.time_column)
    e_idx = header.index(schema.event_column)
    skip = {t_idx, e_idx} | {header.index(c) for c in schema.exclude_features}
    feature_idx = [j for j in range(len(header)) if j not in skip]
    text_missing = {s.strip() for s in schema.na_synonyms if not _is_number(s.strip())}

    times = np.empty(len(body))
    events = np.empty(len(body), dtype=np.int64)
    features = np.empty((len(body), len(feature_idx)))
    for i, r in enumerate(body):
        lineno = i + 2
        try:
            times[i] = float(r[t_idx])
        except ValueError:
            raise DataError(f"line {lineno}: unparseable time {r[t_idx]!r}") from None
        if not math.isfinite(times[i]) or times[i] < 0:
            raise DataError(f"line {lineno}: negative or non-finite time {r[t_idx]!r}")
        try:
            ev = float(r[e_idx])
        except ValueError:
            raise DataError(f"line {lineno}: unparseable event {r[e_idx]!r}") from None
        if ev not in (0.0, 1.0):
            raise DataError(f"line {lineno}: event value {r[e_idx]!r} outside {{0,1}}")
        events[i] = int(ev)
        for k, j in enumerate(feature_idx):
            token = r[j].strip()
            if token in text_missing:
                features[i, k] = np.nan
                continue
            try:
                features[i, k] = float(token)
            except ValueError:
                raise DataError(
                    f"line {lineno}: column {header[j]!r} has non-numeric value {token!r}"
                ) from None
    names = [header[j] for j in feature_idx]
    return SurvivalDataset.from_arrays(features, times, events, names)


# ---------------------------------------------------------------------------
# missingness


def normalize_missing(dataset: SurvivalDataset, na_synonyms=DEFAULT_NA_SYNONYMS) -> SurvivalDataset:
    """Replace every feature cell equal to a numeric NA synonym with NaN."""
    _check_step(dataset, "normalize_missing")
    codes = [float(s) for s in na_synonyms if _is_number(s.strip())]
    features = dataset.features
    mask = np.isin(features, codes) if codes else np.zeros(features.shape, dtype=bool)
    if mask.any():
        features = features.copy()
        features[mask] = np.nan
    return dataset.with_features(features, step="normalize_missing")


def drop_duplicate_columns(dataset: SurvivalDataset) -> tuple[SurvivalDataset, list[str]]:
    """Collapse numeric columns with identical cell vectors onto the first by name."""
    _check_step(dataset, "drop_duplicates")
    order = sorted(range(dataset.n_columns), key=lambda j: dataset.columns[j].name)
    seen: dict[bytes, int] = {}
    dropped = []
    for j in order:
        if dataset.columns[j].is_indicator:
            continue
        col = dataset.features[:, j]
        # NaN-aware equality: missing pattern plus observed values
        key = np.isnan(col).tobytes() + np.nan_to_num(col, nan=0.0).tobytes()
        if key in seen:
            dropped.append(dataset.columns[j].name)
        else:
            seen[key] = j
    keep = [j for j in range(dataset.n_columns) if dataset.columns[j].name not in set(dropped)]
    out = dataset.with_features(
        dataset.features[:, keep], [dataset.columns[j] for j in keep], step="drop_duplicates"
    )
    return out, sorted(dropped)


def indicator_name(source: str, existing) -> str:
    name = source + INDICATOR_SUFFIX
    if name not in existing:
        return name
    name += "_2"
    if name in existing:
        raise DataError(f"indicator name collision for column {source!r}")
    return name


def add_missing_indicators(dataset: SurvivalDataset) -> SurvivalDataset:
    """Append one 0/1 column per numeric column that has at least one missing cell."""
    _check_step(dataset, "add_missing_indicators")
    if any(c.is_indicator for c in dataset.columns):
        raise PipelineOrderError("missing indicators already present")
    existing = set(dataset.column_names)
    new_cols, new_meta = [], []
    for j, c in enumerate(dataset.columns):
        mask = np.isnan(dataset.features[:, j])
        if not mask.any():
            continue
        name = indicator_name(c.name, existing)
        existing.add(name)
        new_cols.append(mask.astype(float))
        new_meta.append(ColumnMeta(name, MISSING_INDICATOR, c.name, 0.0))
    if not new_cols:
        return dataset.with_features(dataset.features, step="add_missing_indicators")
    features = np.column_stack([dataset.features] + new_cols)
    return dataset.with_features(
        features, list(dataset.columns) + new_meta, step="add_missing_indicators"
    )


def drop_high_missingness(
    dataset: SurvivalDataset,
    threshold: float = DEFAULT_MISSINGNESS_THRESHOLD,
    keep_orphan_indicators: bool = False,
) -> tuple[SurvivalDataset, list[str]]:
    """Remove numeric columns whose missing fraction is ``>= threshold``.

    Returns the reduced dataset and the sorted names of the removed numeric
    columns. Their indicators go too unless ``keep_orphan_indicators``.
    """
    if not 0 < threshold <= 1:
        raise DataError(f"threshold must lie in (0, 1], got {threshold}")
    _check_step(dataset, "drop_high_missingness")
    dropped = {
        c.name for c in dataset.columns if not c.is_indicator and c.missing_fraction >= threshold
    }
    keep = []
    for j, c in enumerate(dataset.columns):
        if c.name in dropped:
            continue
        if c.is_indicator and c.source in dropped and not keep_orphan_indicators:
            continue
        keep.append(j)
    if not keep:
        raise DataError("every feature column exceeds the missingness threshold")
    columns = [dataset.columns[j] for j in keep]
    if keep_orphan_indicators:
        # an orphan indicator no longer has a numeric source; it becomes a plain 0/1 column
        columns = [
            replace(c, kind=NUMERIC, source=None) if c.is_indicator and c.source in dropped else c
            for c in columns
        ]
    out = dataset.with_features(dataset.features[:, keep], columns, step="drop_high_missingness")
    return out, sorted(dropped)


# ---------------------------------------------------------------------------
# resampling


def _events_of(data) -> np.ndarray:
    if isinstance(data, SurvivalDataset):
        return data.events
    return np.asarray(data, dtype=np.int64)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(data, train_fraction: float, seed: int) -> SplitPair:
    """Random train/test split preserving the event/censored proportions.

    Each stratum contributes ``round(train_fraction * size)`` rows (halves
    round up) to the training side.
    """
    if not 0 < train_fraction < 1:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    events = _events_of(data)
    strata = [np.flatnonzero(events == 1), np.flatnonzero(events == 0)]
    if strata[0].size < 2 or strata[1].size < 2:
        raise DataError("stratified split needs at least 2 events and 2 censored subjects")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for members in strata:
        perm = rng.permutation(members)
        n_train = _round_half_up(train_fraction * members.size)
        train.append(perm[:n_train])
        test.append(perm[n_train:])
    if train[0].size == 0 or test[0].size == 0:
        raise DataError("too few events to place at least one on each side of the split")
    return SplitPair(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)), seed)


def stratified_kfold(data, k: int, seed: int) -> list[SplitPair]:
    """Partition rows into ``k`` folds stratified by event status.

    Within a stratum the ``size % k`` leftover rows go to folds 0, 1, ... in
    ascending order.
    """
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    events = _events_of(data)
    n = events.shape[0]
    strata = [np.flatnonzero(events == 1), np.flatnonzero(events == 0)]
    for label, members in zip(("event", "censored"), strata):
        if members.size < k:
            raise DataError(f"{label} stratum has {members.size} rows, fewer than k={k}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    for members in strata:
        perm = rng.permutation(members)
        base, extra = divmod(members.size, k)
        sizes = [base + (1 if f < extra else 0) for f in range(k)]
        start = 0
        for f, size in enumerate(sizes):
            fold_of[perm[start:start + size]] = f
            start += size
    all_idx = np.arange(n)
    return [
        SplitPair(all_idx[fold_of != f], all_idx[fold_of == f], seed) for f in range(k)
    ]


def preprocess(dataset: SurvivalDataset, schema: SchemaConfig | None = None, dedupe: bool = True):
    """Run the label-free, whole-dataset steps in their fixed order.

    Returns ``(dataset, dropped)`` where ``dropped`` maps a step name to the
    column names it removed. Standardization and imputation happen later,
    per resampling partition.
    """
    schema = schema or SchemaConfig()
    out = normalize_missing(dataset, schema.na_synonyms)
    dropped = {}
    if dedupe:
        out, dropped["duplicates"] = drop_duplicate_columns(out)
    out = add_missing_indicators(out)
    out, dropped["missingness"] = drop_high_missingness(
        out, schema.missingness_threshold, schema.keep_orphan_indicators
    )
    return out, dropped


def write_csv(dataset: SurvivalDataset, path, time_column: str = "time",
              event_column: str = "event", na_token: str = "NA") -> None:
    """Write a dataset in the layout :func:`load_csv` reads (floats at full precision)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([time_column, event_column] + dataset.column_names)
        for i in range(dataset.n_rows):
            cells = [na_token if np.isnan(v) else repr(float(v)) for v in dataset.features[i]]
            writer.writerow([repr(float(dataset.times[i])), int(dataset.events[i])] + cells)
