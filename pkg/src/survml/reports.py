"""Report bundle files: CSV tables with a one-line schema header, plus run metadata.

Floats are written with ``repr`` so that reading a file back reproduces the
exact values and aggregates can be recomputed bit-for-bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .validation import NOT_TUNED, MCReport, NCVReport

SCHEMA_VERSION = 1
NA = "NA"

NCV_FOLDS = "ncv_folds.csv"
NCV_TABLE = "ncv_table.csv"
MC_EXPERIMENTS = "mc_experiments.csv"
MC_TABLE = "mc_table.csv"
IMPORTANCE = "importance.csv"
SUMMARY = "summary.md"
METADATA = "run_metadata.json"

NCV_FOLD_FIELDS = ["model", "fold", "seed", "status", "train_cindex", "inner_cv_cindex",
                   "test_cindex", "params", "error"]
NCV_TABLE_FIELDS = ["model", "outer_cv_test_cindex", "train_cindex", "inner_cv_cindex",
                    "n_folds", "n_failed"]
MC_EXPERIMENT_FIELDS = ["model", "experiment", "seed", "status", "test_cindex", "train_cindex",
                        "cv_cindex", "params", "error"]
MC_TABLE_FIELDS = ["model", "test_mean", "test_sd", "train_mean", "train_sd", "cv_mean", "cv_sd",
                   "n_experiments", "n_failed"]
IMPORTANCE_FIELDS = ["rank", "column", "importance", "sd"]


def fmt(value) -> str:
    if value is None:
        return NA
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return NA
    return repr(value)


def parse_float(token: str) -> float:
    return math.nan if token in (NA, NOT_TUNED, "") else float(token)


def _render(kind: str, fields: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(f"# survml {kind} v{SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _params(params: dict) -> str:
    return json.dumps(params, sort_keys=True) if params else NA


def ncv_files(reports: list[NCVReport]) -> dict[str, str]:
    fold_rows, table_rows = [], []
    for rep in reports:
        for e in rep.entries:
            cv = NOT_TUNED if (e.ok and e.cv_cindex is None) else fmt(e.cv_cindex)
            fold_rows.append([rep.model, e.index, e.seed, e.status, fmt(e.train_cindex), cv,
                              fmt(e.test_cindex), _params(e.params), e.error])
        agg = rep.aggregates()
        tuned = any(e.ok and e.cv_cindex is not None for e in rep.entries)
        table_rows.append([rep.model, fmt(agg["test"][0]), fmt(agg["train"][0]),
                           fmt(agg["cv"][0]) if tuned else NOT_TUNED,
                           len(rep.entries), rep.n_failed])
    return {
        NCV_FOLDS: _render("ncv_folds", NCV_FOLD_FIELDS, fold_rows),
        NCV_TABLE: _render("ncv_table", NCV_TABLE_FIELDS, table_rows),
    }


def mc_files(reports: list[MCReport]) -> dict[str, str]:
    exp_rows, table_rows = [], []
    for rep in reports:
        for e in rep.entries:
            cv = NOT_TUNED if (e.ok and e.cv_cindex is None) else fmt(e.cv_cindex)
            exp_rows.append([rep.model, e.index, e.seed, e.status, fmt(e.test_cindex),
                             fmt(e.train_cindex), cv, _params(e.params), e.error])
        agg = rep.aggregates()
        tuned = any(e.ok and e.cv_cindex is not None for e in rep.entries)
        cv_mean, cv_sd = (fmt(agg["cv"][0]), fmt(agg["cv"][1])) if tuned else (NOT_TUNED, NOT_TUNED)
        table_rows.append([rep.model, fmt(agg["test"][0]), fmt(agg["test"][1]),
                           fmt(agg["train"][0]), fmt(agg["train"][1]), cv_mean, cv_sd,
                           len(rep.entries), rep.n_failed])
    return {
        MC_EXPERIMENTS: _render("mc_experiments", MC_EXPERIMENT_FIELDS, exp_rows),
        MC_TABLE: _render("mc_table", MC_TABLE_FIELDS, table_rows),
    }


def importance_file(ranking) -> dict[str, str]:
    rows = [[i + 1, name, fmt(score), fmt(ranking.sd[name])]
            for i, (name, score) in enumerate(ranking.entries)]
    return {IMPORTANCE: _render("importance", IMPORTANCE_FIELDS, rows)}


def _mean_sd(mean, sd, digits=3) -> str:
    if mean is None or math.isnan(mean):
        return NA
    if sd is None or math.isnan(sd):
        return f"{mean:.{digits}f}"
    return f"{mean:.{digits}f}({sd:.{digits}f})"


def summary_file(ncv: list[NCVReport], mc: list[MCReport]) -> dict[str, str]:
    """Human-readable tables laid out like the nested-CV and Monte Carlo result tables."""
    lines = []
    if ncv:
        lines += ["## Nested cross-validation", "",
                  "| Model | Outer-CV (test) cindex | Train cindex | Inner-CV cindex |",
                  "|---|---|---|---|"]
        for rep in ncv:
            agg = rep.aggregates()
            tuned = any(e.ok and e.cv_cindex is not None for e in rep.entries)
            inner = _mean_sd(agg["cv"][0], None) if tuned else NOT_TUNED
            lines.append(f"| {rep.model} | {_mean_sd(agg['test'][0], None)} | "
                         f"{_mean_sd(agg['train'][0], None)} | {inner} |")
        lines.append("")
    if mc:
        n = max(len(r.entries) for r in mc)
        lines += [f"## Monte Carlo validation ({n} experiments)", "",
                  "| Model | Test cindex mean(SD) | Train cindex mean(SD) | CV cindex mean(SD) |",
                  "|---|---|---|---|"]
        for rep in mc:
            agg = rep.aggregates()
            tuned = any(e.ok and e.cv_cindex is not None for e in rep.entries)
            cv = _mean_sd(*agg["cv"]) if tuned else NOT_TUNED
            lines.append(f"| {rep.model} | {_mean_sd(*agg['test'])} | {_mean_sd(*agg['train'])} | {cv} |")
        lines.append("")
    return {SUMMARY: "\n".join(lines)}


def metadata_file(metadata: dict) -> dict[str, str]:
    return {METADATA: json.dumps(metadata, indent=2, sort_keys=True) + "\n"}


# ---------------------------------------------------------------------------
# reading back


def read_table(path) -> tuple[str, list[dict]]:
    """Return ``(kind, rows)`` for a report CSV written by this module."""
    text = Path(path).read_text(encoding="utf-8")
    head, _, body = text.partition("\n")
    if not head.startswith("# survml "):
        raise ValueError(f"{path} lacks a survml schema header")
    kind = head.split()[2]
    rows = list(csv.DictReader(io.StringIO(body)))
    return kind, rows


def _recompute(rows, column) -> tuple[float, float]:
    values = [float(r[column]) for r in rows if r["status"] == "ok" and r[column] not in (NA, NOT_TUNED)]
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else math.nan


def _close(a: float, b: float, tol: float) -> bool:
    if math.isnan(a) and math.isnan(b):
        return True
    return abs(a - b) <= tol


def verify_bundle(directory, tol: float = 1e-12) -> list[str]:
    """Recompute every table aggregate from the per-entry files; return mismatches."""
    directory = Path(directory)
    problems = []
    if (directory / NCV_TABLE).exists():
        _, folds = read_table(directory / NCV_FOLDS)
        _, table = read_table(directory / NCV_TABLE)
        for row in table:
            own = [f for f in folds if f["model"] == row["model"]]
            if len(own) != int(row["n_folds"]):
                problems.append(f"ncv {row['model']}: fold count mismatch")
            for col, src in (("outer_cv_test_cindex", "test_cindex"), ("train_cindex", "train_cindex"),
                             ("inner_cv_cindex", "inner_cv_cindex")):
                if row[col] == NOT_TUNED:
                    continue
                if not _close(parse_float(row[col]), _recompute(own, src)[0], tol):
                    problems.append(f"ncv {row['model']}: {col} does not match fold entries")
    if (directory / MC_TABLE).exists():
        _, exps = read_table(directory / MC_EXPERIMENTS)
        _, table = read_table(directory / MC_TABLE)
        for row in table:
            own = [e for e in exps if e["model"] == row["model"]]
            if len(own) != int(row["n_experiments"]):
                problems.append(f"mc {row['model']}: experiment count mismatch")
            for prefix, src in (("test", "test_cindex"), ("train", "train_cindex"), ("cv", "cv_cindex")):
                if row[f"{prefix}_mean"] == NOT_TUNED:
                    continue
                mean, sd = _recompute(own, src)
                if not _close(parse_float(row[f"{prefix}_mean"]), mean, tol):
                    problems.append(f"mc {row['model']}: {prefix}_mean does not match experiments")
                if not _close(parse_float(row[f"{prefix}_sd"]), sd, tol):
                    problems.append(f"mc {row['model']}: {prefix}_sd does not match experiments")
    return problems
