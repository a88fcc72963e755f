"""Command-line front end: ``survml run | importance | synth | check-config``."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import logging
import shutil
import sys
from pathlib import Path

from . import __version__, reports
from .config import RunConfig, load_config
from .dataset import SurvivalDataset, load_csv, preprocess, write_csv
from .errors import ConfigError, DataError, FitError, SurvmlError
from .impute import fit_preprocessor
from .rsf import fit_rsf, permutation_importance
from .seeding import derive_seed
from .synth import FORMS, SynthSpec, generate
from .validation import MODEL_KINDS, ModelSpec, monte_carlo, nested_cv, tune

log = logging.getLogger("survml")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_FIT = 4

# sub-streams of the master seed used outside the resampling protocols
_IMPORTANCE_TUNE, _IMPORTANCE_FOREST, _IMPORTANCE_PERMUTE = 3, 4, 5


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _resolve(config_path, out=None, seed=None, jobs=None, models=None) -> RunConfig:
    cfg = load_config(config_path)
    changes = {}
    if out is not None:
        changes["output"] = Path(out)
    if seed is not None:
        changes["seed"] = int(seed)
    if jobs is not None:
        if jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        changes["jobs"] = int(jobs)
    if models is not None:
        wanted = [m.strip() for m in models.split(",") if m.strip()]
        unknown = sorted(set(wanted) - set(MODEL_KINDS))
        if unknown:
            raise ConfigError(f"unknown models in --models: {unknown}")
        missing = sorted(set(wanted) - set(cfg.models))
        if missing:
            raise ConfigError(f"--models names models absent from the config: {missing}")
        changes["models"] = {k: v for k, v in cfg.models.items() if k in wanted}
        if not changes["models"]:
            raise ConfigError("--models selects no model")
    return dataclasses.replace(cfg, **changes)


def _load(cfg: RunConfig) -> tuple[SurvivalDataset, dict]:
    raw = load_csv(cfg.input, cfg.schema)
    data, dropped = preprocess(raw, cfg.schema, dedupe=cfg.drop_duplicates)
    log.info("loaded %d rows; %d columns after preprocessing (mtry grid is built on this count)",
             data.n_rows, data.n_columns)
    return data, dropped


def _write_bundle(out: Path, files: dict[str, str]) -> None:
    """Write every file into a staging directory, then swap it into place."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = out.with_name(out.name + ".partial")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir()
    try:
        for name, text in files.items():
            (staging / name).write_text(text, encoding="utf-8")
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    staging.rename(out)


def _importance(cfg: RunConfig, data: SurvivalDataset):
    spec = next((s for s in cfg.model_specs() if s.kind == "rsf"), None)
    if spec is None:
        raise ConfigError("importance needs an rsf model in the config")
    imp = cfg.importance
    if imp.mtry is not None and imp.min_node_size is not None:
        params = {"mtry": imp.mtry, "min_node_size": imp.min_node_size}
        source = "configured"
    else:
        tuned = tune(spec, data, cfg.validation.inner_k, derive_seed(cfg.seed, _IMPORTANCE_TUNE),
                     cfg.knn_k)
        params = tuned.best_params
        if imp.mtry is not None:
            params["mtry"] = imp.mtry
        if imp.min_node_size is not None:
            params["min_node_size"] = imp.min_node_size
        source = "tuned"
    n_trees = imp.n_trees or spec.options["n_trees"]
    pre = fit_preprocessor(data, cfg.knn_k)
    full = pre.transform(data)
    forest = fit_rsf(full, params["mtry"], params["min_node_size"], n_trees=n_trees,
                     seed=derive_seed(cfg.seed, _IMPORTANCE_FOREST))
    ranking = permutation_importance(forest, full, imp.n_repeats,
                                     seed=derive_seed(cfg.seed, _IMPORTANCE_PERMUTE))
    meta = {"params": params, "params_source": source, "n_trees": n_trees,
            "n_repeats": imp.n_repeats, "oob_baseline_cindex": ranking.baseline_cindex}
    return ranking, meta


def _metadata(cfg: RunConfig, data: SurvivalDataset, dropped: dict) -> dict:
    return {
        "survml_version": __version__,
        "config_sha256": cfg.sha256(),
        "config": cfg.fingerprint(),
        "seed": cfg.seed,
        "input_file": cfg.input.name,
        "input_sha256": _file_sha256(cfg.input),
        "n_rows": data.n_rows,
        "n_events": data.n_events,
        "n_columns": data.n_columns,
        "columns": data.column_names,
        "dropped_columns": dropped,
    }


def cmd_run(config_path, out=None, seed=None, jobs=None, models=None) -> Path:
    """Run every configured protocol for every configured model and write the bundle.

    Raises :class:`FitError` after writing a bundle marked incomplete if any
    model failed on every partition of a protocol.
    """
    cfg = _resolve(config_path, out, seed, jobs, models)
    data, dropped = _load(cfg)
    specs = cfg.model_specs()
    v = cfg.validation
    ncv, mc = [], []
    for spec in specs:
        if "ncv" in v.protocols:
            log.info("nested CV: %s", spec.kind)
            ncv.append(nested_cv(spec, data, v.outer_k, v.inner_k, cfg.seed, cfg.knn_k, cfg.jobs))
        if "mc" in v.protocols:
            log.info("Monte Carlo: %s", spec.kind)
            mc.append(monte_carlo(spec, data, v.n_experiments, v.train_fraction, v.inner_k,
                                  cfg.seed, cfg.knn_k, cfg.jobs))

    files: dict[str, str] = {}
    if ncv:
        files.update(reports.ncv_files(ncv))
    if mc:
        files.update(reports.mc_files(mc))
    files.update(reports.summary_file(ncv, mc))
    meta = _metadata(cfg, data, dropped)
    if cfg.importance.enabled and "rsf" in cfg.models:
        ranking, meta["importance"] = _importance(cfg, data)
        files.update(reports.importance_file(ranking))

    dead = [f"{r.model} ({name})" for name, group in (("ncv", ncv), ("mc", mc))
            for r in group if r.n_failed == len(r.entries)]
    meta["failed_entries"] = {f"{name}:{r.model}": r.n_failed
                              for name, group in (("ncv", ncv), ("mc", mc)) for r in group}
    meta["complete"] = not dead
    files.update(reports.metadata_file(meta))
    _write_bundle(cfg.output, files)
    if dead:
        raise FitError(f"every partition failed for: {', '.join(dead)}")
    return cfg.output


def cmd_importance(config_path, out=None, seed=None) -> Path:
    """Fit one forest on the full preprocessed data and write the ranked importance file."""
    cfg = _resolve(config_path, out, seed)
    data, dropped = _load(cfg)
    ranking, imp_meta = _importance(cfg, data)
    meta = _metadata(cfg, data, dropped)
    meta["importance"] = imp_meta
    meta["complete"] = True
    files = reports.importance_file(ranking)
    files.update(reports.metadata_file(meta))
    _write_bundle(cfg.output, files)
    return cfg.output


def cmd_synth(out, n, p, beta=(), seed=0, shape=1.5, scale=10.0, censor_rate=0.3,
              missing_rate=0.0, form="linear") -> Path:
    ds = generate(SynthSpec(n=n, p=p, beta_true=tuple(beta), shape=shape, scale=scale,
                            censor_rate_target=censor_rate, missing_rate=missing_rate,
                            seed=seed, form=form))
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, out)
    return out


def cmd_check_config(config_path, seed=None, models=None) -> RunConfig:
    """Validate the config and the input's schema without fitting anything."""
    cfg = _resolve(config_path, seed=seed, models=models)
    data, dropped = _load(cfg)
    for spec in cfg.model_specs():
        spec.combinations(data.n_columns)
    return cfg


# ---------------------------------------------------------------------------


def _beta(text: str) -> list[float]:
    try:
        return [float(b) for b in text.split(",") if b.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid coefficient list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="survml", description=__doc__)
    parser.add_argument("--version", action="version", version=f"survml {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_out=True, with_jobs=True, with_models=True):
        p.add_argument("--config", required=True, help="YAML run configuration")
        if with_out:
            p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        if with_jobs:
            p.add_argument("--jobs", type=int, help="parallel worker processes")
        if with_models:
            p.add_argument("--models", help="comma-separated subset of configured models")

    common(sub.add_parser("run", help="nested CV and Monte Carlo validation"))
    common(sub.add_parser("importance", help="RSF permutation importance on the full data"),
           with_jobs=False, with_models=False)
    common(sub.add_parser("check-config", help="validate a config and its input"),
           with_out=False, with_jobs=False)

    s = sub.add_parser("synth", help="write a synthetic cohort CSV")
    s.add_argument("--out", required=True, help="CSV path to write")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--beta", type=_beta, default=[], help="comma-separated true coefficients")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--shape", type=float, default=1.5)
    s.add_argument("--scale", type=float, default=10.0)
    s.add_argument("--censor-rate", type=float, default=0.3)
    s.add_argument("--missing-rate", type=float, default=0.0)
    s.add_argument("--form", choices=FORMS, default="linear")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            path = cmd_run(args.config, args.out, args.seed, args.jobs, args.models)
            print(f"wrote {path}")
        elif args.command == "importance":
            path = cmd_importance(args.config, args.out, args.seed)
            print(f"wrote {path}")
        elif args.command == "check-config":
            cfg = cmd_check_config(args.config, args.seed, args.models)
            print(f"config ok: {cfg.input.name}, models {sorted(cfg.models)}, seed {cfg.seed}")
        else:
            path = cmd_synth(args.out, args.n, args.p, args.beta, args.seed, args.shape,
                             args.scale, args.censor_rate, args.missing_rate, args.form)
            print(f"wrote {path}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FitError as exc:
        print(f"fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT
    except SurvmlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK
