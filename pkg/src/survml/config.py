"""Run configuration: a YAML file with a fixed, documented key set."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import yaml

from .dataset import SchemaConfig
from .errors import ConfigError, DataError
from .validation import MODEL_KINDS, ModelSpec

PROTOCOLS = ("ncv", "mc")

_TOP_KEYS = {"input", "seed", "output", "jobs", "schema", "preprocessing", "models",
             "validation", "importance"}
_PRE_KEYS = {"knn_k", "drop_duplicates"}
_VAL_KEYS = {"protocols", "outer_k", "inner_k", "n_experiments", "train_fraction"}
_IMP_KEYS = {"enabled", "n_repeats", "mtry", "min_node_size", "n_trees"}
_MODEL_KEYS = {
    "cox": set(),
    "coxnet": {"alphas", "lambdas"},
    "rsf": {"n_trees", "mtry", "min_node_size"},
}


@dataclass(frozen=True)
class ValidationConfig:
    protocols: tuple[str, ...] = PROTOCOLS
    outer_k: int = 3
    inner_k: int = 5
    n_experiments: int = 90
    train_fraction: float = 2 / 3


@dataclass(frozen=True)
class ImportanceConfig:
    enabled: bool = True
    n_repeats: int = 5
    mtry: int | None = None
    min_node_size: int | None = None
    n_trees: int | None = None


@dataclass(frozen=True)
class RunConfig:
    input: Path
    seed: int
    output: Path
    schema: SchemaConfig = field(default_factory=SchemaConfig)
    knn_k: int = 5
    drop_duplicates: bool = True
    models: dict = field(default_factory=dict)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    importance: ImportanceConfig = field(default_factory=ImportanceConfig)
    jobs: int = 1

    def model_specs(self) -> list[ModelSpec]:
        specs = []
        for kind in MODEL_KINDS:
            if kind not in self.models:
                continue
            opts = self.models[kind]
            if kind == "cox":
                specs.append(ModelSpec.cox())
            elif kind == "coxnet":
                specs.append(ModelSpec.coxnet(**{k: v for k, v in opts.items()}))
            else:
                kwargs = {}
                if "mtry" in opts:
                    kwargs["mtry"] = opts["mtry"]
                if "min_node_size" in opts:
                    kwargs["min_node_sizes"] = opts["min_node_size"]
                if "n_trees" in opts:
                    kwargs["n_trees"] = opts["n_trees"]
                specs.append(ModelSpec.rsf(**kwargs))
        return specs

    def fingerprint(self) -> dict:
        """Everything that can change results; excludes parallelism and output location."""
        return {
            "input": str(self.input.name),
            "seed": self.seed,
            "schema": asdict(self.schema),
            "knn_k": self.knn_k,
            "drop_duplicates": self.drop_duplicates,
            "models": self.models,
            "validation": asdict(self.validation),
            "importance": asdict(self.importance),
        }

    def sha256(self) -> str:
        blob = json.dumps(self.fingerprint(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


def _check_keys(section: str, mapping, allowed: set) -> dict:
    if mapping is None:
        return {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    return mapping


def _fraction(value) -> float:
    try:
        return float(Fraction(str(value)))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"invalid fraction {value!r}") from None


def _int_list(name, value) -> tuple[int, ...]:
    values = value if isinstance(value, (list, tuple)) else [value]
    try:
        return tuple(int(v) for v in values)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer or list of integers") from None


def _float_list(name, value) -> tuple[float, ...]:
    values = value if isinstance(value, (list, tuple)) else [value]
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number or list of numbers") from None


def parse_config(raw: dict, base_dir: Path = Path(".")) -> RunConfig:
    raw = _check_keys("top level", raw, _TOP_KEYS)
    for key in ("input", "seed", "output"):
        if key not in raw or raw[key] is None:
            raise ConfigError(f"missing required key {key!r}")
    if isinstance(raw["seed"], bool) or not isinstance(raw["seed"], int):
        raise ConfigError("seed must be an integer")

    try:
        schema = SchemaConfig.from_mapping(raw.get("schema") or {})
    except (DataError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if not 0 < schema.missingness_threshold <= 1:
        raise ConfigError("missingness_threshold must lie in (0, 1]")

    pre = _check_keys("preprocessing", raw.get("preprocessing"), _PRE_KEYS)
    knn_k = int(pre.get("knn_k", 5))
    if knn_k < 1:
        raise ConfigError("knn_k must be at least 1")

    models_raw = raw.get("models")
    if models_raw is None:
        models_raw = {k: {} for k in MODEL_KINDS}
    models_raw = _check_keys("models", models_raw, set(MODEL_KINDS))
    if not models_raw:
        raise ConfigError("at least one model must be configured")
    models = {}
    for kind, opts in models_raw.items():
        opts = dict(_check_keys(f"models.{kind}", opts or {}, _MODEL_KEYS[kind]))
        if kind == "coxnet":
            for key in ("alphas", "lambdas"):
                if key in opts:
                    opts[key] = _float_list(key, opts[key])
            if any(not 0 <= a <= 1 for a in opts.get("alphas", ())):
                raise ConfigError("coxnet alphas must lie in [0, 1]")
            if any(l <= 0 for l in opts.get("lambdas", ())):
                raise ConfigError("coxnet lambdas must be positive")
        if kind == "rsf":
            if opts.get("mtry") is not None:
                opts["mtry"] = _int_list("mtry", opts["mtry"])
            else:
                opts.pop("mtry", None)
            if "min_node_size" in opts:
                opts["min_node_size"] = _int_list("min_node_size", opts["min_node_size"])
            if "n_trees" in opts:
                opts["n_trees"] = int(opts["n_trees"])
                if opts["n_trees"] < 1:
                    raise ConfigError("n_trees must be at least 1")
        models[kind] = opts

    val = dict(_check_keys("validation", raw.get("validation"), _VAL_KEYS))
    protocols = tuple(val.get("protocols", PROTOCOLS))
    if not protocols or any(p not in PROTOCOLS for p in protocols):
        raise ConfigError(f"protocols must be drawn from {PROTOCOLS}")
    validation = ValidationConfig(
        protocols=tuple(p for p in PROTOCOLS if p in protocols),
        outer_k=int(val.get("outer_k", 3)),
        inner_k=int(val.get("inner_k", 5)),
        n_experiments=int(val.get("n_experiments", 90)),
        train_fraction=_fraction(val.get("train_fraction", "2/3")),
    )
    if validation.outer_k < 2 or validation.inner_k < 2:
        raise ConfigError("outer_k and inner_k must be at least 2")
    if validation.n_experiments < 1:
        raise ConfigError("n_experiments must be at least 1")
    if not 0 < validation.train_fraction < 1:
        raise ConfigError("train_fraction must lie in (0, 1)")

    imp = _check_keys("importance", raw.get("importance"), _IMP_KEYS)
    importance = ImportanceConfig(
        enabled=bool(imp.get("enabled", True)),
        n_repeats=int(imp.get("n_repeats", 5)),
        mtry=None if imp.get("mtry") is None else int(imp["mtry"]),
        min_node_size=None if imp.get("min_node_size") is None else int(imp["min_node_size"]),
        n_trees=None if imp.get("n_trees") is None else int(imp["n_trees"]),
    )

    jobs = int(raw.get("jobs", 1))
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return RunConfig(
        input=(base_dir / str(raw["input"])),
        seed=int(raw["seed"]),
        output=(base_dir / str(raw["output"])),
        schema=schema,
        knn_k=knn_k,
        drop_duplicates=bool(pre.get("drop_duplicates", True)),
        models=models,
        validation=validation,
        importance=importance,
        jobs=jobs,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must contain a mapping")
    return parse_config(raw, path.parent)
