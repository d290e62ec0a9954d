"""Versioned YAML run configuration.

Layout::

    schema_version: 1
    experiment: demo
    seed: 0
    output_dir: runs
    dataset:
      synthetic: {num_series: 20, length: 400, kind: sine_mix, noise: 0.1}
      # or: path: data.csv, schema: wide
      name: synthetic
      context_length: 32
      standardization: per_window
      split_axis: time
      description: null      # text fed to the text encoder
    model: {...}             # ModelConfig fields
    train: {...}             # TrainConfig fields
    ablation: {seeds: [0], levels: null, components: [tsfm, vision, text]}

Every randomness consumer derives its stream from the root ``seed`` through
a named child (``trainable``, ``series_split``, ``train``, ``synth.<kind>``,
``dominick``, ``data_fraction``). The frozen backbone uses
``model.backbone_seed`` instead, standing in for a fixed checkpoint.
"""

import copy
import typing
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .data import DATASETS, SeriesCollection, SplitAxis, Standardization, load_collection
from .encoders import describe
from .errors import ConfigError
from .model import ModelConfig
from .synth import SynthSpec, generate
from .training import TrainConfig

SCHEMA_VERSION = 1
TOP_KEYS = ("schema_version", "experiment", "seed", "output_dir", "dataset", "model", "train", "ablation")


@dataclass
class DatasetSection:
    path: str = None
    schema: str = None
    synthetic: dict = None
    name: str = None
    context_length: int = None
    standardization: str = None
    split_axis: str = None
    description: str = None


@dataclass
class AblationSection:
    seeds: list = None  # defaults to [seed]
    levels: list = None
    components: list = field(default_factory=lambda: ["tsfm", "vision", "text"])


@dataclass
class RunConfig:
    dataset: DatasetSection
    model: ModelConfig
    train: TrainConfig
    ablation: AblationSection
    experiment: str = "run"
    seed: int = 0
    output_dir: str = "runs"
    schema_version: int = SCHEMA_VERSION
    base_dir: Path = field(default=Path("."), compare=False)

    def to_dict(self):
        d = {
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset": asdict(self.dataset),
            "model": asdict(self.model),
            "train": asdict(self.train),
            "ablation": asdict(self.ablation),
        }
        return d

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    # -------------------------------------------------------------- data

    def dataset_path(self):
        p = Path(self.dataset.path)
        return p if p.is_absolute() else self.base_dir / p

    def load_collection(self):
        ds = self.dataset
        overrides = {}
        if ds.context_length:
            overrides["context_length"] = ds.context_length
        if ds.standardization:
            overrides["standardization"] = ds.standardization
        if ds.split_axis:
            overrides["split_axis"] = ds.split_axis
        if ds.synthetic is not None:
            values = generate(SynthSpec(**ds.synthetic))
            return SeriesCollection.for_dataset(ds.name or "synthetic", values, **overrides)
        return load_collection(self.dataset_path(), ds.schema, ds.name, **overrides)

    def description(self):
        ds = self.dataset
        if ds.description:
            return ds.description
        return describe(ds.name or ("synthetic" if ds.synthetic is not None else "default"))


# ------------------------------------------------------------------ parsing


def _type_ok(value, tp):
    if value is None:
        return True
    origin = typing.get_origin(tp)
    if origin is not None:
        tp = origin
    if tp is bool:
        return isinstance(value, bool)
    if tp is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if tp is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if tp in (str, list, dict):
        return isinstance(value, tp)
    return True


def _build(cls, raw, section, required=()):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(raw).__name__}")
    known = {f.name: f for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown key")
    for key in required:
        if key not in raw:
            raise ConfigError(f"{section}.{key}: required")
    for key, value in raw.items():
        f = known[key]
        none_ok = f.default is None
        if value is None and not none_ok and f.default is not MISSING:
            raise ConfigError(f"{section}.{key}: must not be null")
        if not _type_ok(value, f.type):
            raise ConfigError(f"{section}.{key}: expected {getattr(f.type, '__name__', f.type)}, got {value!r}")
    try:
        return cls(**raw)
    except ConfigError as exc:
        raise ConfigError(f"{section}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def parse_config(raw, base_dir=".", check_files=True):
    """Validate a config mapping; messages name the offending field."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    raw = copy.deepcopy(raw)
    for key in raw:
        if key not in TOP_KEYS:
            raise ConfigError(f"{key}: unknown key")
    version = raw.get("schema_version")
    if version is None:
        raise ConfigError("schema_version: required")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")
    seed = raw.get("seed", 0)
    if not _type_ok(seed, int) or seed is None or seed < 0:
        raise ConfigError(f"seed: expected a non-negative integer, got {seed!r}")
    for key in ("experiment", "output_dir"):
        if key in raw and not isinstance(raw[key], str):
            raise ConfigError(f"{key}: expected a string")

    ds = _build(DatasetSection, raw.get("dataset"), "dataset")
    base_dir = Path(base_dir)
    if ds.synthetic is None and ds.path is None:
        raise ConfigError("dataset.path: required (or give dataset.synthetic)")
    if ds.synthetic is not None and ds.path is not None:
        raise ConfigError("dataset: give either path or synthetic, not both")
    if ds.synthetic is not None:
        syn = dict(ds.synthetic)
        syn.setdefault("seed", seed)
        ds.synthetic = asdict(_build(SynthSpec, syn, "dataset.synthetic"))
        if ds.context_length is None and (ds.name or "synthetic") not in DATASETS:
            raise ConfigError("dataset.context_length: required for synthetic data")
    elif check_files:
        p = Path(ds.path)
        p = p if p.is_absolute() else base_dir / p
        if not p.exists():
            raise ConfigError(f"dataset.path: file not found: {ds.path}")
    if ds.schema is not None and ds.schema not in ("wide", "long", "jsonl"):
        raise ConfigError(f"dataset.schema: expected wide, long or jsonl, got {ds.schema!r}")
    if ds.context_length is not None and ds.context_length < 1:
        raise ConfigError("dataset.context_length: must be >= 1")
    for key, enum_cls in (("standardization", Standardization), ("split_axis", SplitAxis)):
        value = getattr(ds, key)
        if value is not None:
            try:
                enum_cls(value)
            except ValueError:
                options = ", ".join(e.value for e in enum_cls)
                raise ConfigError(f"dataset.{key}: expected one of {options}, got {value!r}") from None

    model_raw = dict(raw.get("model") or {})
    context = ds.context_length or (DATASETS[ds.name].context_length if ds.name in DATASETS else None)
    if context is not None:
        if "context_length" in model_raw and model_raw["context_length"] != context:
            raise ConfigError(f"model.context_length: {model_raw['context_length']} disagrees with dataset "
                              f"context length {context}")
        model_raw["context_length"] = context
    model = _build(ModelConfig, model_raw, "model")

    train_raw = dict(raw.get("train") or {})
    train_raw.setdefault("seed", seed)
    train = _build(TrainConfig, train_raw, "train")
    ablation = _build(AblationSection, raw.get("ablation"), "ablation")
    if ablation.seeds is None:
        ablation.seeds = [seed]
    return RunConfig(ds, model, train, ablation, raw.get("experiment", "run"), seed,
                     raw.get("output_dir", "runs"), version, base_dir)


def load_config(path, seed=None, check_files=True):
    """Read and validate a YAML file; ``seed`` overrides the root seed."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if seed is not None and isinstance(raw, dict):
        raw["seed"] = seed
    return parse_config(raw, path.parent, check_files)
