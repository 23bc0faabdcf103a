"""Experiment configuration: one JSON file, four sections, full validation.

The file holds `seed`, `output_dir`, and the `dataset`, `model`, `train`,
and `eval` sections. Every key maps onto a field of the corresponding
component config; unknown keys are rejected with their dotted path, and
missing keys fall back to package defaults. Command-line overrides use the
same dotted paths. A short hash of the fully resolved settings identifies
the run in manifests.
"""

from __future__ import annotations

import hashlib
import json
import typing
from dataclasses import dataclass, fields

from .datagen import GeneratorConfig
from .errors import ConfigurationError, UsageError
from .model import ModelDims
from .training import VARIANTS, TrainConfig

HASH_LENGTH = 16

# train keys the file may not set directly; the runner supplies them
_TRAIN_LOCKED = ("variant", "seed")


@dataclass(frozen=True)
class ModelWidths:
    """Layer widths that do not depend on the dataset."""

    embed_dim: int = 32
    label_embed_dim: int = 32
    trunk_hidden: int = 64
    fuse_hidden: int = 64

    def dims(self, feature_dim: int, class_count: int) -> ModelDims:
        return ModelDims(
            feature_dim=feature_dim,
            class_count=class_count,
            embed_dim=self.embed_dim,
            label_embed_dim=self.label_embed_dim,
            trunk_hidden=self.trunk_hidden,
            fuse_hidden=self.fuse_hidden,
        )

    def validate(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigurationError(
                    f"model.{f.name} must be >= 1, got {getattr(self, f.name)}"
                )


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation knobs: curve resolution and the quality-band breakdown."""

    granularity: int = 200
    deciles: bool = True
    decile_groups: int = 10
    chunk_size: int = 512

    def validate(self) -> None:
        if self.granularity < 1:
            raise ConfigurationError(
                f"eval.granularity must be >= 1, got {self.granularity}"
            )
        if self.decile_groups < 1:
            raise ConfigurationError(
                f"eval.decile_groups must be >= 1, got {self.decile_groups}"
            )
        if self.chunk_size < 1:
            raise ConfigurationError(
                f"eval.chunk_size must be >= 1, got {self.chunk_size}"
            )


# Built-in defaults; a config file only needs the keys it wants to change.
# Every variant gets the same step budget. The cleaner-bearing variants use
# a larger batch because their label-repair gradients come from only the
# verified tenth of each mixed batch and need the extra rows to stay stable.
DEFAULTS: dict = {
    "seed": 0,
    "output_dir": "runs/default",
    "dataset": {},
    "model": {},
    "train": {
        "variants": {
            "baseline": {"batch_size": 256, "max_steps": 8000},
            "ft_clean": {"batch_size": 256, "max_steps": 8000},
            "ft_mixed": {"batch_size": 256, "max_steps": 8000},
            "ours_pretrained": {
                "batch_size": 512,
                "pretrain_steps": 2000,
                "max_steps": 8000,
            },
            "ours_joint": {"batch_size": 512, "max_steps": 8000},
        },
    },
    "eval": {},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved settings for one experiment run."""

    seed: int
    output_dir: str
    dataset: GeneratorConfig
    model: ModelWidths
    train_shared: dict
    train_variants: dict
    eval: EvalConfig

    def train_config(self, variant: str, seed: int | None = None) -> TrainConfig:
        """Effective optimizer settings for one variant."""
        if variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {variant!r}, expected one of {', '.join(VARIANTS)}"
            )
        merged = dict(self.train_shared)
        merged.update(self.train_variants.get(variant, {}))
        return TrainConfig(
            variant=variant,
            seed=self.seed if seed is None else seed,
            **merged,
        )

    def normalized(self) -> dict:
        """Canonical dict with every effective value materialized."""
        train = {}
        for variant in VARIANTS:
            cfg = self.train_config(variant)
            train[variant] = {
                f.name: getattr(cfg, f.name)
                for f in fields(TrainConfig)
                if f.name not in _TRAIN_LOCKED
            }
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset": {f.name: getattr(self.dataset, f.name) for f in fields(GeneratorConfig)},
            "model": {f.name: getattr(self.model, f.name) for f in fields(ModelWidths)},
            "train": train,
            "eval": {f.name: getattr(self.eval, f.name) for f in fields(EvalConfig)},
        }

    def hash(self) -> str:
        blob = json.dumps(self.normalized(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:HASH_LENGTH]


def _field_types(cls) -> dict:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


def _check_leaf(value, expected, path: str):
    """Type-check one setting; ints pass for floats, bools never do."""
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(
                f"{path}: expected true/false, got {type(value).__name__}"
            )
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(
                f"{path}: expected an integer, got {type(value).__name__}"
            )
        return value
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(
                f"{path}: expected a number, got {type(value).__name__}"
            )
        return float(value)
    if expected is str:
        if not isinstance(value, str):
            raise ConfigurationError(
                f"{path}: expected a string, got {type(value).__name__}"
            )
        return value
    raise ConfigurationError(f"{path}: unsupported setting type {expected!r}")


def _check_section(raw, types: dict, path: str, skip: tuple = ()) -> dict:
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: expected a mapping")
    out = {}
    for key, value in raw.items():
        where = f"{path}.{key}"
        if key in skip or key not in types:
            raise ConfigurationError(f"unknown setting {where}")
        out[key] = _check_leaf(value, types[key], where)
    return out


def _merge(base: dict, extra: dict) -> dict:
    """Nested dict merge; extra wins on leaves."""
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def parse_override(text: str) -> tuple:
    """Split 'dotted.path=value'; the value parses as JSON or stays a string."""
    if "=" not in text:
        raise UsageError(f"override {text!r} must look like key.path=value")
    path, _, raw = text.partition("=")
    path = path.strip()
    if not path:
        raise UsageError(f"override {text!r} has an empty key path")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def _apply_override(raw: dict, path: str, value) -> None:
    keys = path.split(".")
    node = raw
    for key in keys[:-1]:
        nxt = node.get(key)
        if nxt is None:
            nxt = node[key] = {}
        elif not isinstance(nxt, dict):
            raise ConfigurationError(
                f"override {path}: {key} is a single setting, not a section"
            )
        node = nxt
    node[keys[-1]] = value


def build_config(raw: dict | None = None, overrides=()) -> ExperimentConfig:
    """Resolve a raw settings dict (plus overrides) against the defaults.

    Precedence, highest first: per-variant user settings, shared user
    settings, the package's per-variant defaults, field defaults. A shared
    key the user sets therefore displaces the built-in per-variant value.
    """
    user = _merge({}, raw or {})
    for text in overrides:
        path, value = parse_override(text)
        _apply_override(user, path, value)

    known_top = ("seed", "output_dir", "dataset", "model", "train", "eval")
    for key in user:
        if key not in known_top:
            raise ConfigurationError(f"unknown setting {key}")

    seed = _check_leaf(user.get("seed", DEFAULTS["seed"]), int, "seed")
    if seed < 0:
        raise ConfigurationError(f"seed must be >= 0, got {seed}")
    output_dir = _check_leaf(
        user.get("output_dir", DEFAULTS["output_dir"]), str, "output_dir"
    )
    if not output_dir:
        raise ConfigurationError("output_dir must not be empty")

    dataset = GeneratorConfig(
        **_check_section(
            _merge(DEFAULTS["dataset"], user.get("dataset", {})),
            _field_types(GeneratorConfig),
            "dataset",
        )
    )
    model = ModelWidths(
        **_check_section(
            _merge(DEFAULTS["model"], user.get("model", {})),
            _field_types(ModelWidths),
            "model",
        )
    )

    train_raw = user.get("train", {})
    if not isinstance(train_raw, dict):
        raise ConfigurationError("train: expected a mapping")
    train_types = _field_types(TrainConfig)
    variants_raw = train_raw.get("variants", {})
    if not isinstance(variants_raw, dict):
        raise ConfigurationError("train.variants: expected a mapping")
    shared = _check_section(
        {k: v for k, v in train_raw.items() if k != "variants"},
        train_types,
        "train",
        skip=_TRAIN_LOCKED,
    )
    per_variant = {}
    for name, section in variants_raw.items():
        if name not in VARIANTS:
            raise ConfigurationError(
                f"unknown setting train.variants.{name}; variants are "
                f"{', '.join(VARIANTS)}"
            )
        per_variant[name] = _check_section(
            section, train_types, f"train.variants.{name}", skip=_TRAIN_LOCKED
        )
    for name, section in DEFAULTS["train"]["variants"].items():
        merged = {k: v for k, v in section.items() if k not in shared}
        merged.update(per_variant.get(name, {}))
        per_variant[name] = merged

    eval_cfg = EvalConfig(
        **_check_section(
            _merge(DEFAULTS["eval"], user.get("eval", {})),
            _field_types(EvalConfig),
            "eval",
        )
    )

    config = ExperimentConfig(
        seed=seed,
        output_dir=output_dir,
        dataset=dataset,
        model=model,
        train_shared=shared,
        train_variants=per_variant,
        eval=eval_cfg,
    )
    config.dataset.validate()
    config.model.validate()
    config.eval.validate()
    for variant in VARIANTS:
        config.train_config(variant).validate()
    return config


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read a JSON settings file and resolve it."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path}: top level must be a mapping")
    return build_config(raw, overrides)
