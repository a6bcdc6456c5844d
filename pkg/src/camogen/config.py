"""Flat YAML run configuration mapped onto TrainConfig, LossWeights and ModelSpecs."""
from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

import yaml

from .losses import DEFAULT_LAYER_SET, LossWeights
from .netarch import ClassifierSpec, DiscriminatorSpec, GeneratorSpec
from .trainloop import ModelSpecs, TrainConfig


class ConfigError(ValueError):
    pass


# key -> (type, default); desk_mode swaps in DESK_DEFAULTS for unset keys
SCHEMA: dict[str, tuple[type, Any]] = {
    "image_size": (int, 512),
    "batch_size": (int, 16),
    "lr": (float, 2e-4),
    "total_epochs": (int, 400),
    "constant_epochs": (int, 100),
    "seed": (int, 0),
    "adam_beta1": (float, 0.5),
    "adam_beta2": (float, 0.999),
    "lambda_fm": (float, 10.0),
    "lambda_vgg": (float, 10.0),
    "lambda_cam": (float, 1.0),
    "lambda_g": (float, 1.0),
    "n_scales": (int, 3),
    "base_width": (int, 64),
    "n_res_blocks": (int, 9),
    "n_downsample": (int, 3),
    "layers_per_scale": (int, 4),
    "classifier_scales": (int, 2),
    "vgg_width_div": (int, 1),
    "vgg_weights": (str, None),
    "layer_set": (list, list(DEFAULT_LAYER_SET)),
    "per_sample": (int, 1),
    "desk_mode": (bool, False),
    "saturating_gan": (bool, False),
    "classifier_steps": (int, 2000),
    "save_every": (int, 10),
    "max_steps": (int, None),
}

DESK_DEFAULTS = {
    "image_size": 64, "batch_size": 4, "n_scales": 2, "base_width": 16,
    "n_res_blocks": 4, "vgg_width_div": 8, "classifier_steps": 200,
}


def _coerce(key: str, value):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    typ, default = SCHEMA[key]
    if value is None and default is None:
        return None
    if typ is bool:
        if isinstance(value, bool):
            return value
    elif typ is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif typ is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        # YAML 1.1 reads "1e-4" (no dot) as a string
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
    elif typ is str:
        if isinstance(value, str):
            return value
    elif typ is list:
        if isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            return value
    raise ConfigError(f"{key}: expected {typ.__name__}, got {value!r}")


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"malformed override {item!r}; expected key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"malformed override {item!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse value in {item!r}: {e}") from e
    return key, value


def effective_config(path=None, overrides=()) -> dict:
    """Merge defaults, file values and ``key=value`` overrides (in that order)."""
    given: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            loaded = yaml.safe_load(text) if text.strip() else {}
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        given.update(loaded)
    for item in overrides:
        k, v = parse_override(item)
        given[k] = v
    given = {k: _coerce(k, v) for k, v in given.items()}
    desk = given.get("desk_mode", False)
    cfg = {k: (DESK_DEFAULTS.get(k, d) if desk else d) for k, (_, d) in SCHEMA.items()}
    cfg.update(given)
    return cfg


def build_objects(cfg: dict) -> tuple[TrainConfig, LossWeights, ModelSpecs]:
    try:
        train = TrainConfig(**{f.name: cfg[f.name] for f in dataclasses.fields(TrainConfig) if f.name in cfg})
        weights = LossWeights(**{f.name: cfg[f.name] for f in dataclasses.fields(LossWeights)})
        specs = ModelSpecs(
            generator=GeneratorSpec(base_width=cfg["base_width"], n_downsample=cfg["n_downsample"],
                                    n_res_blocks=cfg["n_res_blocks"]),
            discriminator=DiscriminatorSpec(n_scales=cfg["n_scales"], layers_per_scale=cfg["layers_per_scale"],
                                            base_width=cfg["base_width"]),
            classifier=ClassifierSpec(n_scales=cfg["classifier_scales"], layers_per_scale=cfg["layers_per_scale"],
                                      base_width=cfg["base_width"]),
            vgg_width_div=cfg["vgg_width_div"], vgg_weights=cfg["vgg_weights"],
            layer_set=tuple(cfg["layer_set"]),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if cfg["image_size"] % specs.generator.factor:
        raise ConfigError(f"image_size {cfg['image_size']} not divisible by {specs.generator.factor}")
    return train, weights, specs


def load_config(path=None, overrides=()) -> tuple[TrainConfig, LossWeights, ModelSpecs]:
    return build_objects(effective_config(path, overrides))


def dump_config(cfg: dict, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg, sort_keys=True))
