"""Declarative run configuration: one YAML document, strict keys, CLI overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .data import AugmentationConfig, Role, SyntheticConfig
from .metrics import EvalConfig
from .model import ModelConfig
from .objective import LossWeights
from .trainer import TrainConfig

PRECISIONS = ("float64", "float32")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sample_temperature: float = 0.8
    synth: SyntheticConfig = field(default_factory=SyntheticConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    precision: str = "float64"
    split_ratio: float = 0.8
    split_seed: int = 0

    def __post_init__(self):
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {PRECISIONS}")

    def torch_dtype(self):
        import torch

        return torch.float64 if self.precision == "float64" else torch.float32

    def to_dict(self) -> dict:
        d = {
            "model": self.model.to_dict(),
            "train": _train_to_dict(self.train),
            "synth": _synth_to_dict(self.synth),
            "eval": dataclasses.asdict(self.eval),
            "sample_temperature": self.sample_temperature,
            "precision": self.precision,
            "split_ratio": self.split_ratio,
            "split_seed": self.split_seed,
        }
        d["eval"]["horizons"] = list(self.eval.horizons)
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _check_keys(section: str, d: dict, allowed: set[str]) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown key(s) in {section}: {sorted(unknown)}")


def _build_flat(cls, d: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(section, d, names)
    return cls(**d)


def _build_train(d: dict) -> TrainConfig:
    d = dict(d)
    if "loss_weights" in d:
        d["loss_weights"] = _build_flat(LossWeights, d["loss_weights"], "train.loss_weights")
    if d.get("augmentation") is not None:
        aug = dict(d["augmentation"])
        if "spread_range" in aug:
            aug["spread_range"] = tuple(aug["spread_range"])
        d["augmentation"] = _build_flat(AugmentationConfig, aug, "train.augmentation")
    return _build_flat(TrainConfig, d, "train")


def _train_to_dict(cfg: TrainConfig) -> dict:
    d = dataclasses.asdict(cfg)
    if d.get("augmentation") is not None:
        d["augmentation"]["spread_range"] = list(d["augmentation"]["spread_range"])
    return d


def _build_synth(d: dict) -> SyntheticConfig:
    d = dict(d)
    if "concepts" in d:
        raise ValueError("synth.concepts cannot be set from a config file")
    if "speed_ranges" in d:
        d["speed_ranges"] = {
            int(Role.from_name(name)): tuple(rng) for name, rng in d["speed_ranges"].items()
        }
    return _build_flat(SyntheticConfig, d, "synth")


def _synth_to_dict(cfg: SyntheticConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d.pop("concepts", None)
    d["speed_ranges"] = {Role(k).name: list(v) for k, v in cfg.speed_ranges.items()}
    return d


def _build_eval(d: dict) -> EvalConfig:
    d = dict(d)
    if "horizons" in d:
        d["horizons"] = tuple(int(h) for h in d["horizons"])
    return _build_flat(EvalConfig, d, "eval")


_SECTION_BUILDERS = {
    "model": lambda d: ModelConfig.from_dict(d),
    "train": _build_train,
    "synth": _build_synth,
    "eval": _build_eval,
}


def run_config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw or {})
    _check_keys("config", raw, {
        "model", "train", "synth", "eval",
        "sample_temperature", "precision", "split_ratio", "split_seed",
    })
    kwargs: dict[str, Any] = {}
    for section, builder in _SECTION_BUILDERS.items():
        if section in raw:
            kwargs[section] = builder(raw.pop(section) or {})
    kwargs.update(raw)
    return RunConfig(**kwargs)


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` overrides (values parsed as YAML)."""
    raw = dict(raw)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like section.key=value: {item!r}")
        dotted, value = item.split("=", 1)
        keys = dotted.strip().split(".")
        node = raw
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ValueError(f"override path {dotted!r} crosses a non-mapping value")
        node[keys[-1]] = yaml.safe_load(value)
    return raw


def load_run_config(path: Optional[str | Path] = None, overrides: Optional[list[str]] = None) -> RunConfig:
    raw: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config document must be a mapping")
    if overrides:
        raw = apply_overrides(raw, overrides)
    return run_config_from_dict(raw)
