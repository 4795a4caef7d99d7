"""Experiment configuration: one JSON document, paths relative to the file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .corpus import SplitSpec, fixture_outputs_path, fixture_root
from .errors import ConfigError
from .outfeature import ExecutorConfig
from .train import TrainConfig

FIXTURE = "@fixture"


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    synthetic: dict | None = None
    features: str | None = None
    split: SplitSpec = field(default_factory=SplitSpec)
    executor: ExecutorConfig = field(default_factory=ExecutorConfig)
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    vocab_max_size: int = 1024
    output_dir: str | None = None


def _resolve(value, base: Path):
    if value is None:
        return None
    if value == FIXTURE:
        return str(fixture_root())
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data, path.parent)


def config_from_dict(data: dict, base_dir=".") -> ExperimentConfig:
    base = Path(base_dir)
    known = {"dataset", "synthetic", "features", "split", "executor", "model", "train",
             "vocab_max_size", "output_dir"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    executor = dict(data.get("executor", {}))
    if executor.get("fixtures_file") == FIXTURE:
        executor["fixtures_file"] = str(fixture_outputs_path())
    try:
        split = SplitSpec(**data.get("split", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad split config: {exc}") from exc
    cfg = ExperimentConfig(
        dataset=_resolve(data.get("dataset"), base),
        synthetic=data.get("synthetic"),
        features=_resolve(data.get("features"), base),
        split=split,
        executor=ExecutorConfig.from_dict(executor, base),
        model=dict(data.get("model", {})),
        train=TrainConfig.from_dict(data.get("train", {})),
        vocab_max_size=int(data.get("vocab_max_size", 1024)),
        output_dir=_resolve(data.get("output_dir"), base),
    )
    if cfg.dataset is None and cfg.synthetic is None:
        raise ConfigError("config needs either 'dataset' or 'synthetic'")
    return cfg


def with_train_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if not overrides:
        return cfg
    try:
        return replace(cfg, train=replace(cfg.train, **overrides))
    except (TypeError, ConfigError) as exc:
        raise ConfigError(f"bad override: {exc}") from exc
