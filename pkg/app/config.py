import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml
from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import DataError, UsageError
from .schemas import (
    CameraGeometry,
    ConsistencyConfig,
    CorpusSpec,
    EvalConfig,
    NetworkSpec,
    PairwiseModel,
    SelfTrainConfig,
    TrainConfig,
)


class Settings(BaseSettings):
    seed: int = 0
    jobs: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    output_dir: Path = Path("runs")
    verbosity: int = Field(1, ge=0)

    corpus: CorpusSpec = CorpusSpec()
    network: NetworkSpec = NetworkSpec()
    train: TrainConfig = TrainConfig()
    selftrain: SelfTrainConfig = SelfTrainConfig()
    consistency: ConsistencyConfig = ConsistencyConfig()
    pairwise: PairwiseModel = PairwiseModel()
    census_pairwise: PairwiseModel = PairwiseModel(p1=1.0, p2_base=8.0, edge_sensitivity=10.0)
    census_window: int = Field(5, ge=1)
    camera: CameraGeometry = CameraGeometry()
    evaluation: EvalConfig = EvalConfig()

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="SELFSTEREO_",
        env_nested_delimiter="__",
        extra="ignore",
    )

    @model_validator(mode="after")
    def _seed_training(self) -> "Settings":
        # training sections follow the global seed unless they name their own
        if "seed" not in self.train.model_fields_set:
            self.train = self.train.model_copy(update={"seed": self.seed})
        inner = self.selftrain.train
        if "seed" not in inner.model_fields_set:
            self.selftrain = self.selftrain.model_copy(update={"train": inner.model_copy(update={"seed": self.seed})})
        return self


def _nest(overrides: Mapping[str, Any]) -> Dict[str, Any]:
    # "train.learning_rate" -> {"train": {"learning_rate": ...}}; None means "flag not given"
    nested: Dict[str, Any] = {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = nested
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return nested


def _merge(base: Dict[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _merge(dict(merged[key]), value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> Settings:
    """Resolve the run configuration: flags > config file > environment > defaults."""
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise DataError(f"cannot read config file {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise DataError(f"config file {path} must hold a mapping")
    data = _merge(data, _nest(overrides or {}))
    try:
        return Settings(**data)
    except ValidationError as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def dump_config(config: Settings, path: Optional[Path] = None) -> str:
    text = yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True)
    if path is not None:
        Path(path).write_text(text)
    return text


settings = Settings()
