"""Experiment configuration: a YAML file mapped onto validated
dataclasses, with strict unknown-key detection and stable hashing for
resume checks."""

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .augment import AugmentationPolicy
from .backbones import BackboneConfig
from .data.types import SynthConfig, TextureParams


class ConfigError(ValueError):
    pass


def _coerce(value, hint):
    """Convert YAML-native values (lists, dicts) onto the field types."""
    if dataclasses.is_dataclass(hint) and isinstance(value, dict):
        return _build(hint, value, hint.__name__)
    origin = typing.get_origin(hint)
    if origin is tuple and isinstance(value, list):
        return tuple(value)
    if origin is typing.Union or type(hint).__name__ == "UnionType":
        for arg in typing.get_args(hint):
            if arg is type(None):
                continue
            if dataclasses.is_dataclass(arg) and isinstance(value, dict):
                return _build(arg, value, arg.__name__)
            if typing.get_origin(arg) is tuple and isinstance(value, list):
                return tuple(value)
        return value
    return value


def _build(cls, raw: dict, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(raw).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}; "
                          f"valid keys are {sorted(known)}")
    kwargs = {}
    for name, value in raw.items():
        kwargs[name] = _coerce(value, known[name].type)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass
class StageToggles:
    pretrain: bool = True
    roi_finetune: bool = True
    multiscale: bool = True


@dataclass
class DatasetConfig:
    """Either a synthetic generator config or a path to an existing
    dataset manifest; exactly one must be set."""

    synthetic: SynthConfig | None = None
    manifest: str | None = None

    def __post_init__(self):
        if (self.synthetic is None) == (self.manifest is None):
            raise ConfigError(
                "dataset: set exactly one of 'synthetic' or 'manifest'")


@dataclass
class PretrainStageConfig:
    steps: int = 60
    batch_size: int = 12
    learning_rate: float = 3e-3
    projector_hidden: int = 512
    projector_dim: int = 512
    augment: AugmentationPolicy = field(default_factory=AugmentationPolicy)

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 2:
            raise ConfigError("pretrain: steps >= 1 and batch_size >= 2 required")


@dataclass
class FinetuneStageConfig:
    mode: str = "probe"
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.mode not in ("probe", "full"):
            raise ConfigError("finetune.mode must be 'probe' or 'full'")


@dataclass
class MultiscaleStageConfig:
    gammas: list[float] = field(default_factory=lambda: [0.5])
    epochs: int = 40
    batch_size: int = 8
    learning_rate: float = 3e-4
    depth: int = 12
    hidden: int = 72
    heads: int = 8
    ffn: int = 288

    def __post_init__(self):
        if isinstance(self.gammas, (int, float)):
            self.gammas = [float(self.gammas)]
        self.gammas = [float(g) for g in self.gammas]
        if not self.gammas:
            raise ConfigError("multiscale.gammas must not be empty")
        for g in self.gammas:
            if not 0.0 <= g <= 1.0:
                raise ConfigError(f"multiscale gamma {g} outside [0, 1]")


@dataclass
class EvaluateStageConfig:
    threshold: float = 0.5
    tune_threshold: bool = False


@dataclass
class ReportStageConfig:
    roc_plots: bool = True


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig
    output_dir: str = "runs/experiment"
    seed: int = 0
    k: int = 5
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    stages: StageToggles = field(default_factory=StageToggles)
    pretrain: PretrainStageConfig = field(default_factory=PretrainStageConfig)
    finetune: FinetuneStageConfig = field(default_factory=FinetuneStageConfig)
    multiscale: MultiscaleStageConfig = field(default_factory=MultiscaleStageConfig)
    evaluate: EvaluateStageConfig = field(default_factory=EvaluateStageConfig)
    report: ReportStageConfig = field(default_factory=ReportStageConfig)

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if self.dataset.manifest is not None and \
                not Path(self.dataset.manifest).exists():
            raise ConfigError(f"dataset.manifest path does not exist: "
                              f"{self.dataset.manifest}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    if "dataset" not in raw:
        raise ConfigError("config requires a 'dataset' section")
    # convenience: a bare multiscale 'gamma' scalar becomes the sweep list
    ms = raw.get("multiscale")
    if isinstance(ms, dict) and "gamma" in ms:
        ms = dict(ms)
        ms["gammas"] = [ms.pop("gamma")]
        raw = {**raw, "multiscale": ms}
    return _build(ExperimentConfig, raw, "config")


def load_config(path) -> ExperimentConfig:
    raw = yaml.safe_load(Path(path).read_text())
    if raw is None:
        raise ConfigError(f"{path}: empty config")
    return config_from_dict(raw)


def effective_config(config: ExperimentConfig) -> dict:
    """Fully-defaulted view of the configuration as plain data."""

    def to_plain(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: to_plain(getattr(obj, f.name))
                    for f in dataclasses.fields(obj)}
        if isinstance(obj, (list, tuple)):
            return [to_plain(v) for v in obj]
        return obj

    return to_plain(config)


def config_hash(config: ExperimentConfig) -> str:
    canon = json.dumps(effective_config(config), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def dump_effective_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(effective_config(config), sort_keys=False)
