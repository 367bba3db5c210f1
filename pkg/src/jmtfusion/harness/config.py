"""Run configuration, named presets and JSON loading."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..data import DatasetConfig
from ..errors import ConfigError
from ..fusion import MODEL_KINDS, FusionConfig

TASKS = ("regression_ccc", "binary_classification")
OPTIMIZERS = ("sgd", "adam")
BACKBONE_KINDS = ("temporal_conv", "flatten")
DEFAULT_LR_GRID = (8e-4, 6e-4, 3e-4)


@dataclass
class BackboneConfig:
    """Frozen per-modality clip encoder.

    ``temporal_conv`` is a randomly initialised conv stack seeded by ``seed``;
    ``flatten`` uses the raw clip frames as the feature vector.
    """

    kind: str = "temporal_conv"
    clip_length: int = 8
    filters: list = field(default_factory=lambda: [16])
    kernel_size: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in BACKBONE_KINDS:
            raise ConfigError(f"backbone kind must be one of {BACKBONE_KINDS}, got {self.kind!r}")
        if self.clip_length < 1:
            raise ConfigError("clip_length must be >= 1")
        self.filters = list(self.filters)


@dataclass
class RunConfig:
    model: str = "jmt"
    fusion: FusionConfig = field(default_factory=FusionConfig)
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 16
    max_epochs: int = 30
    patience: int = 5
    lr_grid: list = field(default_factory=lambda: list(DEFAULT_LR_GRID))
    seed: int = 0
    task: str = "regression_ccc"
    data: DatasetConfig = field(default_factory=DatasetConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    test_fold: int = 0
    run_id: str = "run"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("batch_size and max_epochs must be >= 1, patience >= 0")
        if not self.lr_grid or any(not lr > 0 for lr in self.lr_grid):
            raise ConfigError("lr_grid must be a nonempty list of positive rates")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.task == "regression_ccc" and self.fusion.head_output_dim != self.data.num_targets:
            raise ConfigError(f"regression head has {self.fusion.head_output_dim} outputs "
                              f"but the data has {self.data.num_targets} targets")
        if self.task == "binary_classification" and self.fusion.head_output_dim != 2:
            raise ConfigError("binary classification needs head_output_dim = 2")
        if self.data.frames < self.backbone.clip_length:
            raise ConfigError("sequence is shorter than one clip")
        self.lr_grid = [float(lr) for lr in self.lr_grid]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def hash(self) -> str:
        """Short sha256 of the canonical JSON, excluding the free-form ``run_id``."""
        d = self.to_dict()
        d.pop("run_id")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_dict(_merge(self.to_dict(), changes))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = copy.deepcopy(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            fusion = FusionConfig(**d.pop("fusion", {}))
            data = DatasetConfig.from_dict(d.pop("data", {}))
            backbone = BackboneConfig(**d.pop("backbone", {}))
            return cls(fusion=fusion, data=data, backbone=backbone, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


PRESETS: dict[str, dict] = {
    # small enough for the whole suite to run in minutes
    "desk": {},
    # fusion settings used for the continuous valence/arousal task on real data
    "affwild2_paper": {
        "optimizer": "sgd", "batch_size": 32, "max_epochs": 5, "learning_rate": 8e-4,
        "fusion": {"model_dim": 512, "num_heads": 8, "dropout_rate": 0.8, "temporal_pooling": "none"},
    },
    # fusion settings used for binary pain classification on real data
    "biovid_paper": {
        "optimizer": "adam", "learning_rate": 5e-6, "lr_grid": [5e-6], "batch_size": 128,
        "task": "binary_classification",
        "fusion": {"model_dim": 512, "num_heads": 8, "head_output_dim": 2},
    },
    # joint-information corpus where both modalities black out together
    "ablation": {
        "optimizer": "adam", "learning_rate": 2e-3, "batch_size": 16, "max_epochs": 25, "patience": 5,
        "fusion": {"model_dim": 32, "num_heads": 4, "temporal_pooling": "none"},
        "data": {"n_subjects": 10, "sequences_per_subject": 16, "nuisance_smoothness": 0.9, "nuisance_scale": 1.0,
                 "noise": {"sigma_a": 0.3, "sigma_b": 0.3, "blackout_a": 0.1, "blackout_b": 0.1,
                           "correlated_blackout": 0.15, "burst_length": 8}},
    },
}


def preset(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return RunConfig.from_dict(_merge(_merge(RunConfig().to_dict(), PRESETS[name]), overrides))


def load_config(path=None, preset_name: str | None = None, seed: int | None = None) -> RunConfig:
    """Build a config from an optional preset, then a JSON file on top, then a seed override."""
    base = RunConfig().to_dict() if preset_name is None else preset(preset_name).to_dict()
    if path is not None:
        try:
            override = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(override, dict):
            raise ConfigError("config file must hold a JSON object")
        base = _merge(base, override)
    if seed is not None:
        base["seed"] = seed
    return RunConfig.from_dict(base)
