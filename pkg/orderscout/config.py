"""
Run configuration files.

A run config is a YAML mapping whose top-level keys mirror the typed
configs in models.py. Missing sections fall back to the dataclass defaults;
unknown keys are rejected.

Example:
    task:
      kind: relu
      target_len: 13
    model:
      preset: desk
    train:
      epochs: 2
      lr_init: 0.001
    global_search:
      depth: 3
    seed: 0
    out_dir: runs/relu13
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .models import (
    ConfigurationError,
    EsConfig,
    GlobalSearchConfig,
    LocalSearchConfig,
    Normalization,
    SoftPermConfig,
    SoftPermMode,
    TaskKind,
    TaskSpec,
    TrainConfig,
)
from .taskgen import (
    DEFAULT_EVAL_SEED,
    DEFAULT_EVAL_SIZE,
    DEFAULT_TRAIN_SEED,
    DEFAULT_VALIDATION_SEED,
)

logger = logging.getLogger(__name__)

RUN_CONFIG_KEYS = (
    "task", "model", "train", "soft_perm", "global_search",
    "local_search", "es", "data", "seed", "out_dir",
)
MODEL_PRESETS = ("desk", "full")


@dataclass
class DataConfig:
    """Split sizes and seeds; the three seeds must differ."""
    train_size: int = 100_000
    validation_size: int = 1_000
    eval_size: int = DEFAULT_EVAL_SIZE
    train_seed: int = DEFAULT_TRAIN_SEED
    validation_seed: int = DEFAULT_VALIDATION_SEED
    eval_seed: int = DEFAULT_EVAL_SEED

    def __post_init__(self):
        if min(self.train_size, self.validation_size, self.eval_size) < 1:
            raise ConfigurationError("dataset sizes must be >= 1")
        if len({self.train_seed, self.validation_seed, self.eval_seed}) != 3:
            raise ConfigurationError("train, validation and eval seeds must be distinct")


@dataclass
class ModelSettings:
    """Preset name plus per-field overrides; vocab and sequence length come from the data."""
    preset: str = "desk"
    overrides: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.preset not in MODEL_PRESETS:
            raise ConfigurationError(f"unknown model preset '{self.preset}'")


@dataclass
class RunConfig:
    """Everything one CLI invocation needs besides its command options."""
    task: Optional[TaskSpec] = None
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainConfig = field(default_factory=TrainConfig.desk)
    soft_perm: SoftPermConfig = field(default_factory=SoftPermConfig)
    global_search: GlobalSearchConfig = field(default_factory=lambda: GlobalSearchConfig(depth=3))
    local_search: LocalSearchConfig = field(default_factory=LocalSearchConfig)
    es: EsConfig = field(default_factory=EsConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = 0
    out_dir: str = "."


def _build(cls, section: str, data: Any):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"section '{section}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown keys in '{section}': {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigurationError(f"invalid '{section}' section: {e}")


def run_config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """
    Build a RunConfig from a parsed mapping.

    Raises:
        ConfigurationError: For unknown keys or invalid values
    """
    if not isinstance(data, dict):
        raise ConfigurationError("run config must be a mapping")
    unknown = sorted(set(data) - set(RUN_CONFIG_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown run config keys: {', '.join(unknown)}")

    task = None
    if data.get("task") is not None:
        task_data = dict(data["task"])
        try:
            task_data["kind"] = TaskKind(task_data["kind"])
        except (KeyError, ValueError):
            raise ConfigurationError(f"invalid task kind: {task_data.get('kind')!r}")
        task = _build(TaskSpec, "task", task_data)

    model_data = dict(data.get("model") or {})
    preset = model_data.pop("preset", "desk")
    model = ModelSettings(preset=preset, overrides=model_data)

    soft_data = dict(data.get("soft_perm") or {})
    try:
        if "mode" in soft_data:
            soft_data["mode"] = SoftPermMode(soft_data["mode"])
        if "normalization" in soft_data:
            soft_data["normalization"] = Normalization(soft_data["normalization"])
    except ValueError as e:
        raise ConfigurationError(f"invalid 'soft_perm' section: {e}")

    train_data = data.get("train")
    if isinstance(train_data, dict) and "betas" in train_data:
        train_data = {**train_data, "betas": tuple(train_data["betas"])}
    train = _build(TrainConfig, "train", train_data) if train_data else TrainConfig.desk()
    global_search = (
        _build(GlobalSearchConfig, "global_search", data["global_search"])
        if data.get("global_search") else GlobalSearchConfig(depth=3)
    )

    return RunConfig(
        task=task,
        model=model,
        train=train,
        soft_perm=_build(SoftPermConfig, "soft_perm", soft_data),
        global_search=global_search,
        local_search=_build(LocalSearchConfig, "local_search", data.get("local_search")),
        es=_build(EsConfig, "es", data.get("es")),
        data=_build(DataConfig, "data", data.get("data")),
        seed=int(data.get("seed", 0)),
        out_dir=str(data.get("out_dir", ".")),
    )


def load_run_config(path: str) -> RunConfig:
    """
    Read a YAML run config.

    Raises:
        ConfigurationError: If the file is missing, not YAML, or invalid
    """
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigurationError(f"config file not found: {config_path}")
    try:
        data = yaml.safe_load(config_path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"config file is not valid YAML: {e}")
    config = run_config_from_dict(data)
    logger.debug(f"Loaded run config from {config_path}")
    return config


def run_config_to_dict(config: RunConfig) -> Dict[str, Any]:
    """Plain mapping in the same shape load_run_config reads."""
    soft = asdict(config.soft_perm)
    soft["mode"] = config.soft_perm.mode.value
    soft["normalization"] = config.soft_perm.normalization.value
    train = asdict(config.train)
    train["betas"] = list(config.train.betas)
    return {
        "task": config.task.to_dict() if config.task else None,
        "model": {"preset": config.model.preset, **config.model.overrides},
        "train": train,
        "soft_perm": soft,
        "global_search": asdict(config.global_search),
        "local_search": asdict(config.local_search),
        "es": asdict(config.es),
        "data": asdict(config.data),
        "seed": config.seed,
        "out_dir": config.out_dir,
    }


def dump_run_config(config: RunConfig, path: str) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(yaml.safe_dump(run_config_to_dict(config), sort_keys=False), encoding="utf-8")
    return out
