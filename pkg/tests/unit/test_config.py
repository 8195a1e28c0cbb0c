"""
Unit tests for YAML run configs.
"""

import pytest

from orderscout.config import (
    DataConfig,
    ModelSettings,
    RunConfig,
    dump_run_config,
    load_run_config,
    run_config_from_dict,
    run_config_to_dict,
)
from orderscout.models import (
    ConfigurationError,
    Normalization,
    SoftPermMode,
    TaskKind,
    TaskSpec,
)


class TestRunConfig:
    """Defaults and validation."""

    def test_defaults(self):
        config = RunConfig()
        assert config.task is None
        assert config.model.preset == "desk"
        assert config.train.lr_init == 1e-3
        assert config.global_search.depth == 3
        assert (config.data.train_seed, config.data.validation_seed, config.data.eval_seed) == (42, 7, 123)
        assert config.data.eval_size == 1000

    def test_equal_seeds_rejected(self):
        with pytest.raises(ConfigurationError, match="distinct"):
            DataConfig(train_seed=1, validation_seed=1)

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            ModelSettings(preset="huge")


class TestFromDict:
    """Mapping to RunConfig."""

    def test_full_mapping(self):
        """
        Given: A mapping with a task, overrides and enum-valued fields
        When: run_config_from_dict() is called
        Then: Enums are converted and model overrides are kept aside
        """
        config = run_config_from_dict({
            "task": {"kind": "index", "target_len": 8, "window": 3},
            "model": {"preset": "full", "n_layers": 2},
            "train": {"epochs": 3, "betas": [0.9, 0.98]},
            "soft_perm": {"mode": "alternating", "normalization": "row_softmax"},
            "global_search": {"depth": 4},
            "seed": 11,
        })
        assert config.task == TaskSpec.index(8, 3)
        assert config.model.preset == "full"
        assert config.model.overrides == {"n_layers": 2}
        assert config.train.epochs == 3
        assert config.train.betas == (0.9, 0.98)
        assert config.soft_perm.mode == SoftPermMode.ALTERNATING
        assert config.soft_perm.normalization == Normalization.ROW_SOFTMAX
        assert config.global_search.budget == 120
        assert config.seed == 11

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigurationError, match="unknown run config keys: epochs"):
            run_config_from_dict({"epochs": 3})

    def test_unknown_section_key(self):
        with pytest.raises(ConfigurationError, match="unknown keys in 'es'"):
            run_config_from_dict({"es": {"populaton": 10}})

    def test_bad_task_kind(self):
        with pytest.raises(ConfigurationError, match="invalid task kind"):
            run_config_from_dict({"task": {"kind": "sort", "target_len": 5}})

    def test_invalid_values_surface_as_configuration_errors(self):
        with pytest.raises(ConfigurationError):
            run_config_from_dict({"train": {"lr_init": -1.0}})


class TestFiles:
    """YAML load and dump."""

    def test_dump_then_load(self, tmp_path):
        original = run_config_from_dict({
            "task": {"kind": "relu", "target_len": 13},
            "train": {"epochs": 2},
            "soft_perm": {"mode": "joint"},
            "out_dir": "runs/relu13",
        })
        path = dump_run_config(original, str(tmp_path / "run.yaml"))
        loaded = load_run_config(str(path))
        assert run_config_to_dict(loaded) == run_config_to_dict(original)
        assert loaded.task.kind == TaskKind.RELU

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_run_config(str(tmp_path / "absent.yaml"))

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("task: [unclosed\n")
        with pytest.raises(ConfigurationError, match="not valid YAML"):
            load_run_config(str(path))

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_run_config(str(path)).global_search.depth == 3
