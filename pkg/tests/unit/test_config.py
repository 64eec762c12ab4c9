"""
Unit tests for run configuration and settings
"""

from pathlib import Path

import pytest
from pydantic import ValidationError

from lib.harness.config import (
    PHASE_SECTIONS,
    RunConfig,
    Settings,
    apply_overrides,
    config_hash,
    dump_config,
    load_config,
    phase_hashes,
)
from lib.harness.pipeline import resolve_run_dir


class TestRunConfig:
    """Test suite for RunConfig validation"""

    def test_reference_defaults(self):
        """Test defaults follow the reference schedule"""
        config = RunConfig()
        assert config.search.ratio == 0.2
        assert config.search.knowledge == "ensemble"
        assert config.membank.k == 5
        assert config.membank.ema_decay == 0.99
        assert config.splits.per_class_subset == 256
        assert config.splits.per_class_val == 32
        assert config.finetune.milestones == [30, 60, 80]
        assert config.finetune.kd_temperature == 4.0

    @pytest.mark.parametrize(
        "data",
        [
            {"serach": {}},
            {"search": {"rato": 0.2}},
            {"model": {"arch": "toy-cnn", "weights": "x"}},
        ],
    )
    def test_unknown_keys_rejected(self, data):
        """Test unknown keys fail at every nesting level"""
        with pytest.raises(ValidationError):
            RunConfig.model_validate(data)

    @pytest.mark.parametrize(
        "section",
        [
            {"search": {"target_rate": 1.0}},
            {"search": {"ratio": 0.0}},
            {"membank": {"k": 0}},
            {"finetune": {"epochs": 10, "milestones": [5, 3]}},
            {"finetune": {"epochs": 10, "milestones": [10]}},
            {"name": "  "},
        ],
    )
    def test_invalid_values(self, section):
        """Test out-of-range values raise ValidationError"""
        with pytest.raises(ValidationError):
            RunConfig.model_validate(section)

    def test_file_round_trip(self, toy_config, tmp_path):
        """Test configs survive dump and load"""
        path = dump_config(toy_config, tmp_path / "config.json")
        assert load_config(path) == toy_config


class TestHashes:
    """Test suite for config and phase hashes"""

    def test_hash_ignores_location_and_device(self, toy_config):
        """Test run_dir and device do not change the config hash"""
        moved = apply_overrides(toy_config, {"run_dir": "/elsewhere", "device": "cuda"})
        assert config_hash(moved) == config_hash(toy_config)
        assert config_hash(apply_overrides(toy_config, {"seed": 1})) != config_hash(toy_config)

    def test_phase_hashes_are_cumulative(self, toy_config):
        """Test a change invalidates its phase and every later phase only"""
        before = phase_hashes(toy_config)
        after = phase_hashes(apply_overrides(toy_config, {"finetune.epochs": 3}))
        changed = [phase for phase in PHASE_SECTIONS if before[phase] != after[phase]]
        assert changed == ["finetune", "evaluate", "landscape"]

    def test_seed_changes_every_phase(self, toy_config):
        """Test the global seed feeds every phase"""
        before = phase_hashes(toy_config)
        after = phase_hashes(apply_overrides(toy_config, {"seed": 5}))
        assert all(before[phase] != after[phase] for phase in PHASE_SECTIONS)


class TestOverrides:
    """Test suite for dotted overrides"""

    def test_nested_override(self, toy_config):
        """Test dotted keys reach nested sections and re-validate"""
        updated = apply_overrides(toy_config, {"search.target_rate": 0.6, "membank.k": 3})
        assert updated.search.target_rate == 0.6
        assert updated.membank.k == 3
        assert toy_config.search.target_rate == 0.3

    def test_unknown_leaf(self, toy_config):
        """Test an unknown leaf key fails validation"""
        with pytest.raises(ValidationError):
            apply_overrides(toy_config, {"search.unknown": 1})

    def test_unknown_section(self, toy_config):
        """Test an unknown intermediate key raises KeyError"""
        with pytest.raises(KeyError):
            apply_overrides(toy_config, {"nothing.here": 1})


class TestSettings:
    """Test suite for environment settings"""

    def test_env_prefix(self, monkeypatch):
        """Test EKG_ variables populate settings"""
        monkeypatch.setenv("EKG_RUN_ROOT", "/tmp/ekg-runs")
        monkeypatch.setenv("EKG_MAX_JOBS", "3")
        settings = Settings()
        assert settings.run_root == "/tmp/ekg-runs"
        assert settings.max_jobs == 3

    def test_run_dir_precedence(self, toy_config, tmp_path):
        """Test explicit argument, then settings, then config, then run_root/name"""
        settings = Settings(run_root=str(tmp_path / "root"), run_dir=None)
        configured = apply_overrides(toy_config, {"run_dir": str(tmp_path / "from-config")})

        assert resolve_run_dir(toy_config, None, settings) == tmp_path / "root" / "toy"
        assert resolve_run_dir(configured, None, settings) == tmp_path / "from-config"

        settings_dir = Settings(run_root=str(tmp_path / "root"), run_dir=str(tmp_path / "from-env"))
        assert resolve_run_dir(configured, None, settings_dir) == tmp_path / "from-env"
        assert resolve_run_dir(configured, tmp_path / "explicit", settings_dir) == Path(tmp_path / "explicit")
