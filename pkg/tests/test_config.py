import json

import pytest

from collapsesim.core.config import Settings, SettingsManager


def test_defaults_without_file(tmp_path):
    manager = SettingsManager(str(tmp_path))
    assert not manager.settings_exist()
    assert manager.load_settings() == Settings()


def test_save_then_load(tmp_path):
    manager = SettingsManager(str(tmp_path / "nested"))
    manager.save_settings(seed=7, format="csv")
    assert manager.settings_exist()
    loaded = manager.load_settings()
    assert loaded.seed == 7
    assert loaded.format == "csv"
    assert loaded.policy == "both"


def test_save_merges_with_existing(tmp_path):
    manager = SettingsManager(str(tmp_path))
    manager.save_settings(seed=7)
    manager.save_settings(policy="unitary")
    loaded = manager.load_settings()
    assert (loaded.seed, loaded.policy) == (7, "unitary")


def test_invalid_values_are_refused(tmp_path):
    manager = SettingsManager(str(tmp_path))
    with pytest.raises(ValueError):
        manager.save_settings(format="xml")
    with pytest.raises(ValueError):
        manager.save_settings(seed=-1)
    assert not manager.settings_exist()


def test_unreadable_file_falls_back(tmp_path):
    (tmp_path / "settings.json").write_text("{not json")
    assert SettingsManager(str(tmp_path)).load_settings() == Settings()


def test_invalid_stored_value_falls_back(tmp_path):
    (tmp_path / "settings.json").write_text(json.dumps({"policy": "sometimes"}))
    assert SettingsManager(str(tmp_path)).load_settings().policy == "both"


def test_environment_selects_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("COLLAPSESIM_CONFIG_DIR", str(tmp_path))
    assert SettingsManager().settings_file == str(tmp_path / "settings.json")
