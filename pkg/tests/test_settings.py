import json

import pytest

from scripts.settings import DEFAULT_SETTINGS, ENV_OVERRIDES, _deep_merge, load_settings


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for variable in ENV_OVERRIDES:
        monkeypatch.delenv(variable, raising=False)


def test_missing_file_gives_defaults(tmp_path):
    assert load_settings(str(tmp_path / "absent.json")) == DEFAULT_SETTINGS


def test_file_is_merged_over_defaults(tmp_path):
    path = tmp_path / "settings.json"
    path.write_text(json.dumps({"gas": {"path_cap": 12}, "extra": {"k": 1}}))
    settings = load_settings(str(path))
    assert settings["gas"]["path_cap"] == 12
    assert settings["gas"]["schedule"] == DEFAULT_SETTINGS["gas"]["schedule"]
    assert settings["extra"] == {"k": 1}


def test_broken_file_falls_back(tmp_path, capsys):
    path = tmp_path / "settings.json"
    path.write_text("{not json")
    assert load_settings(str(path)) == DEFAULT_SETTINGS
    assert "Error loading settings" in capsys.readouterr().out


def test_environment_wins(tmp_path, monkeypatch):
    path = tmp_path / "settings.json"
    path.write_text(json.dumps({"gas": {"path_cap": 12}}))
    monkeypatch.setenv("MLC_EVM_PATH_CAP", "7")
    monkeypatch.setenv("MLC_EVM_SCHEDULE", "other.txt")
    settings = load_settings(str(path))
    assert settings["gas"]["path_cap"] == 7
    assert settings["gas"]["schedule"] == "other.txt"


def test_invalid_environment_value_is_ignored(monkeypatch, capsys):
    monkeypatch.setenv("MLC_EVM_PATH_CAP", "lots")
    settings = load_settings(None)
    assert settings["gas"]["path_cap"] == DEFAULT_SETTINGS["gas"]["path_cap"]
    assert "MLC_EVM_PATH_CAP" in capsys.readouterr().out


def test_deep_merge_does_not_touch_its_inputs():
    base = {"a": {"b": 1, "c": 2}}
    merged = _deep_merge(base, {"a": {"b": 5}})
    assert merged == {"a": {"b": 5, "c": 2}}
    assert base == {"a": {"b": 1, "c": 2}}
