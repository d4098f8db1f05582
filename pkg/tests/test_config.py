import json

import pytest

from config import AppConfig, ConfigManager, McmcPreset
from utils.logger import RunStats
from utils.validators import ValidationError


@pytest.fixture
def manager_dir(tmp_path, monkeypatch):
    home = tmp_path / ".manigp"
    monkeypatch.setattr(ConfigManager, "CONFIG_DIR", home)
    monkeypatch.setattr(ConfigManager, "CONFIG_FILE", home / "config.json")
    monkeypatch.setattr(ConfigManager, "PRESETS_FILE", home / "presets.json")
    return home


def test_builtin_presets(manager_dir):
    manager = ConfigManager()
    paper = manager.get_preset("paper")
    assert (paper.n_iter, paper.burn_in) == (10000, 5000)
    assert manager.get_preset("desk").n_iter == 2000
    assert manager.get_preset("smoke").burn_in == 150
    assert manager.get_preset("turbo") is None
    assert manager.config == AppConfig()


def test_save_then_load_round_trips_user_settings(manager_dir):
    manager = ConfigManager()
    manager.config.workers = 4
    manager.presets.append(McmcPreset(name="long", n_iter=50000, burn_in=10000, proposal_sd=0.2))
    manager.save()
    assert (manager_dir / "config.json").is_file()

    reloaded = ConfigManager()
    assert reloaded.config.workers == 4
    assert reloaded.get_preset("long").proposal_sd == 0.2


def test_user_preset_replaces_builtin(manager_dir):
    manager_dir.mkdir()
    (manager_dir / "presets.json").write_text(json.dumps([{"name": "smoke", "n_iter": 40, "burn_in": 20}]))
    manager = ConfigManager()
    assert manager.get_preset("smoke").n_iter == 40
    assert [p.name for p in manager.presets].count("smoke") == 1


def test_malformed_config_falls_back_to_defaults(manager_dir):
    manager_dir.mkdir()
    (manager_dir / "config.json").write_text("{not json")
    (manager_dir / "presets.json").write_text(json.dumps([{"bogus": 1}]))
    manager = ConfigManager()
    assert manager.config == AppConfig()
    assert manager.get_preset("desk").n_iter == 2000


def test_load_spec_file_normalises_keys(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"test-frac": 0.5, "seed": 3}))
    assert ConfigManager.load_spec_file(str(path)) == {"test_frac": 0.5, "seed": 3}


@pytest.mark.parametrize("content, match", [
    (None, "not found"),
    ("[1, 2]", "JSON object"),
    ("{oops", "not valid JSON"),
])
def test_load_spec_file_errors(tmp_path, content, match):
    path = tmp_path / "spec.json"
    if content is not None:
        path.write_text(content)
    with pytest.raises(ValidationError, match=match):
        ConfigManager.load_spec_file(str(path))


def test_merge_precedence():
    merged = ConfigManager.merge({"a": 1, "b": 2, "c": 3}, {"b": 20, "c": 30}, {"c": 300, "b": None})
    assert merged == {"a": 1, "b": 20, "c": 300}
    assert ConfigManager.merge({"a": 1}) == {"a": 1}


def test_run_stats_progress():
    stats = RunStats()
    assert stats.progress == 0 and stats.duration == 0
    stats.start(8)
    stats.update(2)
    assert stats.progress == 25.0
    stats.add_error("cell 3 failed")
    stats.finish()
    assert stats.errors == ["cell 3 failed"]
    assert stats.duration >= 0
