# File: tests/test_config.py (Q2FMM)
import json

import pytest

from app.config import load_run_config, parse_run_config, write_run_config
from scripts.errors import ConfigError


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("Q2FMM_JOBS", raising=False)
    monkeypatch.delenv("Q2FMM_OUT_DIR", raising=False)


def _config_file(tmp_path, payload) -> str:
    path = tmp_path / "run.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def test_defaults():
    config = load_run_config()
    assert config.seed == 0
    assert config.jobs == 1
    assert config.lattice.width == 4
    assert config.synthesis.fraction_bits == 4


def test_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("Q2FMM_JOBS", "3")
    monkeypatch.setenv("Q2FMM_OUT_DIR", "from_env")
    assert load_run_config().jobs == 3

    path = _config_file(tmp_path, {"jobs": 2, "seed": 5, "lattice": {"width": 8}})
    config = load_run_config(path)
    assert (config.jobs, config.seed, config.out_dir) == (2, 5, "from_env")

    config = load_run_config(path, {"seed": 9, "jobs": None, "lattice": {"spinful": True}})
    assert (config.jobs, config.seed) == (2, 9)
    assert config.lattice.width == 8 and config.lattice.spinful


@pytest.mark.parametrize("payload", [
    {"lattice": {"colour": "red"}},
    {"unknown_section": 1},
    {"synthesis": {"eps_b": 0.0}},
    {"sweep": {"sizes": [4, 6]}},
    {"lattice": {"width": 4, "height": 8}},
    {"sweep": {"n_states": 3}},
])
def test_invalid_values(tmp_path, payload):
    with pytest.raises(ConfigError):
        load_run_config(_config_file(tmp_path, payload))


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(str(bad))


def test_written_config_reloads(tmp_path):
    config = load_run_config(None, {"seed": 11, "synthesis": {"order_p": 2, "use_copy": True}})
    path = write_run_config(config, str(tmp_path / "out"))
    assert path.name == "run_config.json"
    assert parse_run_config(path.read_text(encoding="utf-8")) == config
    with pytest.raises(ConfigError):
        parse_run_config('{"jobs": 0}')
