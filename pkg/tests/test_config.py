"""Config file loading and environment overrides."""

from __future__ import annotations

import json

import pytest

from chart_refinery.config import load_config


def test_defaults_are_offline_mocks():
    cfg = load_config(env={})
    assert cfg.derender.endpoint_url.startswith("mock:")
    assert cfg.llm.endpoint_url.startswith("mock:")
    assert cfg.embed.endpoint_url.startswith("mock:")
    assert cfg.llm.temperature == 0.2
    assert cfg.embed.dims == 1536
    assert cfg.sandbox.timeout_s == 20.0
    assert cfg.analytics.k_min == 2 and cfg.analytics.k_max == 20


def test_toml_file(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(
        """
store_root = "/tmp/somewhere"
max_edit_attempts = 5

[llm]
endpoint_url = "http://llm.local:11434/api/generate"
model_name = "gemma3:12b"
temperature = 0.7

[sandbox]
timeout_s = 8.5
"""
    )
    cfg = load_config(path, env={})
    assert cfg.store_root == "/tmp/somewhere"
    assert cfg.max_edit_attempts == 5
    assert cfg.llm.model_name == "gemma3:12b"
    assert cfg.llm.temperature == 0.7
    assert cfg.sandbox.timeout_s == 8.5
    assert cfg.derender.endpoint_url.startswith("mock:")  # untouched section


def test_json_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"embed": {"dims": 256, "batch_size": 16}}))
    cfg = load_config(path, env={})
    assert cfg.embed.dims == 256
    assert cfg.embed.batch_size == 16


def test_env_overrides(tmp_path):
    env = {
        "CHART_REFINERY_DERENDER_URL": "http://a.local/v1/chat/completions",
        "CHART_REFINERY_LLM_URL": "http://b.local/api/generate",
        "CHART_REFINERY_EMBED_URL": "http://c.local/v1/embeddings",
        "CHART_REFINERY_INTERPRETER": "/usr/bin/python3",
        "CHART_REFINERY_STORE": str(tmp_path / "store"),
    }
    cfg = load_config(env=env)
    assert cfg.derender.endpoint_url == "http://a.local/v1/chat/completions"
    assert cfg.llm.endpoint_url == "http://b.local/api/generate"
    assert cfg.embed.endpoint_url == "http://c.local/v1/embeddings"
    assert cfg.sandbox.interpreter_path == "/usr/bin/python3"
    assert cfg.store_root == str(tmp_path / "store")


def test_env_config_path(tmp_path):
    path = tmp_path / "via-env.json"
    path.write_text(json.dumps({"store_root": "/data/via-env"}))
    cfg = load_config(env={"CHART_REFINERY_CONFIG": str(path)})
    assert cfg.store_root == "/data/via-env"


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"llm": {"no_such_knob": 1}}))
    with pytest.raises(ValueError, match="no_such_knob"):
        load_config(path, env={})


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.toml", env={})
