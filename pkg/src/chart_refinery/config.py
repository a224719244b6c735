"""Application configuration: TOML/JSON file plus environment overrides.

All backends default to the in-repo deterministic mocks, so a fresh checkout
works offline; point the URLs at real model servers to go live.

Recognized environment variables:
    CHART_REFINERY_CONFIG        path to the config file
    CHART_REFINERY_DERENDER_URL  chart-to-code endpoint override
    CHART_REFINERY_LLM_URL       critique/edit endpoint override
    CHART_REFINERY_EMBED_URL     embedding endpoint override
    CHART_REFINERY_INTERPRETER   sandbox interpreter override
    CHART_REFINERY_STORE         session store root override
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends import DerenderBackendConfig, EmbedBackendConfig, LlmBackendConfig
from .models import DEFAULT_IMAGE_SIZE_CAP
from .sandbox import SandboxConfig

ENV_CONFIG = "CHART_REFINERY_CONFIG"
ENV_DERENDER_URL = "CHART_REFINERY_DERENDER_URL"
ENV_LLM_URL = "CHART_REFINERY_LLM_URL"
ENV_EMBED_URL = "CHART_REFINERY_EMBED_URL"
ENV_INTERPRETER = "CHART_REFINERY_INTERPRETER"
ENV_STORE = "CHART_REFINERY_STORE"


@dataclass
class AnalyticsDefaults:
    k_min: int = 2
    k_max: int = 20
    seeds_per_k: int = 5
    normalize: bool = False


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8040
    ui_origin: str = "http://localhost:5173"
    ui_dist: str | None = None  # serve built frontend assets under /ui/ when set
    image_size_cap: int = DEFAULT_IMAGE_SIZE_CAP


@dataclass
class AppConfig:
    store_root: str = "./chart-refinery-data"
    derender: DerenderBackendConfig = field(default_factory=DerenderBackendConfig)
    llm: LlmBackendConfig = field(default_factory=LlmBackendConfig)
    embed: EmbedBackendConfig = field(default_factory=EmbedBackendConfig)
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    analytics: AnalyticsDefaults = field(default_factory=AnalyticsDefaults)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    max_edit_attempts: int = 3


_SECTIONS = {
    "derender": DerenderBackendConfig,
    "llm": LlmBackendConfig,
    "embed": EmbedBackendConfig,
    "sandbox": SandboxConfig,
    "analytics": AnalyticsDefaults,
    "service": ServiceConfig,
}


def _build_section(cls, overrides: dict):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**overrides)


def load_config(path: str | Path | None = None, env: dict[str, str] | None = None) -> AppConfig:
    """Load config from an explicit path, $CHART_REFINERY_CONFIG, or defaults."""
    env = dict(os.environ if env is None else env)
    if path is None and env.get(ENV_CONFIG):
        path = env[ENV_CONFIG]

    doc: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file {path} not found")
        if path.suffix == ".json":
            doc = json.loads(path.read_text(encoding="utf-8"))
        else:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)

    kwargs: dict = {}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _build_section(cls, dict(doc.get(name, {})))
    cfg = AppConfig(
        store_root=doc.get("store_root", AppConfig.store_root),
        max_edit_attempts=int(doc.get("max_edit_attempts", AppConfig.max_edit_attempts)),
        **kwargs,
    )

    if env.get(ENV_DERENDER_URL):
        cfg.derender.endpoint_url = env[ENV_DERENDER_URL]
    if env.get(ENV_LLM_URL):
        cfg.llm.endpoint_url = env[ENV_LLM_URL]
    if env.get(ENV_EMBED_URL):
        cfg.embed.endpoint_url = env[ENV_EMBED_URL]
    if env.get(ENV_INTERPRETER):
        cfg.sandbox.interpreter_path = env[ENV_INTERPRETER]
    if env.get(ENV_STORE):
        cfg.store_root = env[ENV_STORE]
    return cfg


def backend_snapshot(cfg: AppConfig) -> dict:
    """Record of backend endpoints/models in effect, stored on each session."""
    return {
        "derender": {"endpoint_url": cfg.derender.endpoint_url, "model_name": cfg.derender.model_name},
        "llm": {
            "endpoint_url": cfg.llm.endpoint_url,
            "model_name": cfg.llm.model_name,
            "temperature": cfg.llm.temperature,
            "backend_style": cfg.llm.backend_style,
        },
        "embed": {"endpoint_url": cfg.embed.endpoint_url, "model_name": cfg.embed.model_name,
                  "dims": cfg.embed.dims},
    }
