"""Chart refinery: de-render charts to code, critique, and refine them.

Three pipeline stages behind pluggable HTTP model backends (with
deterministic in-repo mocks), a render sandbox, a session store, an HTTP
service, a CLI, and a clustering evaluation harness for recommendation
corpora.
"""

from .backends import DerenderBackendConfig, EmbedBackendConfig, LlmBackendConfig
from .config import AppConfig, load_config
from .critique import ParseReport, build_critique_prompt, critique, dedupe, parse_recommendations
from .derender import DerenderResult, derender, extract_code_block
from .models import (
    ChartImage,
    ChartSpec,
    ImageFormat,
    Recommendation,
    RecommendationStatus,
    RenderResult,
    RenderStatus,
    Revision,
    Session,
    SessionState,
    SpecOrigin,
)
from .refine import EditOutcome, apply_recommendations, build_edit_prompt, reanalyze
from .sandbox import SandboxConfig, instrument_script, render
from .store import SessionStore

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "ChartImage",
    "ChartSpec",
    "DerenderBackendConfig",
    "DerenderResult",
    "EditOutcome",
    "EmbedBackendConfig",
    "ImageFormat",
    "LlmBackendConfig",
    "ParseReport",
    "Recommendation",
    "RecommendationStatus",
    "RenderResult",
    "RenderStatus",
    "Revision",
    "SandboxConfig",
    "Session",
    "SessionState",
    "SessionStore",
    "SpecOrigin",
    "apply_recommendations",
    "build_critique_prompt",
    "build_edit_prompt",
    "critique",
    "dedupe",
    "derender",
    "extract_code_block",
    "instrument_script",
    "load_config",
    "parse_recommendations",
    "reanalyze",
    "render",
    "__version__",
]
