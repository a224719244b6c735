"""HTTP clients for the pluggable model backends.

Three wire shapes are spoken here:

* de-render: OpenAI-style chat completions with the chart image attached as
  a base64 data-URL content part;
* critique/edit: Ollama ``/api/generate`` JSON (or OpenAI chat, selectable
  per config via ``backend_style``);
* embeddings: ``{"model", "input": [...]}`` -> ``{"data": [{"embedding"}]}``.

Endpoint URLs with the ``mock:`` scheme bypass HTTP and hit the in-repo
deterministic mocks, which is how the offline test suite and demo run.
Retries use exponential backoff on timeout/5xx only; 4xx never retries.
"""

from __future__ import annotations

import base64
import logging
import time
from dataclasses import dataclass
from urllib.parse import urlparse

import requests

from . import mocks
from .errors import BackendTimeout, BackendUnreachable
from .models import ChartImage

logger = logging.getLogger(__name__)

DEFAULT_DERENDER_INSTRUCTION = (
    "Convert this chart image into a complete, self-contained Python matplotlib "
    "script that reproduces it as faithfully as possible. Return only the code."
)


def _check_url(url: str) -> None:
    if mocks.is_mock(url):
        return
    parsed = urlparse(url)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise ValueError(f"endpoint_url {url!r} is not a valid http(s) or mock: URL")


@dataclass
class DerenderBackendConfig:
    endpoint_url: str = "mock:derender"
    model_name: str = "chartcoder"
    timeout_s: float = 120.0
    max_retries: int = 2
    instruction: str = DEFAULT_DERENDER_INSTRUCTION
    backoff_base_s: float = 0.5
    backoff_factor: float = 2.0

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        _check_url(self.endpoint_url)


@dataclass
class LlmBackendConfig:
    endpoint_url: str = "mock:llm"
    model_name: str = "gpt-oss:20b"
    temperature: float = 0.2
    timeout_s: float = 120.0
    max_retries: int = 2
    backend_style: str = "ollama"  # or "openai_chat"
    backoff_base_s: float = 0.5
    backoff_factor: float = 2.0

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.backend_style not in ("ollama", "openai_chat"):
            raise ValueError(f"unknown backend_style {self.backend_style!r}")
        _check_url(self.endpoint_url)


@dataclass
class EmbedBackendConfig:
    endpoint_url: str = "mock:embed"
    model_name: str = "text-embedding-3-small"
    dims: int = 1536
    batch_size: int = 128
    timeout_s: float = 60.0
    max_retries: int = 2
    backoff_base_s: float = 0.5
    backoff_factor: float = 2.0

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.dims < 1 or self.batch_size < 1:
            raise ValueError("dims and batch_size must be positive")
        _check_url(self.endpoint_url)


@dataclass
class PostResult:
    data: dict
    attempts: int


def post_json_with_retries(
    url: str,
    payload: dict,
    timeout_s: float,
    max_retries: int,
    backoff_base_s: float = 0.5,
    backoff_factor: float = 2.0,
) -> PostResult:
    """POST JSON, retrying timeouts and 5xx with exponential backoff."""
    attempts = 0
    last_error: Exception | None = None
    while attempts <= max_retries:
        attempts += 1
        try:
            resp = requests.post(url, json=payload, timeout=timeout_s)
        except requests.Timeout as exc:
            last_error = BackendTimeout(f"{url} timed out after {timeout_s}s")
            last_error.__cause__ = exc
        except requests.ConnectionError as exc:
            raise BackendUnreachable(f"{url} refused the connection: {exc}") from exc
        else:
            if resp.status_code >= 500:
                last_error = BackendUnreachable(f"{url} returned {resp.status_code}")
            elif resp.status_code >= 400:
                raise BackendUnreachable(f"{url} returned client error {resp.status_code}")
            else:
                try:
                    return PostResult(data=resp.json(), attempts=attempts)
                except ValueError as exc:
                    raise BackendUnreachable(f"{url} returned non-JSON body") from exc
        if attempts <= max_retries:
            delay = backoff_base_s * backoff_factor ** (attempts - 1)
            logger.warning("retrying %s after %s (sleep %.2fs)", url, last_error, delay)
            time.sleep(delay)
    assert last_error is not None
    raise last_error


@dataclass
class CompletionResult:
    text: str
    attempts: int
    latency_ms: int


def derender_completion(image: ChartImage, cfg: DerenderBackendConfig) -> CompletionResult:
    """Ask the chart-to-code backend for a plotting script for the image."""
    start = time.monotonic()
    if mocks.is_mock(cfg.endpoint_url):
        text = mocks.derender_completion(image.sha256)
        return CompletionResult(text, attempts=1, latency_ms=_ms_since(start))
    data_url = f"data:{image.format.media_type};base64,{base64.b64encode(image.data).decode('ascii')}"
    payload = {
        "model": cfg.model_name,
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": cfg.instruction},
                    {"type": "image_url", "image_url": {"url": data_url}},
                ],
            }
        ],
        "stream": False,
    }
    result = post_json_with_retries(
        cfg.endpoint_url, payload, cfg.timeout_s, cfg.max_retries,
        cfg.backoff_base_s, cfg.backoff_factor,
    )
    try:
        text = result.data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendUnreachable(f"{cfg.endpoint_url}: malformed chat-completion response") from exc
    if not isinstance(text, str):
        raise BackendUnreachable(f"{cfg.endpoint_url}: completion content is not a string")
    return CompletionResult(text, attempts=result.attempts, latency_ms=_ms_since(start))


def llm_completion(prompt: str, cfg: LlmBackendConfig, purpose: str = "critique") -> CompletionResult:
    """One-shot text completion for critique/edit prompts."""
    start = time.monotonic()
    if mocks.is_mock(cfg.endpoint_url):
        if purpose == "edit":
            text = mocks.edit_completion(prompt)
        else:
            text = mocks.critique_completion(prompt)
        return CompletionResult(text, attempts=1, latency_ms=_ms_since(start))
    if cfg.backend_style == "ollama":
        payload = {
            "model": cfg.model_name,
            "prompt": prompt,
            "stream": False,
            "options": {"temperature": cfg.temperature},
        }
        result = post_json_with_retries(
            cfg.endpoint_url, payload, cfg.timeout_s, cfg.max_retries,
            cfg.backoff_base_s, cfg.backoff_factor,
        )
        text = result.data.get("response")
    else:
        payload = {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "stream": False,
            "temperature": cfg.temperature,
        }
        result = post_json_with_retries(
            cfg.endpoint_url, payload, cfg.timeout_s, cfg.max_retries,
            cfg.backoff_base_s, cfg.backoff_factor,
        )
        try:
            text = result.data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            text = None
    if not isinstance(text, str):
        raise BackendUnreachable(f"{cfg.endpoint_url}: malformed completion response")
    return CompletionResult(text, attempts=result.attempts, latency_ms=_ms_since(start))


def embed_batch(texts: list[str], cfg: EmbedBackendConfig) -> tuple[list[list[float]], int]:
    """Embed one batch of texts; returns (vectors, attempts)."""
    if mocks.is_mock(cfg.endpoint_url):
        return mocks.embed_texts(texts, dims=cfg.dims), 1
    payload = {"model": cfg.model_name, "input": texts}
    result = post_json_with_retries(
        cfg.endpoint_url, payload, cfg.timeout_s, cfg.max_retries,
        cfg.backoff_base_s, cfg.backoff_factor,
    )
    try:
        vectors = [row["embedding"] for row in result.data["data"]]
    except (KeyError, TypeError) as exc:
        raise BackendUnreachable(f"{cfg.endpoint_url}: malformed embedding response") from exc
    return vectors, result.attempts


def backend_reachable(endpoint_url: str, timeout_s: float = 2.0) -> bool:
    """Cheap reachability probe used by the health endpoint."""
    if mocks.is_mock(endpoint_url):
        return True
    try:
        parsed = urlparse(endpoint_url)
        base = f"{parsed.scheme}://{parsed.netloc}/"
        requests.get(base, timeout=timeout_s)
        return True
    except requests.RequestException:
        return False


def _ms_since(start: float) -> int:
    return int((time.monotonic() - start) * 1000)
