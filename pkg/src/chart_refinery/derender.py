"""Stage 1: recover a plotting-script spec for a chart image.

The chart-to-code backend returns free-form completion text; we strip
markdown fences (backends wrap code inconsistently) and keep the first code
block, falling back to the whole text when it plainly contains plotting
calls.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .backends import DerenderBackendConfig, derender_completion
from .errors import EmptyCompletion
from .models import ChartImage, ChartSpec, SpecOrigin

# Cheap guard against prose-only completions.
DEFAULT_PLOT_TOKENS = ("plt.", "figure(", "subplots(", "ax.")

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)\n?```", re.DOTALL)


@dataclass
class DerenderResult:
    spec: ChartSpec
    model_name: str
    latency_ms: int
    attempts: int


def extract_code_block(
    completion_text: str,
    plot_tokens: tuple[str, ...] = DEFAULT_PLOT_TOKENS,
) -> str:
    """Return the first fenced code block, or the full text if it looks like code.

    Raises EmptyCompletion when neither a fenced block with content nor any
    plotting-call token is present.
    """
    match = _FENCE_RE.search(completion_text)
    if match:
        content = match.group(1).strip("\n")
        if content.strip():
            return content
        raise EmptyCompletion("first fenced block is empty")
    if any(token in completion_text for token in plot_tokens):
        return completion_text
    raise EmptyCompletion("completion contains no code fence and no plotting calls")


def derender(image: ChartImage, cfg: DerenderBackendConfig) -> DerenderResult:
    """Obtain a DERENDERED (not yet validated) spec for the image."""
    image.validate()
    completion = derender_completion(image, cfg)
    source = extract_code_block(completion.text)
    spec = ChartSpec(source=source, origin=SpecOrigin.DERENDERED, validated=False)
    return DerenderResult(
        spec=spec,
        model_name=cfg.model_name,
        latency_ms=completion.latency_ms,
        attempts=completion.attempts,
    )
