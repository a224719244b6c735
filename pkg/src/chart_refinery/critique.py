"""Stage 2: build the critique prompt, query the LLM, parse `#` lines.

The critique instruction is a byte-exact repo fixture; the parser is a total
function that tolerates the enumeration prefixes models emit despite being
told not to, and reports every skipped line with a reason.
"""

from __future__ import annotations

import logging
import re
import string
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .backends import LlmBackendConfig, llm_completion
from .errors import SpecTooLarge
from .models import ChartSpec, Recommendation

logger = logging.getLogger(__name__)

DEFAULT_SOURCE_CAP = 32_000
DEFAULT_ROUND_CAP = 50

SKIP_BLANK = "BLANK"
SKIP_NOT_HASH_PREFIXED = "NOT_HASH_PREFIXED"
SKIP_EMPTY_AFTER_HASH = "EMPTY_AFTER_HASH"
SKIP_OVER_CAP = "OVER_CAP"

# Tolerated enumeration prefixes: "1. ", "2) ", or a leading "- ".
_ENUM_PREFIX_RE = re.compile(r"(?:\d+[.)]\s*|-\s*)?")


@lru_cache(maxsize=1)
def canonical_instruction() -> str:
    return resources.files("chart_refinery.prompts").joinpath("critique_instruction.txt").read_text("utf-8")


@dataclass
class CritiquePrompt:
    instruction: str
    spec_source: str
    rendered: str


@dataclass
class ParsedLine:
    text: str
    raw_line: str
    line_no: int


@dataclass
class ParseReport:
    parsed: list[ParsedLine] = field(default_factory=list)
    skipped_lines: list[tuple[int, str]] = field(default_factory=list)
    total_lines: int = 0
    raw_completion: str = ""
    attempts: int = 1

    @property
    def recommendations(self) -> list[str]:
        return [p.text for p in self.parsed]

    @property
    def empty(self) -> bool:
        return not self.parsed


def build_critique_prompt(spec: ChartSpec, source_cap: int = DEFAULT_SOURCE_CAP) -> CritiquePrompt:
    """Canonical instruction, one blank line, then the spec source verbatim."""
    if not spec.source:
        raise ValueError("spec source must be non-empty")
    if len(spec.source) > source_cap:
        raise SpecTooLarge(f"spec source of {len(spec.source)} chars exceeds cap {source_cap}")
    instruction = canonical_instruction()
    return CritiquePrompt(
        instruction=instruction,
        spec_source=spec.source,
        rendered=f"{instruction}\n\n{spec.source}",
    )


def parse_recommendations(completion_text: str, round_cap: int = DEFAULT_ROUND_CAP) -> ParseReport:
    """Parse one-line `#` recommendations out of arbitrary completion text.

    Total function: every input line is either parsed or recorded in
    skipped_lines with a reason, in source order.
    """
    report = ParseReport()
    lines = completion_text.splitlines()
    report.total_lines = len(lines)
    for line_no, raw_line in enumerate(lines, start=1):
        stripped = raw_line.lstrip()
        if not stripped:
            report.skipped_lines.append((line_no, SKIP_BLANK))
            continue
        stripped = stripped[_ENUM_PREFIX_RE.match(stripped).end():]
        if not stripped.startswith("#"):
            report.skipped_lines.append((line_no, SKIP_NOT_HASH_PREFIXED))
            continue
        text = stripped[1:].strip()
        if not text:
            report.skipped_lines.append((line_no, SKIP_EMPTY_AFTER_HASH))
            continue
        if len(report.parsed) >= round_cap:
            report.skipped_lines.append((line_no, SKIP_OVER_CAP))
            continue
        report.parsed.append(ParsedLine(text=text, raw_line=raw_line, line_no=line_no))
    return report


def critique(
    spec: ChartSpec,
    cfg: LlmBackendConfig,
    source_cap: int = DEFAULT_SOURCE_CAP,
    round_cap: int = DEFAULT_ROUND_CAP,
) -> ParseReport:
    """Run one critique round; the raw completion rides along for auditing."""
    prompt = build_critique_prompt(spec, source_cap=source_cap)
    completion = llm_completion(prompt.rendered, cfg, purpose="critique")
    report = parse_recommendations(completion.text, round_cap=round_cap)
    report.raw_completion = completion.text
    report.attempts = completion.attempts
    if report.empty:
        logger.warning("critique produced no parseable recommendations (%d lines)", report.total_lines)
    return report


_TRAILING_PUNCT = string.punctuation


def normalized_key(text: str) -> str:
    """Dedup key: lowercase, whitespace-collapsed, trailing punctuation stripped."""
    collapsed = " ".join(text.lower().split())
    return collapsed.rstrip(_TRAILING_PUNCT).rstrip()


def dedupe(recs: list[Recommendation]) -> list[Recommendation]:
    """Stable-order dedup by normalized text; first occurrence wins."""
    seen: set[str] = set()
    out = []
    for rec in recs:
        key = normalized_key(rec.text)
        if key in seen:
            continue
        seen.add(key)
        out.append(rec)
    return out
