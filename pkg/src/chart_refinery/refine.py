"""Stage 3: turn selected recommendations into a validated new revision.

The edit prompt asks for a whole replacement script (robust against model
diff formatting); each failed render feeds its error back into the next
attempt. A new revision is appended only when the sandbox accepts the edit,
so the session is untouched on every failure path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

from .backends import LlmBackendConfig, llm_completion
from .critique import ParseReport, critique, normalized_key
from .derender import extract_code_block
from .errors import EmptyCompletion, IllegalStatusTransition, RenderValidationFailed
from .models import (
    ChartSpec,
    Recommendation,
    RecommendationStatus,
    RenderResult,
    RenderStatus,
    Session,
    SessionState,
    SpecOrigin,
)
from .sandbox import RenderPool, SandboxConfig, render

logger = logging.getLogger(__name__)

DEFAULT_MAX_EDIT_ATTEMPTS = 3

AuditFn = Callable[[str, dict], None]

_EDIT_ROLE_LINE = (
    "You are an expert in data visualization. Apply the following design "
    "changes to the plotting script below."
)
_EDIT_CLOSING = (
    "Return only the complete modified script in a single fenced code block."
)


@dataclass
class EditRequest:
    base_spec: ChartSpec
    selected: list[Recommendation]
    prompt_text: str


@dataclass
class EditOutcome:
    new_spec: ChartSpec | None
    render: RenderResult | None
    attempts: int
    failure_reason: str | None = None


def build_edit_prompt(
    base_spec: ChartSpec,
    selected: list[Recommendation],
    error_context: str | None = None,
) -> str:
    """Deterministic edit prompt: role line, numbered changes, fenced source."""
    if not selected:
        raise ValueError("selected recommendations must be non-empty")
    changes = "\n".join(f"{i}. {rec.text}" for i, rec in enumerate(selected, start=1))
    sections = [
        _EDIT_ROLE_LINE,
        changes,
        f"```python\n{base_spec.source}\n```",
    ]
    if error_context:
        sections.append(
            "The previous attempt failed to execute with this error:\n"
            f"```\n{error_context}\n```\n"
            "Fix the problem and apply the changes again."
        )
    sections.append(_EDIT_CLOSING)
    return "\n\n".join(sections)


def apply_recommendations(
    session: Session,
    selected_ids: list[str],
    llm_cfg: LlmBackendConfig,
    sandbox_cfg: SandboxConfig,
    max_edit_attempts: int = DEFAULT_MAX_EDIT_ATTEMPTS,
    audit: AuditFn | None = None,
    pool: RenderPool | None = None,
) -> EditOutcome:
    """Edit, render-validate, and append a revision for the selected recs.

    On success every selected recommendation transitions to APPLIED and the
    revision list grows by one. On any failure the session is unchanged and
    RenderValidationFailed carries the last attempt's details.
    """
    if not selected_ids:
        raise ValueError("selected_ids must be non-empty")
    if session.state not in (SessionState.ANALYZED, SessionState.REFINING):
        raise ValueError(f"session state {session.state.value} does not allow refinement")
    selected = [session.find_recommendation(rid) for rid in selected_ids]
    for rec in selected:
        if rec.status is not RecommendationStatus.SELECTED:
            raise IllegalStatusTransition(
                f"recommendation {rec.id} is {rec.status.value}, expected SELECTED"
            )
    base_revision = session.latest_revision()
    base_spec = base_revision.spec

    error_context: str | None = None
    last_render: RenderResult | None = None
    last_spec: ChartSpec | None = None
    for attempt in range(1, max_edit_attempts + 1):
        prompt = build_edit_prompt(base_spec, selected, error_context)
        completion = llm_completion(prompt, llm_cfg, purpose="edit")
        try:
            source = extract_code_block(completion.text)
        except EmptyCompletion:
            error_context = "the reply contained no code block"
            _audit(audit, "edit_attempt_failed", {"attempt": attempt, "reason": "empty_completion"})
            continue
        candidate = ChartSpec(
            source=source,
            origin=SpecOrigin.EDITED,
            parent_revision=base_revision.index,
            validated=False,
        )
        last_spec = candidate
        result = render(candidate, sandbox_cfg, pool=pool)
        last_render = result
        if result.status is RenderStatus.SUCCESS:
            candidate.validated = True
            revision = session.append_revision(candidate, list(selected_ids), render=result)
            session.state = SessionState.REFINING
            _audit(audit, "revision_applied", {
                "revision": revision.index,
                "attempts": attempt,
                "applied_ids": list(selected_ids),
            })
            return EditOutcome(new_spec=candidate, render=result, attempts=attempt)
        error_context = result.stderr_excerpt or result.status.value
        _audit(audit, "edit_attempt_failed", {
            "attempt": attempt,
            "reason": result.status.value,
            "stderr_excerpt": result.stderr_excerpt,
        })
        logger.warning("edit attempt %d failed: %s", attempt, result.status.value)

    outcome = EditOutcome(
        new_spec=last_spec,
        render=last_render,
        attempts=max_edit_attempts,
        failure_reason=f"render validation failed after {max_edit_attempts} attempts",
    )
    raise RenderValidationFailed(outcome.failure_reason, outcome)


def run_critique_round(
    session: Session,
    llm_cfg: LlmBackendConfig,
    audit: AuditFn | None = None,
) -> ParseReport:
    """Critique the latest revision's spec and append a new recommendation round.

    New texts are deduped within the round and against already-APPLIED
    recommendations (collisions are logged, not an error).
    """
    latest = session.latest_revision()
    report = critique(latest.spec, llm_cfg)
    round_no = session.max_round() + 1

    applied_keys = {
        normalized_key(rec.text)
        for rec in session.recommendations
        if rec.status is RecommendationStatus.APPLIED
    }
    fresh: list[tuple[str, str]] = []
    seen: set[str] = set()
    for parsed in report.parsed:
        key = normalized_key(parsed.text)
        if key in applied_keys:
            logger.info("round %d: dropping already-applied critique %r", round_no, parsed.text)
            continue
        if key in seen:
            continue
        seen.add(key)
        fresh.append((parsed.text, parsed.raw_line))
    session.add_recommendations(round_no, fresh)
    _audit(audit, "critique_round", {
        "round": round_no,
        "parsed": len(report.parsed),
        "appended": len(fresh),
        "raw_completion": report.raw_completion,
    })
    return report


def reanalyze(session: Session, llm_cfg: LlmBackendConfig, audit: AuditFn | None = None) -> ParseReport:
    """Re-run critique after a refinement; requires a validated latest revision."""
    latest = session.latest_revision()
    if not latest.spec.validated:
        raise ValueError("latest revision is not validated; render it before re-analyzing")
    return run_critique_round(session, llm_cfg, audit=audit)


def _audit(audit: AuditFn | None, kind: str, payload: dict) -> None:
    if audit is not None:
        audit(kind, payload)
