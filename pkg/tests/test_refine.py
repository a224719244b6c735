"""Edit prompting, apply/retry/exhaustion semantics, re-analysis rounds."""

from __future__ import annotations

from unittest import mock

import pytest

from chart_refinery.backends import CompletionResult, LlmBackendConfig
from chart_refinery.errors import (
    BackendUnreachable,
    IllegalStatusTransition,
    RenderValidationFailed,
    UnknownRecommendation,
)
from chart_refinery.models import (
    ChartImage,
    ChartSpec,
    RecommendationStatus,
    RenderResult,
    RenderStatus,
    Session,
    SessionState,
    SpecOrigin,
)
from chart_refinery.refine import (
    apply_recommendations,
    build_edit_prompt,
    reanalyze,
    run_critique_round,
)
from chart_refinery.sandbox import SandboxConfig
from conftest import make_png

VALID_SCRIPT = "import matplotlib.pyplot as plt\nplt.plot([1, 2, 3])"
BROKEN_SCRIPT = "raise RuntimeError('deliberately broken edit')"


def analyzed_session(n_recs: int = 3) -> Session:
    session = Session.create(ChartImage.from_bytes(make_png(seed=11)))
    spec = ChartSpec(source=VALID_SCRIPT, origin=SpecOrigin.DERENDERED, validated=True)
    session.append_revision(
        spec, [], render=RenderResult(status=RenderStatus.SUCCESS,
                                      image=ChartImage.from_bytes(make_png(seed=12))),
    )
    session.add_recommendations(0, [(f"fix issue {i}", f"# fix issue {i}") for i in range(n_recs)])
    session.state = SessionState.ANALYZED
    return session


def select(session: Session, *indices: int) -> list[str]:
    ids = []
    for i in indices:
        rec = session.recommendations[i]
        rec.transition(RecommendationStatus.SELECTED)
        ids.append(rec.id)
    return ids


class TestEditPrompt:
    def test_deterministic(self):
        session = analyzed_session()
        recs = session.recommendations[:2]
        base = session.revisions[0].spec
        assert build_edit_prompt(base, recs) == build_edit_prompt(base, recs)

    def test_embeds_source_and_texts_once(self):
        session = analyzed_session()
        recs = session.recommendations[:2]
        base = session.revisions[0].spec
        prompt = build_edit_prompt(base, recs)
        assert prompt.count(base.source) == 1
        for i, rec in enumerate(recs, start=1):
            assert prompt.count(rec.text) == 1
            assert f"{i}. {rec.text}" in prompt
        assert "```python" in prompt

    def test_error_context_included(self):
        session = analyzed_session()
        recs = session.recommendations[:1]
        base = session.revisions[0].spec
        prompt = build_edit_prompt(base, recs, error_context="NameError: nope")
        assert "NameError: nope" in prompt

    def test_empty_selection_rejected(self):
        session = analyzed_session()
        with pytest.raises(ValueError):
            build_edit_prompt(session.revisions[0].spec, [])


def _sandbox(app_config) -> SandboxConfig:
    return app_config.sandbox


def _stub_llm_cfg(stub, timeout=15) -> LlmBackendConfig:
    return LlmBackendConfig(endpoint_url=stub.url("/api/generate"), timeout_s=timeout, max_retries=0)


def _edit_reply(script: str) -> dict:
    return {"response": f"```python\n{script}\n```"}


class TestApply:
    def test_mock_happy_path(self, app_config):
        session = analyzed_session()
        ids = select(session, 0, 1)
        outcome = apply_recommendations(session, ids, LlmBackendConfig(), _sandbox(app_config))
        assert outcome.attempts == 1
        assert outcome.failure_reason is None
        assert outcome.new_spec.validated is True
        assert outcome.new_spec.origin is SpecOrigin.EDITED
        assert outcome.new_spec.parent_revision == 0
        assert len(session.revisions) == 2
        assert session.state is SessionState.REFINING
        for rid in ids:
            assert session.find_recommendation(rid).status is RecommendationStatus.APPLIED
        assert session.recommendations[2].status is RecommendationStatus.PROPOSED
        session.check_invariants()

    def test_broken_then_valid_retries(self, app_config, stub_backend):
        session = analyzed_session()
        ids = select(session, 0)
        stub_backend.script = [
            (200, _edit_reply(BROKEN_SCRIPT)),
            (200, _edit_reply(VALID_SCRIPT + "\nplt.title('fixed')")),
        ]
        outcome = apply_recommendations(
            session, ids, _stub_llm_cfg(stub_backend), _sandbox(app_config)
        )
        assert outcome.attempts == 2
        assert len(session.revisions) == 2
        # the retry prompt carries the previous sandbox error
        second_prompt = stub_backend.requests[1][1]["prompt"]
        assert "deliberately broken edit" in second_prompt

    def test_exhaustion_leaves_session_untouched(self, app_config, stub_backend):
        session = analyzed_session()
        ids = select(session, 0, 1)
        stub_backend.default = lambda path, body: (200, _edit_reply(BROKEN_SCRIPT))
        with pytest.raises(RenderValidationFailed) as err:
            apply_recommendations(
                session, ids, _stub_llm_cfg(stub_backend), _sandbox(app_config),
                max_edit_attempts=3,
            )
        assert err.value.outcome.attempts == 3
        assert err.value.outcome.failure_reason
        assert len(session.revisions) == 1
        for rid in ids:
            assert session.find_recommendation(rid).status is RecommendationStatus.SELECTED
        session.check_invariants()

    def test_empty_ids_rejected(self, app_config):
        session = analyzed_session()
        with pytest.raises(ValueError):
            apply_recommendations(session, [], LlmBackendConfig(), _sandbox(app_config))

    def test_wrong_state_rejected(self, app_config):
        session = analyzed_session()
        session.state = SessionState.CREATED
        ids = [session.recommendations[0].id]
        with pytest.raises(ValueError, match="state"):
            apply_recommendations(session, ids, LlmBackendConfig(), _sandbox(app_config))

    def test_unselected_rec_rejected(self, app_config):
        session = analyzed_session()
        ids = [session.recommendations[0].id]  # still PROPOSED
        with pytest.raises(IllegalStatusTransition):
            apply_recommendations(session, ids, LlmBackendConfig(), _sandbox(app_config))

    def test_unknown_id_rejected(self, app_config):
        session = analyzed_session()
        with pytest.raises(UnknownRecommendation):
            apply_recommendations(session, ["missing"], LlmBackendConfig(), _sandbox(app_config))

    def test_backend_down_leaves_session_untouched(self, app_config):
        session = analyzed_session()
        ids = select(session, 0)
        cfg = LlmBackendConfig(endpoint_url="http://127.0.0.1:9", timeout_s=1, max_retries=0)
        with pytest.raises(BackendUnreachable):
            apply_recommendations(session, ids, cfg, _sandbox(app_config))
        assert len(session.revisions) == 1
        assert session.find_recommendation(ids[0]).status is RecommendationStatus.SELECTED


@pytest.mark.parametrize(
    "pattern,expect_growth,expect_attempts",
    [
        ("V", 1, 1),
        ("BV", 1, 2),
        ("BBV", 1, 3),
        ("BBB", 0, 3),
        ("EEV", 1, 3),  # completions with no code block count as failed attempts
        ("EEE", 0, 3),
    ],
)
def test_atomicity_growth(pattern, expect_growth, expect_attempts, app_config):
    """Revision count grows by exactly 1 on success and 0 on failure."""
    session = analyzed_session()
    ids = select(session, 0)
    replies = iter(pattern)

    def fake_llm(prompt, cfg, purpose="critique"):
        kind = next(replies)
        if kind == "E":
            return CompletionResult("no code at all", attempts=1, latency_ms=1)
        script = VALID_SCRIPT if kind == "V" else BROKEN_SCRIPT
        return CompletionResult(f"```python\n{script}\n```", attempts=1, latency_ms=1)

    def fake_render(spec, cfg, pool=None):
        if spec.source == VALID_SCRIPT:
            return RenderResult(status=RenderStatus.SUCCESS,
                                image=ChartImage.from_bytes(make_png(seed=21)))
        return RenderResult(status=RenderStatus.CODE_ERROR, stderr_excerpt="boom")

    with mock.patch("chart_refinery.refine.llm_completion", fake_llm), \
         mock.patch("chart_refinery.refine.render", fake_render):
        before = len(session.revisions)
        if expect_growth:
            outcome = apply_recommendations(
                session, ids, LlmBackendConfig(), _sandbox(app_config), max_edit_attempts=3
            )
            assert outcome.attempts == expect_attempts
        else:
            with pytest.raises(RenderValidationFailed):
                apply_recommendations(
                    session, ids, LlmBackendConfig(), _sandbox(app_config), max_edit_attempts=3
                )
        assert len(session.revisions) - before == expect_growth
    expected_status = (
        RecommendationStatus.APPLIED if expect_growth else RecommendationStatus.SELECTED
    )
    assert session.find_recommendation(ids[0]).status is expected_status


class TestReanalyze:
    def test_rounds_increment(self, stub_backend):
        session = analyzed_session()
        stub_backend.script = [
            (200, {"response": "# round one issue"}),
            (200, {"response": "# round two issue"}),
        ]
        cfg = _stub_llm_cfg(stub_backend)
        reanalyze(session, cfg)
        assert session.max_round() == 1
        reanalyze(session, cfg)
        assert session.max_round() == 2
        rounds = [r.round for r in session.recommendations]
        assert rounds == [0, 0, 0, 1, 2]

    def test_requires_validated_revision(self):
        session = analyzed_session()
        session.revisions[-1].spec.validated = False
        with pytest.raises(ValueError, match="validated"):
            reanalyze(session, LlmBackendConfig())

    def test_dedupes_against_applied(self, app_config, stub_backend):
        session = analyzed_session()
        ids = select(session, 0)
        applied_text = session.recommendations[0].text
        outcome = apply_recommendations(session, ids, LlmBackendConfig(), _sandbox(app_config))
        assert outcome.attempts == 1

        stub_backend.script = [
            (200, {"response": f"# {applied_text}\n# a genuinely new issue"}),
        ]
        report = reanalyze(session, _stub_llm_cfg(stub_backend))
        assert len(report.parsed) == 2  # parser saw both
        new_round = [r for r in session.recommendations if r.round == 1]
        assert [r.text for r in new_round] == ["a genuinely new issue"]

    def test_within_round_dedupe(self, stub_backend):
        session = analyzed_session()
        stub_backend.script = [(200, {"response": "# same thing\n# Same  thing."})]
        reanalyze(session, _stub_llm_cfg(stub_backend))
        new_round = [r for r in session.recommendations if r.round == 1]
        assert [r.text for r in new_round] == ["same thing"]

    def test_round_zero_uses_same_helper(self, stub_backend):
        session = Session.create(ChartImage.from_bytes(make_png(seed=31)))
        spec = ChartSpec(source=VALID_SCRIPT, origin=SpecOrigin.DERENDERED, validated=True)
        session.append_revision(spec, [], render=RenderResult(
            status=RenderStatus.SUCCESS, image=ChartImage.from_bytes(make_png(seed=32))))
        stub_backend.script = [(200, {"response": "# first ever"})]
        run_critique_round(session, _stub_llm_cfg(stub_backend))
        assert [r.round for r in session.recommendations] == [0]
