"""Domain model for chart-refinement sessions.

A Session tracks one chart through its lifecycle: the uploaded image, the
recovered plotting-script spec, rounds of critique recommendations, and the
revisions produced by applying selected recommendations.
"""

from __future__ import annotations

import hashlib
import io
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

from PIL import Image as PILImage

from .errors import IllegalStatusTransition, InvalidImage, NotFound, UnknownRecommendation

DEFAULT_IMAGE_SIZE_CAP = 10 * 1024 * 1024  # bound sandbox and backend payloads

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


def utc_now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat()


def new_id() -> str:
    """128-bit random hex id; collision-free without coordination."""
    return secrets.token_hex(16)


class ImageFormat(str, Enum):
    PNG = "PNG"
    JPEG = "JPEG"

    @property
    def media_type(self) -> str:
        return "image/png" if self is ImageFormat.PNG else "image/jpeg"


class SpecOrigin(str, Enum):
    DERENDERED = "DERENDERED"
    EDITED = "EDITED"
    USER_SUPPLIED = "USER_SUPPLIED"


class RecommendationStatus(str, Enum):
    PROPOSED = "PROPOSED"
    SELECTED = "SELECTED"
    APPLIED = "APPLIED"
    DISMISSED = "DISMISSED"


# Legal recommendation status moves; APPLIED and DISMISSED are terminal.
_STATUS_TRANSITIONS = {
    RecommendationStatus.PROPOSED: {RecommendationStatus.SELECTED, RecommendationStatus.DISMISSED},
    RecommendationStatus.SELECTED: {RecommendationStatus.APPLIED},
    RecommendationStatus.APPLIED: set(),
    RecommendationStatus.DISMISSED: set(),
}


class SessionState(str, Enum):
    CREATED = "CREATED"
    DERENDERED = "DERENDERED"
    ANALYZED = "ANALYZED"
    REFINING = "REFINING"
    FAILED = "FAILED"


class RenderStatus(str, Enum):
    SUCCESS = "SUCCESS"
    CODE_ERROR = "CODE_ERROR"
    TIMEOUT = "TIMEOUT"
    OUTPUT_MISSING = "OUTPUT_MISSING"


def _sniff_format(data: bytes) -> ImageFormat:
    if data.startswith(_PNG_MAGIC):
        return ImageFormat.PNG
    if data.startswith(_JPEG_MAGIC):
        return ImageFormat.JPEG
    raise InvalidImage("payload is neither PNG nor JPEG (magic bytes unrecognized)")


@dataclass
class ChartImage:
    """Raster chart image plus recomputable identity metadata."""

    id: str
    data: bytes
    format: ImageFormat
    width_px: int
    height_px: int
    sha256: str

    @classmethod
    def from_bytes(
        cls,
        data: bytes,
        declared_format: ImageFormat | str | None = None,
        size_cap: int = DEFAULT_IMAGE_SIZE_CAP,
    ) -> "ChartImage":
        if not data:
            raise InvalidImage("empty image payload")
        if len(data) > size_cap:
            raise InvalidImage(f"payload of {len(data)} bytes exceeds cap of {size_cap}")
        fmt = _sniff_format(data)
        if declared_format is not None and ImageFormat(declared_format) is not fmt:
            raise InvalidImage(
                f"declared format {ImageFormat(declared_format).value} does not match payload magic ({fmt.value})"
            )
        try:
            with PILImage.open(io.BytesIO(data)) as im:
                width, height = im.size
        except Exception as exc:
            raise InvalidImage(f"undecodable image payload: {exc}") from exc
        if width <= 0 or height <= 0:
            raise InvalidImage("image has zero dimensions")
        return cls(
            id=new_id(),
            data=data,
            format=fmt,
            width_px=width,
            height_px=height,
            sha256=hashlib.sha256(data).hexdigest(),
        )

    def validate(self, size_cap: int = DEFAULT_IMAGE_SIZE_CAP) -> None:
        if not self.data:
            raise InvalidImage("empty image payload")
        if len(self.data) > size_cap:
            raise InvalidImage(f"payload of {len(self.data)} bytes exceeds cap of {size_cap}")
        if _sniff_format(self.data) is not self.format:
            raise InvalidImage("declared format does not match payload magic bytes")
        if self.width_px <= 0 or self.height_px <= 0:
            raise InvalidImage("image has zero dimensions")
        if hashlib.sha256(self.data).hexdigest() != self.sha256:
            raise InvalidImage("sha256 does not match payload")


@dataclass
class ChartSpec:
    """The intermediate representation: plotting-script source text."""

    source: str
    origin: SpecOrigin
    parent_revision: int | None = None
    validated: bool = False

    def __post_init__(self) -> None:
        if not self.source:
            raise ValueError("spec source must be non-empty")


@dataclass
class RenderResult:
    """Outcome of executing a spec in the render sandbox."""

    status: RenderStatus
    image: ChartImage | None = None
    stderr_excerpt: str = ""
    duration_ms: int = 0
    vector_svg: bytes | None = None


@dataclass
class Recommendation:
    """One parsed single-line design critique."""

    id: str
    session_id: str
    round: int
    text: str
    raw_line: str
    status: RecommendationStatus = RecommendationStatus.PROPOSED
    category: str | None = None

    def __post_init__(self) -> None:
        if "\n" in self.text or "\r" in self.text:
            raise ValueError("recommendation text must be a single line")
        if not self.text.strip():
            raise ValueError("recommendation text must be non-empty")
        if self.round < 0:
            raise ValueError("round must be non-negative")

    def transition(self, new_status: RecommendationStatus) -> None:
        if new_status not in _STATUS_TRANSITIONS[self.status]:
            raise IllegalStatusTransition(
                f"recommendation {self.id}: {self.status.value} -> {new_status.value} is not allowed"
            )
        self.status = new_status


@dataclass
class Revision:
    """One validated (or attempted) spec in a session's history."""

    index: int
    spec: ChartSpec
    applied_recommendation_ids: list[str] = field(default_factory=list)
    render: RenderResult | None = None
    created_at: str = field(default_factory=utc_now_rfc3339)


@dataclass
class Session:
    """One chart's full refinement lifecycle."""

    id: str
    image: ChartImage
    revisions: list[Revision] = field(default_factory=list)
    recommendations: list[Recommendation] = field(default_factory=list)
    state: SessionState = SessionState.CREATED
    backend_config_snapshot: dict = field(default_factory=dict)

    @classmethod
    def create(cls, image: ChartImage, backend_config_snapshot: dict | None = None) -> "Session":
        image.validate()
        return cls(
            id=new_id(),
            image=image,
            backend_config_snapshot=dict(backend_config_snapshot or {}),
        )

    # -- recommendation bookkeeping ------------------------------------

    def find_recommendation(self, rec_id: str) -> Recommendation:
        for rec in self.recommendations:
            if rec.id == rec_id:
                return rec
        raise UnknownRecommendation(f"no recommendation {rec_id!r} in session {self.id}")

    def max_round(self) -> int:
        """Highest recommendation round present, or -1 when none exist."""
        return max((r.round for r in self.recommendations), default=-1)

    def add_recommendations(self, round_no: int, parsed: list[tuple[str, str]]) -> list[Recommendation]:
        """Append (text, raw_line) pairs as PROPOSED recommendations for a round."""
        added = []
        for text, raw_line in parsed:
            rec = Recommendation(
                id=new_id(),
                session_id=self.id,
                round=round_no,
                text=text,
                raw_line=raw_line,
            )
            self.recommendations.append(rec)
            added.append(rec)
        return added

    # -- revisions ------------------------------------------------------

    def append_revision(
        self,
        spec: ChartSpec,
        applied_ids: list[str],
        render: RenderResult | None = None,
    ) -> Revision:
        """Append the next revision, transitioning applied recommendations to APPLIED.

        Revision 0 must carry no applied ids; later revisions may only apply
        recommendations currently in SELECTED status.
        """
        next_index = len(self.revisions)
        if next_index == 0 and applied_ids:
            raise IllegalStatusTransition("revision 0 must have no applied recommendations")
        recs = [self.find_recommendation(rid) for rid in applied_ids]
        for rec in recs:
            if rec.status is not RecommendationStatus.SELECTED:
                raise IllegalStatusTransition(
                    f"recommendation {rec.id} is {rec.status.value}, expected SELECTED"
                )
        revision = Revision(
            index=next_index,
            spec=spec,
            applied_recommendation_ids=list(applied_ids),
            render=render,
        )
        for rec in recs:
            rec.transition(RecommendationStatus.APPLIED)
        self.revisions.append(revision)
        return revision

    def latest_revision(self) -> Revision:
        if not self.revisions:
            raise NotFound("session has no revisions yet")
        return self.revisions[-1]

    # -- invariants -------------------------------------------------------

    def check_invariants(self) -> None:
        """Raise ValueError on any violated session invariant."""
        self.image.validate()
        for i, rev in enumerate(self.revisions):
            if rev.index != i:
                raise ValueError(f"revision indices not contiguous at position {i}")
            if i == 0 and rev.applied_recommendation_ids:
                raise ValueError("revision 0 must have empty applied_recommendation_ids")
            if rev.spec.validated and (
                rev.render is None or rev.render.status is not RenderStatus.SUCCESS
            ):
                raise ValueError(f"revision {i} claims a validated spec without a SUCCESS render")
            for rid in rev.applied_recommendation_ids:
                rec = self.find_recommendation(rid)
                if rec.status is not RecommendationStatus.APPLIED:
                    raise ValueError(f"revision {i} references non-APPLIED recommendation {rid}")
                if rec.round >= rev.index:
                    raise ValueError(
                        f"revision {i} applies recommendation {rid} from a later round {rec.round}"
                    )
        if self.state in (SessionState.ANALYZED, SessionState.REFINING) and self.max_round() < 0:
            raise ValueError(f"state {self.state.value} requires at least one recommendation round")
        for rec in self.recommendations:
            if rec.session_id != self.id:
                raise ValueError(f"recommendation {rec.id} belongs to another session")
        ids = [r.id for r in self.recommendations]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate recommendation ids")
