"""Durable on-disk store for sessions.

Layout: one directory per session holding a schema-versioned JSON document
plus content-addressed blobs:

    <root>/sessions/<id>/session.json
    <root>/sessions/<id>/blobs/<sha256>
    <root>/sessions/<id>/audit/events.jsonl

Writes replace session.json atomically so concurrent readers always see a
complete document; write serialization across processes is the caller's job
(the service holds a per-session lease).
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from .errors import CorruptRecord, NotFound
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
    utc_now_rfc3339,
)

SCHEMA_VERSION = 1


class SessionStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)

    # -- paths -----------------------------------------------------------

    def session_dir(self, session_id: str) -> Path:
        return self.root / "sessions" / session_id

    def blob_path(self, session_id: str, sha256: str) -> Path:
        return self.session_dir(session_id) / "blobs" / sha256

    # -- blobs -----------------------------------------------------------

    def _write_blob(self, session_id: str, data: bytes) -> str:
        sha = hashlib.sha256(data).hexdigest()
        path = self.blob_path(session_id, sha)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return sha

    def _read_blob(self, session_id: str, sha256: str) -> bytes:
        path = self.blob_path(session_id, sha256)
        if not path.exists():
            raise CorruptRecord(f"missing blob {sha256} for session {session_id}")
        data = path.read_bytes()
        if hashlib.sha256(data).hexdigest() != sha256:
            raise CorruptRecord(f"blob {sha256} content does not match its hash")
        return data

    # -- save / load -------------------------------------------------------

    def save(self, session: Session) -> None:
        sdir = self.session_dir(session.id)
        sdir.mkdir(parents=True, exist_ok=True)
        self._write_blob(session.id, session.image.data)
        for rev in session.revisions:
            if rev.render and rev.render.image is not None:
                self._write_blob(session.id, rev.render.image.data)
            if rev.render and rev.render.vector_svg is not None:
                self._write_blob(session.id, rev.render.vector_svg)
        doc = session_to_doc(session)
        tmp = sdir / "session.json.tmp"
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
        os.replace(tmp, sdir / "session.json")

    def load(self, session_id: str) -> Session:
        path = self.session_dir(session_id) / "session.json"
        if not path.exists():
            raise NotFound(f"no session {session_id!r}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptRecord(f"session {session_id}: unparseable session.json: {exc}") from exc
        try:
            return _session_from_doc(doc, self, session_id)
        except CorruptRecord:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptRecord(f"session {session_id}: schema validation failed: {exc}") from exc

    def exists(self, session_id: str) -> bool:
        return (self.session_dir(session_id) / "session.json").exists()

    def list_ids(self) -> list[str]:
        base = self.root / "sessions"
        return sorted(p.name for p in base.iterdir() if (p / "session.json").exists())

    # -- audit -------------------------------------------------------------

    def append_audit(self, session_id: str, kind: str, payload: dict) -> None:
        """Append one audit event; audit history is not part of session equality."""
        adir = self.session_dir(session_id) / "audit"
        adir.mkdir(parents=True, exist_ok=True)
        record = {"ts": utc_now_rfc3339(), "kind": kind, **payload}
        with open(adir / "events.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


# -- document mapping --------------------------------------------------------

def session_to_doc(session: Session) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "id": session.id,
        "state": session.state.value,
        "backend_config_snapshot": session.backend_config_snapshot,
        "image": {
            "id": session.image.id,
            "format": session.image.format.value,
            "width_px": session.image.width_px,
            "height_px": session.image.height_px,
            "sha256": session.image.sha256,
        },
        "recommendations": [
            {
                "id": r.id,
                "session_id": r.session_id,
                "round": r.round,
                "text": r.text,
                "raw_line": r.raw_line,
                "status": r.status.value,
                "category": r.category,
            }
            for r in session.recommendations
        ],
        "revisions": [_revision_to_doc(rev) for rev in session.revisions],
    }


def _revision_to_doc(rev: Revision) -> dict:
    render = None
    if rev.render is not None:
        render = {
            "status": rev.render.status.value,
            "stderr_excerpt": rev.render.stderr_excerpt,
            "duration_ms": rev.render.duration_ms,
            "image": None,
            "vector_svg_sha256": None,
        }
        if rev.render.image is not None:
            img = rev.render.image
            render["image"] = {
                "id": img.id,
                "format": img.format.value,
                "width_px": img.width_px,
                "height_px": img.height_px,
                "sha256": img.sha256,
            }
        if rev.render.vector_svg is not None:
            render["vector_svg_sha256"] = hashlib.sha256(rev.render.vector_svg).hexdigest()
    return {
        "index": rev.index,
        "spec": {
            "source": rev.spec.source,
            "origin": rev.spec.origin.value,
            "parent_revision": rev.spec.parent_revision,
            "validated": rev.spec.validated,
        },
        "applied_recommendation_ids": list(rev.applied_recommendation_ids),
        "render": render,
        "created_at": rev.created_at,
    }


def _expect(doc: dict, key: str, types) -> object:
    if key not in doc:
        raise CorruptRecord(f"missing field {key!r}")
    value = doc[key]
    if not isinstance(value, types):
        raise CorruptRecord(f"field {key!r} has type {type(value).__name__}")
    return value


def _image_from_doc(doc: dict, store: SessionStore, session_id: str) -> ChartImage:
    sha = _expect(doc, "sha256", str)
    data = store._read_blob(session_id, sha)
    return ChartImage(
        id=_expect(doc, "id", str),
        data=data,
        format=ImageFormat(_expect(doc, "format", str)),
        width_px=_expect(doc, "width_px", int),
        height_px=_expect(doc, "height_px", int),
        sha256=sha,
    )


def _session_from_doc(doc: dict, store: SessionStore, session_id: str) -> Session:
    version = _expect(doc, "schema_version", int)
    if version != SCHEMA_VERSION:
        raise CorruptRecord(f"unsupported schema_version {version}")
    sid = _expect(doc, "id", str)
    if sid != session_id:
        raise CorruptRecord(f"document id {sid!r} does not match directory {session_id!r}")

    image = _image_from_doc(_expect(doc, "image", dict), store, session_id)

    recommendations = []
    for rdoc in _expect(doc, "recommendations", list):
        if not isinstance(rdoc, dict):
            raise CorruptRecord("recommendation entry is not an object")
        rec = Recommendation(
            id=_expect(rdoc, "id", str),
            session_id=_expect(rdoc, "session_id", str),
            round=_expect(rdoc, "round", int),
            text=_expect(rdoc, "text", str),
            raw_line=_expect(rdoc, "raw_line", str),
            status=RecommendationStatus(_expect(rdoc, "status", str)),
            category=rdoc.get("category"),
        )
        recommendations.append(rec)

    revisions = []
    for vdoc in _expect(doc, "revisions", list):
        if not isinstance(vdoc, dict):
            raise CorruptRecord("revision entry is not an object")
        sdoc = _expect(vdoc, "spec", dict)
        spec = ChartSpec(
            source=_expect(sdoc, "source", str),
            origin=SpecOrigin(_expect(sdoc, "origin", str)),
            parent_revision=sdoc.get("parent_revision"),
            validated=_expect(sdoc, "validated", bool),
        )
        render = None
        rdoc = vdoc.get("render")
        if rdoc is not None:
            if not isinstance(rdoc, dict):
                raise CorruptRecord("render entry is not an object")
            render_image = None
            if rdoc.get("image") is not None:
                render_image = _image_from_doc(rdoc["image"], store, session_id)
            vector_svg = None
            if rdoc.get("vector_svg_sha256"):
                vector_svg = store._read_blob(session_id, rdoc["vector_svg_sha256"])
            render = RenderResult(
                status=RenderStatus(_expect(rdoc, "status", str)),
                image=render_image,
                stderr_excerpt=_expect(rdoc, "stderr_excerpt", str),
                duration_ms=_expect(rdoc, "duration_ms", int),
                vector_svg=vector_svg,
            )
        revisions.append(
            Revision(
                index=_expect(vdoc, "index", int),
                spec=spec,
                applied_recommendation_ids=list(_expect(vdoc, "applied_recommendation_ids", list)),
                render=render,
                created_at=_expect(vdoc, "created_at", str),
            )
        )

    return Session(
        id=sid,
        image=image,
        revisions=revisions,
        recommendations=recommendations,
        state=SessionState(_expect(doc, "state", str)),
        backend_config_snapshot=_expect(doc, "backend_config_snapshot", dict),
    )
