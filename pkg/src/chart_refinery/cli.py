"""Headless driver: analyze one chart, apply selected recommendations,
re-analyze, evaluate a corpus, or serve the HTTP API.

Exit codes: 0 ok, 2 usage/input error, 3 backend or render failure.
With --json each subcommand prints exactly one JSON document on stdout;
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analytics.pipeline import collect_corpus_recommendations, load_recs_file, run_eval
from .config import AppConfig, backend_snapshot, load_config
from .derender import derender
from .errors import (
    BackendTimeout,
    BackendUnreachable,
    ChartRefineryError,
    EmptyCompletion,
    RenderValidationFailed,
    SandboxMisconfigured,
)
from .models import ChartImage, RecommendationStatus, RenderStatus, Session, SessionState
from .refine import apply_recommendations, reanalyze, run_critique_round
from .sandbox import render
from .store import SessionStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BACKEND = 3

_BACKEND_ERRORS = (
    BackendUnreachable,
    BackendTimeout,
    EmptyCompletion,
    RenderValidationFailed,
    SandboxMisconfigured,
)


def _build_parser() -> argparse.ArgumentParser:
    # Global flags live on a parent parser with SUPPRESS defaults so they can
    # be given before or after the subcommand without clobbering each other.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="config file (TOML or JSON); also $CHART_REFINERY_CONFIG")
    common.add_argument("--json", action="store_true", dest="json_output", default=argparse.SUPPRESS,
                        help="machine-readable stdout (one JSON document)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="refine", description=__doc__, parents=[common])
    parser.set_defaults(config=None, json_output=False, verbose=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="de-render a chart image and critique it")
    p.add_argument("image", help="path to a PNG or JPEG chart image")
    p.add_argument("--session-dir", help="session store root (default from config)")

    p = sub.add_parser("apply", parents=[common], help="apply selected recommendations and re-render")
    p.add_argument("--session", required=True, help="session id from analyze")
    p.add_argument("--recs", required=True,
                   help="comma-separated 1-based recommendation indices, e.g. 1,3")
    p.add_argument("--session-dir", help="session store root (default from config)")

    p = sub.add_parser("reanalyze", parents=[common], help="critique the latest revision again")
    p.add_argument("--session", required=True)
    p.add_argument("--session-dir", help="session store root (default from config)")

    p = sub.add_parser("eval", parents=[common],
                       help="corpus evaluation: embed, cluster, project, report")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="directory of chart images")
    src.add_argument("--recs-file", help="precollected recommendations (.txt or .jsonl)")
    p.add_argument("--k-range", default="2:20", help="cluster count sweep, e.g. 2:20")
    p.add_argument("--seeds", default="5", help="seed count, or comma-separated seed list")
    p.add_argument("--out", default="./eval-out", help="artifact output directory")
    p.add_argument("--normalize", action="store_true", help="L2-normalize embeddings first")

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    handler = {
        "analyze": _cmd_analyze,
        "apply": _cmd_apply,
        "reanalyze": _cmd_reanalyze,
        "eval": _cmd_eval,
        "serve": _cmd_serve,
    }[args.command]
    try:
        return handler(args, cfg)
    except _BACKEND_ERRORS as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ChartRefineryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def _emit(args, doc: dict, human_lines: list[str]) -> None:
    if args.json_output:
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        for line in human_lines:
            print(line)


def _store_for(args, cfg: AppConfig) -> SessionStore:
    root = getattr(args, "session_dir", None) or cfg.store_root
    return SessionStore(root)


def _numbered(session: Session) -> list[tuple[int, object]]:
    return list(enumerate(session.recommendations, start=1))


def _write_spec_file(store: SessionStore, session: Session) -> Path:
    revision = session.latest_revision()
    specs_dir = store.session_dir(session.id) / "specs"
    specs_dir.mkdir(parents=True, exist_ok=True)
    path = specs_dir / f"revision_{revision.index}.py"
    path.write_text(revision.spec.source, encoding="utf-8")
    return path


def _cmd_analyze(args, cfg: AppConfig) -> int:
    image_path = Path(args.image)
    if not image_path.is_file():
        print(f"error: image {image_path} not found", file=sys.stderr)
        return EXIT_INPUT
    store = _store_for(args, cfg)
    image = ChartImage.from_bytes(image_path.read_bytes())
    session = Session.create(image, backend_snapshot(cfg))
    audit = lambda kind, payload: store.append_audit(session.id, kind, payload)  # noqa: E731

    result = derender(image, cfg.derender)
    render_result = render(result.spec, cfg.sandbox)
    result.spec.validated = render_result.status is RenderStatus.SUCCESS
    session.append_revision(result.spec, [], render=render_result)
    session.state = SessionState.DERENDERED
    run_critique_round(session, cfg.llm, audit=audit)
    session.state = SessionState.ANALYZED
    store.save(session)
    spec_path = _write_spec_file(store, session)

    recs = [
        {"index": i, "id": rec.id, "round": rec.round, "text": rec.text, "status": rec.status.value}
        for i, rec in _numbered(session)
    ]
    _emit(args, {
        "session_id": session.id,
        "state": session.state.value,
        "spec_path": str(spec_path),
        "render_status": render_result.status.value,
        "recommendations": recs,
    }, [
        f"session: {session.id}",
        f"spec: {spec_path}",
        "recommendations:",
        *[f"[{r['index']}] {r['text']}" for r in recs],
    ])
    return EXIT_OK


def _parse_indices(raw: str, count: int) -> list[int]:
    indices = []
    for piece in raw.split(","):
        piece = piece.strip()
        if not piece:
            continue
        idx = int(piece)
        if idx < 1 or idx > count:
            raise ValueError(f"recommendation index {idx} out of range 1..{count}")
        indices.append(idx)
    if not indices:
        raise ValueError("no recommendation indices given")
    return indices


def _cmd_apply(args, cfg: AppConfig) -> int:
    store = _store_for(args, cfg)
    session = store.load(args.session)
    indices = _parse_indices(args.recs, len(session.recommendations))
    ids = [session.recommendations[i - 1].id for i in indices]
    for rid in ids:
        rec = session.find_recommendation(rid)
        if rec.status is RecommendationStatus.PROPOSED:
            rec.transition(RecommendationStatus.SELECTED)
    audit = lambda kind, payload: store.append_audit(session.id, kind, payload)  # noqa: E731
    try:
        outcome = apply_recommendations(
            session, ids, cfg.llm, cfg.sandbox,
            max_edit_attempts=cfg.max_edit_attempts, audit=audit,
        )
    except _BACKEND_ERRORS:
        store.save(session)  # keep the SELECTED marks; no revision was appended
        raise
    store.save(session)
    spec_path = _write_spec_file(store, session)
    revision = session.latest_revision()
    image_path = store.blob_path(session.id, revision.render.image.sha256)
    _emit(args, {
        "session_id": session.id,
        "revision": revision.index,
        "render_status": revision.render.status.value,
        "attempts": outcome.attempts,
        "image_path": str(image_path),
        "spec_path": str(spec_path),
    }, [
        f"revision {revision.index} rendered: {image_path}",
    ])
    return EXIT_OK


def _cmd_reanalyze(args, cfg: AppConfig) -> int:
    store = _store_for(args, cfg)
    session = store.load(args.session)
    audit = lambda kind, payload: store.append_audit(session.id, kind, payload)  # noqa: E731
    reanalyze(session, cfg.llm, audit=audit)
    store.save(session)
    round_no = session.max_round()
    recs = [
        {"index": i, "id": rec.id, "round": rec.round, "text": rec.text, "status": rec.status.value}
        for i, rec in _numbered(session)
    ]
    new = [r for r in recs if r["round"] == round_no]
    _emit(args, {
        "session_id": session.id,
        "round": round_no,
        "recommendations": recs,
    }, [
        f"round {round_no} recommendations:",
        *[f"[{r['index']}] {r['text']}" for r in new],
    ])
    return EXIT_OK


def _parse_k_range(raw: str) -> range:
    lo, _, hi = raw.partition(":")
    lo_i, hi_i = int(lo), int(hi or lo)
    if lo_i < 2 or hi_i < lo_i:
        raise ValueError(f"bad k range {raw!r}")
    return range(lo_i, hi_i + 1)


def _parse_seeds(raw: str) -> tuple[int, ...]:
    if "," in raw:
        return tuple(int(s) for s in raw.split(",") if s.strip())
    count = int(raw)
    if count < 1:
        raise ValueError("seed count must be positive")
    return tuple(range(count))


def _cmd_eval(args, cfg: AppConfig) -> int:
    if args.recs_file:
        recs_path = Path(args.recs_file)
        if not recs_path.is_file():
            print(f"error: recs file {recs_path} not found", file=sys.stderr)
            return EXIT_INPUT
        recs = load_recs_file(recs_path)
    else:
        corpus = Path(args.corpus)
        if not corpus.is_dir():
            print(f"error: corpus {corpus} is not a directory", file=sys.stderr)
            return EXIT_INPUT
        recs = collect_corpus_recommendations(corpus, cfg.derender, cfg.llm)
    if not recs:
        print("error: corpus resolved to zero recommendations", file=sys.stderr)
        return EXIT_INPUT

    k_range = _parse_k_range(args.k_range)
    seeds = _parse_seeds(args.seeds)
    if len(recs) < k_range[-1]:
        print(
            f"error: {len(recs)} recommendations cannot support k up to {k_range[-1]}",
            file=sys.stderr,
        )
        return EXIT_INPUT

    result = run_eval(
        recs, cfg.embed, args.out,
        k_range=k_range, seeds=seeds, normalize=args.normalize,
    )
    artifacts = [
        "embeddings.bin", "clusters.json", "projection.csv",
        "recommendations.jsonl", "report.md", "projection.png", "db_curve.png",
    ]
    _emit(args, {
        "recommendations": len(recs),
        "selected_k": result.clustering.k,
        "db_score": result.clustering.db_score,
        "seed": result.clustering.seed,
        "out_dir": str(result.out_dir),
        "artifacts": artifacts,
        "embeddings_from_cache": result.from_cache,
    }, [
        f"recommendations: {len(recs)}",
        f"selected k: {result.clustering.k} (Davies-Bouldin {result.clustering.db_score:.4f})",
        f"artifacts in {result.out_dir}: {', '.join(artifacts)}",
    ])
    return EXIT_OK


def _cmd_serve(args, cfg: AppConfig) -> int:
    from .service import serve

    if args.host:
        cfg.service.host = args.host
    if args.port:
        cfg.service.port = args.port
    serve(cfg)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
