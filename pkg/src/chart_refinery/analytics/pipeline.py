"""End-to-end evaluation: corpus -> recommendations -> embeddings -> clusters.

Outputs a fixed artifact set in the chosen directory: embeddings.bin,
clusters.json, projection.csv, report.md, plus rendered figures
(projection.png, db_curve.png) and a recommendations.jsonl sidecar so the
ids in the other artifacts can be resolved back to texts.

Embeddings are cached under <out>/cache keyed by a hash of the corpus
texts and the embedding config, so re-sweeping k never re-embeds.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence


from ..backends import DerenderBackendConfig, EmbedBackendConfig, LlmBackendConfig
from ..critique import critique, normalized_key
from ..derender import derender
from ..errors import EmptyCompletion
from ..models import ChartImage, Recommendation, new_id
from .clustering import (
    DEFAULT_K_RANGE,
    DEFAULT_SEEDS,
    ClusteringResult,
    select_k,
)
from .embedding import EmbeddingMatrix, embed_corpus, read_embeddings, write_embeddings
from .figures import save_db_curve_figure, save_projection_figure
from .projection import Projection2D, project_2d, write_projection_csv
from .report import ClusterReport, build_cluster_report, write_clusters_json, write_report_md

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

ProgressFn = Callable[[float], None]


@dataclass
class EvalResult:
    matrix: EmbeddingMatrix
    clustering: ClusteringResult
    projection: Projection2D
    report: ClusterReport
    out_dir: Path
    from_cache: bool


def corpus_recommendation(text: str, raw_line: str | None = None, rec_id: str | None = None) -> Recommendation:
    """A free-standing recommendation row for corpus-scale runs."""
    return Recommendation(
        id=rec_id or new_id(),
        session_id="corpus",
        round=0,
        text=text,
        raw_line=raw_line if raw_line is not None else f"# {text}",
    )


def load_recs_file(path: str | Path) -> list[Recommendation]:
    """Load a precollected recommendations file (.jsonl with `text`, or one text per line)."""
    path = Path(path)
    recs: list[Recommendation] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if path.suffix == ".jsonl":
                doc = json.loads(line)
                text = doc["text"]
                rec_id = doc.get("id") or f"rec{lineno:06d}"
            else:
                text = line.strip()
                rec_id = f"rec{lineno:06d}"
            recs.append(corpus_recommendation(text, rec_id=rec_id))
    return recs


def collect_corpus_recommendations(
    corpus_dir: str | Path,
    derender_cfg: DerenderBackendConfig,
    llm_cfg: LlmBackendConfig,
    progress: ProgressFn | None = None,
) -> list[Recommendation]:
    """De-render and critique every image in a directory, pooling all lines.

    Duplicate critiques from one image are dropped; the same text from
    different images is kept (frequency carries signal for clustering).
    """
    corpus_dir = Path(corpus_dir)
    images = sorted(
        p for p in corpus_dir.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    recs: list[Recommendation] = []
    for i, path in enumerate(images):
        try:
            image = ChartImage.from_bytes(path.read_bytes())
            spec = derender(image, derender_cfg).spec
            report = critique(spec, llm_cfg)
        except EmptyCompletion:
            logger.warning("skipping %s: backend returned no code", path.name)
            continue
        seen: set[str] = set()
        for parsed in report.parsed:
            key = normalized_key(parsed.text)
            if key in seen:
                continue
            seen.add(key)
            # Content-derived ids keep artifacts stable across runs over the
            # same corpus; the ordinal disambiguates duplicate images.
            rec_id = f"{i:04d}-{image.sha256[:10]}-{len(seen):02d}"
            recs.append(corpus_recommendation(parsed.text, raw_line=parsed.raw_line, rec_id=rec_id))
        if progress is not None:
            progress((i + 1) / max(1, len(images)))
    return recs


def _corpus_cache_key(recs: Sequence[Recommendation], cfg: EmbedBackendConfig) -> str:
    # Keyed by corpus texts (in order) plus the embedding config; ids stay
    # out so regenerated ids over identical content still hit the cache.
    hasher = hashlib.sha256()
    hasher.update(f"{cfg.model_name}|{cfg.dims}|{cfg.endpoint_url}".encode("utf-8"))
    for rec in recs:
        hasher.update(b"\x1e" + rec.text.encode("utf-8"))
    return hasher.hexdigest()


def embed_with_cache(
    recs: Sequence[Recommendation],
    cfg: EmbedBackendConfig,
    cache_dir: str | Path | None,
    progress: ProgressFn | None = None,
) -> tuple[EmbeddingMatrix, bool]:
    """Embed the corpus, reusing a content-addressed cache when present."""
    cache_path = None
    if cache_dir is not None:
        cache_path = Path(cache_dir) / f"{_corpus_cache_key(recs, cfg)}.bin"
        if cache_path.exists():
            values = read_embeddings(cache_path)
            if values.shape == (len(recs), cfg.dims):
                logger.info("embedding cache hit: %s", cache_path.name)
                matrix = EmbeddingMatrix(row_ids=[r.id for r in recs], values=values)
                if progress is not None:
                    progress(1.0)
                return matrix, True
            logger.warning("embedding cache shape mismatch, re-embedding")
    matrix = embed_corpus(recs, cfg, progress=progress)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        write_embeddings(cache_path, matrix)
    return matrix, False


def run_eval(
    recs: Sequence[Recommendation],
    embed_cfg: EmbedBackendConfig,
    out_dir: str | Path,
    k_range: Iterable[int] = DEFAULT_K_RANGE,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    normalize: bool = False,
    progress: ProgressFn | None = None,
) -> EvalResult:
    """Embed, sweep k by Davies-Bouldin, project, and write all artifacts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def stage_progress(lo: float, hi: float) -> ProgressFn | None:
        if progress is None:
            return None
        return lambda fraction: progress(lo + (hi - lo) * min(1.0, max(0.0, fraction)))

    matrix, from_cache = embed_with_cache(
        recs, embed_cfg, cache_dir=out_dir / "cache", progress=stage_progress(0.0, 0.5)
    )
    geometry = matrix.normalized() if normalize else matrix

    if progress is not None:
        progress(0.55)
    clustering, curve = select_k(geometry.values, k_range=k_range, seeds=seeds)
    if progress is not None:
        progress(0.85)
    projection = project_2d(geometry)
    report = build_cluster_report(geometry, clustering, recs, db_curve=curve)

    write_embeddings(out_dir / "embeddings.bin", matrix)
    write_clusters_json(out_dir / "clusters.json", report, geometry, clustering)
    write_projection_csv(out_dir / "projection.csv", projection)
    with open(out_dir / "recommendations.jsonl", "w", encoding="utf-8") as fh:
        for rec in recs:
            fh.write(json.dumps({"id": rec.id, "text": rec.text}, sort_keys=True) + "\n")
    save_projection_figure(out_dir / "projection.png", projection, clustering)
    save_db_curve_figure(out_dir / "db_curve.png", curve, clustering.k)
    write_report_md(out_dir / "report.md", report, figures=["db_curve.png", "projection.png"])
    if progress is not None:
        progress(1.0)

    return EvalResult(
        matrix=matrix,
        clustering=clustering,
        projection=projection,
        report=report,
        out_dir=out_dir,
        from_cache=from_cache,
    )
