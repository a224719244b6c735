"""Evaluation harness: embed recommendation corpora, cluster, project, report."""

from .clustering import (
    ClusteringResult,
    centroid_of,
    davies_bouldin,
    kmeans,
    select_k,
)
from .embedding import EmbeddingMatrix, embed_corpus, read_embeddings, write_embeddings
from .pipeline import (
    EvalResult,
    collect_corpus_recommendations,
    corpus_recommendation,
    load_recs_file,
    run_eval,
)
from .projection import Projection2D, ProjectionMethod, load_external_projection, project_2d
from .report import ClusterReport, ClusterSummary, build_cluster_report

__all__ = [
    "ClusteringResult",
    "ClusterReport",
    "ClusterSummary",
    "EmbeddingMatrix",
    "EvalResult",
    "Projection2D",
    "ProjectionMethod",
    "build_cluster_report",
    "centroid_of",
    "collect_corpus_recommendations",
    "corpus_recommendation",
    "davies_bouldin",
    "embed_corpus",
    "kmeans",
    "load_external_projection",
    "load_recs_file",
    "project_2d",
    "read_embeddings",
    "run_eval",
    "select_k",
    "write_embeddings",
]
