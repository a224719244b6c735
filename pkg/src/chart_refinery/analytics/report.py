"""Cluster report: sizes, frequent-term labels, medoid exemplar texts."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..models import Recommendation
from .clustering import ClusteringResult
from .embedding import EmbeddingMatrix

MEDOID_EXAMPLES = 5
TOP_TERMS = 5

_WORD_RE = re.compile(r"[a-z][a-z0-9]+")

# Small closed-class list; domain terms must survive filtering.
_STOPWORDS = frozenset(
    """a an and are as at be but by for from has have in is it its of on or that the
    this to too was which with without not no should would could can may might will
    use used using makes make made more most less least very than then when where
    there their they them your you each all any some so if do does between
    into over under after before""".split()
)


@dataclass
class ClusterSummary:
    index: int
    size: int
    top_terms: list[str]
    medoid_ids: list[str]
    medoid_texts: list[str]


@dataclass
class ClusterReport:
    selected_k: int
    db_score: float
    seed: int
    total: int
    db_curve: list[tuple[int, float]]
    clusters: list[ClusterSummary] = field(default_factory=list)


def _tokens(text: str) -> list[str]:
    return [t for t in _WORD_RE.findall(text.lower()) if t not in _STOPWORDS]


def _medoid_order(member_values: np.ndarray) -> np.ndarray:
    """Member indices sorted by summed distance to co-members (most central first)."""
    diffs = member_values[:, None, :] - member_values[None, :, :]
    distances = np.linalg.norm(diffs, axis=2)
    return np.argsort(distances.sum(axis=1), kind="stable")


def build_cluster_report(
    matrix: EmbeddingMatrix,
    clustering: ClusteringResult,
    recs: Sequence[Recommendation],
    db_curve: list[tuple[int, float]] | None = None,
) -> ClusterReport:
    """Summarize each cluster by size, frequent terms, and medoid examples."""
    if len(clustering.assignments) != matrix.n_rows:
        raise ValueError("clustering does not match matrix rows")
    text_by_id = {rec.id: rec.text for rec in recs}
    missing = [rid for rid in matrix.row_ids if rid not in text_by_id]
    if missing:
        raise ValueError(f"missing texts for {len(missing)} matrix rows (first: {missing[0]!r})")

    report = ClusterReport(
        selected_k=clustering.k,
        db_score=clustering.db_score,
        seed=clustering.seed,
        total=matrix.n_rows,
        db_curve=list(db_curve or []),
    )
    row_ids = np.array(matrix.row_ids)
    for c in range(clustering.k):
        member_mask = clustering.assignments == c
        member_ids = row_ids[member_mask]
        member_values = matrix.values[member_mask]
        counts = Counter()
        for rid in member_ids:
            counts.update(_tokens(text_by_id[rid]))
        top = [term for term, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:TOP_TERMS]]
        order = _medoid_order(member_values)[:MEDOID_EXAMPLES]
        medoid_ids = [str(member_ids[i]) for i in order]
        report.clusters.append(
            ClusterSummary(
                index=c,
                size=int(member_mask.sum()),
                top_terms=top,
                medoid_ids=medoid_ids,
                medoid_texts=[text_by_id[rid] for rid in medoid_ids],
            )
        )
    return report


# -- artifacts ---------------------------------------------------------------

def report_to_dict(report: ClusterReport, assignments_by_id: dict[str, int]) -> dict:
    return {
        "schema_version": 1,
        "selected_k": report.selected_k,
        "db_score": report.db_score,
        "seed": report.seed,
        "total": report.total,
        "db_curve": [[k, score] for k, score in report.db_curve],
        "assignments": assignments_by_id,
        "clusters": [
            {
                "index": c.index,
                "size": c.size,
                "top_terms": c.top_terms,
                "medoid_ids": c.medoid_ids,
                "medoid_texts": c.medoid_texts,
            }
            for c in report.clusters
        ],
    }


def write_clusters_json(path: str | Path, report: ClusterReport, matrix: EmbeddingMatrix,
                        clustering: ClusteringResult) -> None:
    assignments = {rid: int(c) for rid, c in zip(matrix.row_ids, clustering.assignments)}
    Path(path).write_text(
        json.dumps(report_to_dict(report, assignments), indent=2, sort_keys=True),
        encoding="utf-8",
    )


def write_report_md(path: str | Path, report: ClusterReport, figures: list[str] | None = None) -> None:
    lines = [
        "# Recommendation cluster report",
        "",
        f"- recommendations: **{report.total}**",
        f"- selected k: **{report.selected_k}** (Davies-Bouldin {report.db_score:.4f}, seed {report.seed})",
        "",
    ]
    for name in figures or []:
        lines += [f"![{name}]({name})", ""]
    lines += [
        "## Davies-Bouldin curve",
        "",
        "| k | DB score |",
        "|--:|---------:|",
    ]
    for k, score in report.db_curve:
        marker = " *" if k == report.selected_k else ""
        lines.append(f"| {k} | {score:.4f}{marker} |")
    lines += ["", "## Clusters", ""]
    for c in report.clusters:
        lines += [
            f"### Cluster {c.index} ({c.size} recommendations)",
            "",
            f"Top terms: {', '.join(c.top_terms) if c.top_terms else '(none)'}",
            "",
        ]
        lines += [f"- {text}" for text in c.medoid_texts]
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")
