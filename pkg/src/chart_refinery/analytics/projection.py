"""2-D projection of the embedding matrix.

Default is deterministic PCA (top-2 principal components, sign fixed so each
component's largest-magnitude loading is positive). An external pathway
attaches coordinates computed elsewhere (e.g. by a UMAP run) after
validating them against the matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from ..errors import TooFewRows
from .embedding import EmbeddingMatrix


class ProjectionMethod(str, Enum):
    PCA = "PCA"
    EXTERNAL = "EXTERNAL"


@dataclass
class Projection2D:
    row_ids: list[str]
    coords: np.ndarray  # N x 2
    method: ProjectionMethod

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValueError("coords must be N x 2")
        if self.coords.shape[0] != len(self.row_ids):
            raise ValueError("coords rows do not match row_ids")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("coords contain non-finite entries")


def project_2d(matrix: EmbeddingMatrix) -> Projection2D:
    """Deterministic PCA projection to the top-2 principal components."""
    if matrix.n_rows < 3:
        raise TooFewRows(f"projection needs at least 3 rows, got {matrix.n_rows}")
    centered = matrix.values - matrix.values.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    n_components = min(2, vt.shape[0])
    components = vt[:n_components].copy()
    for row in components:
        anchor = int(np.argmax(np.abs(row)))
        if row[anchor] < 0:
            row *= -1.0
    coords = centered @ components.T
    if n_components < 2:
        coords = np.hstack([coords, np.zeros((matrix.n_rows, 2 - n_components))])
    return Projection2D(row_ids=list(matrix.row_ids), coords=coords, method=ProjectionMethod.PCA)


def load_external_projection(matrix: EmbeddingMatrix, path: str | Path) -> Projection2D:
    """Attach a precomputed id,x,y CSV; validates ids and row count only."""
    rows: dict[str, tuple[float, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:3]] != ["id", "x", "y"]:
            raise ValueError(f"{path}: expected header 'id,x,y'")
        for lineno, row in enumerate(reader, start=2):
            if len(row) < 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns")
            rid = row[0]
            if rid in rows:
                raise ValueError(f"{path}:{lineno}: duplicate id {rid!r}")
            rows[rid] = (float(row[1]), float(row[2]))
    if len(rows) != matrix.n_rows:
        raise ValueError(
            f"{path}: {len(rows)} coordinate rows for a {matrix.n_rows}-row matrix"
        )
    missing = [rid for rid in matrix.row_ids if rid not in rows]
    if missing:
        raise ValueError(f"{path}: missing coordinates for {len(missing)} ids (first: {missing[0]!r})")
    coords = np.array([rows[rid] for rid in matrix.row_ids], dtype=np.float64)
    return Projection2D(row_ids=list(matrix.row_ids), coords=coords, method=ProjectionMethod.EXTERNAL)


def write_projection_csv(path: str | Path, projection: Projection2D) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y"])
        for rid, (x, y) in zip(projection.row_ids, projection.coords):
            writer.writerow([rid, repr(float(x)), repr(float(y))])
