"""K-means clustering with Davies-Bouldin model selection.

Lloyd's algorithm from seeded k-means++ starts; empty clusters are repaired
by reseeding to the point farthest from its current centroid. The sweep
picks k by the lowest Davies-Bouldin score, best-of-seeds per k, with ties
broken toward smaller k and then smaller seed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import DegenerateCentroids, TooFewRows, UnclusterableCorpus

DEFAULT_K_RANGE = range(2, 21)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_MAX_ITERS = 300
DEFAULT_TOL = 1e-6
_SWEEP_WORKERS = 4


@dataclass
class ClusteringResult:
    k: int
    assignments: np.ndarray  # row -> cluster index
    centroids: np.ndarray  # k x D
    db_score: float
    inertia: float
    seed: int
    inertia_history: list[float] = field(default_factory=list)


def centroid_of(values: np.ndarray) -> np.ndarray:
    """The k=1 degenerate case: coordinate-wise mean."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValueError("need a non-empty 2-D array")
    return values.mean(axis=0)


def _squared_distances(values: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(values**2, axis=1)[:, None]
        + np.sum(centroids**2, axis=1)[None, :]
        - 2.0 * values @ centroids.T
    )
    return np.maximum(sq, 0.0)


def _kmeans_pp_init(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = values.shape[0]
    centroids = np.empty((k, values.shape[1]))
    first = rng.integers(n)
    centroids[0] = values[first]
    closest_sq = np.sum((values - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest_sq.sum()
        if total <= 0.0:
            idx = rng.integers(n)  # all remaining points coincide with a centroid
        else:
            idx = rng.choice(n, p=closest_sq / total)
        centroids[i] = values[idx]
        closest_sq = np.minimum(closest_sq, np.sum((values - centroids[i]) ** 2, axis=1))
    return centroids


def kmeans(
    values: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> ClusteringResult:
    """Seeded Lloyd's iterations; inertia is tracked per assignment step."""
    values = np.asarray(values, dtype=np.float64)
    if k < 2:
        raise ValueError("k must be >= 2 (use centroid_of for k=1)")
    n = values.shape[0]
    if n < k:
        raise TooFewRows(f"{n} rows cannot form {k} clusters")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(values, k, rng)
    history: list[float] = []
    assignments = np.zeros(n, dtype=np.int64)

    for _ in range(max_iters):
        sq = _squared_distances(values, centroids)
        assignments = np.argmin(sq, axis=1)
        min_sq = sq[np.arange(n), assignments]

        empties = [c for c in range(k) if not np.any(assignments == c)]
        if empties:
            for c in empties:
                idx = int(np.argmax(min_sq))
                if min_sq[idx] <= 0.0:
                    raise DegenerateCentroids(
                        f"cannot form {k} non-empty clusters: too few distinct points"
                    )
                centroids[c] = values[idx]
                min_sq[idx] = 0.0
            sq = _squared_distances(values, centroids)
            assignments = np.argmin(sq, axis=1)
            min_sq = sq[np.arange(n), assignments]
            if any(not np.any(assignments == c) for c in range(k)):
                raise DegenerateCentroids(
                    f"cannot form {k} non-empty clusters: too few distinct points"
                )

        inertia = float(min_sq.sum())
        if history and inertia > history[-1] + 1e-9 * max(1.0, history[-1]):
            raise RuntimeError("k-means inertia increased between iterations")
        history.append(inertia)

        new_centroids = np.empty_like(centroids)
        for c in range(k):
            new_centroids[c] = values[assignments == c].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break

    db = davies_bouldin(values, assignments, centroids)
    return ClusteringResult(
        k=k,
        assignments=assignments,
        centroids=centroids,
        db_score=db,
        inertia=history[-1],
        seed=seed,
        inertia_history=history,
    )


def davies_bouldin(values: np.ndarray, assignments: np.ndarray, centroids: np.ndarray) -> float:
    """DB = (1/k) * sum_i max_{j != i} (S_i + S_j) / M_ij.

    S_i is the mean Euclidean distance of cluster-i members to centroid i;
    M_ij is the Euclidean distance between centroids i and j.
    """
    values = np.asarray(values, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    assignments = np.asarray(assignments)
    k = centroids.shape[0]
    if k < 2:
        raise ValueError("Davies-Bouldin requires k >= 2")

    scatter = np.empty(k)
    for c in range(k):
        members = values[assignments == c]
        if members.shape[0] == 0:
            raise ValueError(f"cluster {c} is empty")
        scatter[c] = float(np.mean(np.linalg.norm(members - centroids[c], axis=1)))

    # Exact pairwise differences: coincident centroids must yield exactly 0.
    separation = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    off_diagonal = ~np.eye(k, dtype=bool)
    if np.any(separation[off_diagonal] == 0.0):
        raise DegenerateCentroids("coincident centroids make the DB ratio undefined")

    ratios = (scatter[:, None] + scatter[None, :]) / np.where(off_diagonal, separation, np.inf)
    return float(np.mean(np.max(ratios, axis=1)))


def select_k(
    values: np.ndarray,
    k_range: Iterable[int] = DEFAULT_K_RANGE,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    workers: int = _SWEEP_WORKERS,
) -> tuple[ClusteringResult, list[tuple[int, float]]]:
    """Sweep k, best-of-seeds by lowest DB per k, global argmin DB overall.

    Returns (best clustering, [(k, best db)] curve). Ties break toward the
    smaller k, then the smaller seed. Raises UnclusterableCorpus when every
    run is degenerate.
    """
    values = np.asarray(values, dtype=np.float64)
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("k_range must be non-empty")
    if ks[0] < 2:
        raise ValueError("k_range must start at 2 or above")
    if values.shape[0] < ks[-1]:
        raise TooFewRows(f"{values.shape[0]} rows cannot support k up to {ks[-1]}")
    if not seeds:
        raise ValueError("seeds must be non-empty")

    runs = [(k, seed) for k in ks for seed in seeds]

    def run_one(pair: tuple[int, int]) -> ClusteringResult | None:
        k, seed = pair
        try:
            return kmeans(values, k, seed, max_iters=max_iters, tol=tol)
        except DegenerateCentroids:
            return None

    if workers > 1 and len(runs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, runs))
    else:
        results = [run_one(pair) for pair in runs]

    best_per_k: dict[int, ClusteringResult] = {}
    for result in results:
        if result is None:
            continue
        held = best_per_k.get(result.k)
        if held is None or result.db_score < held.db_score:
            best_per_k[result.k] = result

    if not best_per_k:
        raise UnclusterableCorpus("every clustering attempt produced degenerate centroids")

    curve = [(k, best_per_k[k].db_score) for k in ks if k in best_per_k]
    best = None
    for k, _ in curve:
        candidate = best_per_k[k]
        if best is None or candidate.db_score < best.db_score:
            best = candidate
    assert best is not None
    return best, curve
