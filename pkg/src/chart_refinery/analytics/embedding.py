"""Recommendation embedding: batched backend calls and the on-disk matrix format.

embeddings.bin layout (little-endian): magic "CREM", version u32, N u64,
D u64, then N*D float32 values row-major. Row ids live in the JSON
artifacts next to it; the binary stores geometry only.
"""

from __future__ import annotations

import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..backends import EmbedBackendConfig, embed_batch
from ..errors import CorruptRecord, DimensionMismatch
from ..models import Recommendation

MAGIC = b"CREM"
FORMAT_VERSION = 1
DEFAULT_PARALLELISM = 4


@dataclass
class EmbeddingMatrix:
    row_ids: list[str]
    values: np.ndarray  # N x D, float64

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] == 0:
            raise ValueError("embedding matrix must be a non-empty 2-D array")
        if len(self.row_ids) != self.values.shape[0]:
            raise ValueError("row_ids length does not match matrix rows")
        if len(set(self.row_ids)) != len(self.row_ids):
            raise ValueError("row ids must be unique")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding matrix contains non-finite entries")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    def normalized(self) -> "EmbeddingMatrix":
        """L2-normalize rows (cosine geometry); zero rows are left unchanged."""
        norms = np.linalg.norm(self.values, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return EmbeddingMatrix(row_ids=list(self.row_ids), values=self.values / norms)


def embed_corpus(
    recs: Sequence[Recommendation],
    cfg: EmbedBackendConfig,
    parallelism: int = DEFAULT_PARALLELISM,
    progress: Callable[[float], None] | None = None,
) -> EmbeddingMatrix:
    """Embed one row per recommendation, batched with bounded parallelism."""
    if not recs:
        raise ValueError("recommendation list must be non-empty")
    ids = [rec.id for rec in recs]
    if len(set(ids)) != len(ids):
        raise ValueError("recommendation ids must be unique")
    texts = [rec.text for rec in recs]
    batches = [texts[i:i + cfg.batch_size] for i in range(0, len(texts), cfg.batch_size)]

    done = 0
    done_lock = threading.Lock()
    vectors: list[list[list[float]]] = [None] * len(batches)  # type: ignore[list-item]

    def run(idx: int) -> None:
        nonlocal done
        batch_vectors, _ = embed_batch(batches[idx], cfg)
        if len(batch_vectors) != len(batches[idx]):
            raise DimensionMismatch(
                f"backend returned {len(batch_vectors)} vectors for {len(batches[idx])} inputs"
            )
        for vec in batch_vectors:
            if len(vec) != cfg.dims:
                raise DimensionMismatch(
                    f"backend returned {len(vec)}-dim vector, expected {cfg.dims}"
                )
        vectors[idx] = batch_vectors
        with done_lock:
            done += 1
            fraction = done / len(batches)
        if progress is not None:
            progress(fraction)

    if parallelism > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(run, range(len(batches))))
    else:
        for i in range(len(batches)):
            run(i)

    values = np.array([vec for batch in vectors for vec in batch], dtype=np.float64)
    return EmbeddingMatrix(row_ids=ids, values=values)


def write_embeddings(path: str | Path, matrix: EmbeddingMatrix) -> None:
    header = MAGIC + struct.pack("<IQQ", FORMAT_VERSION, matrix.n_rows, matrix.dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(matrix.values.astype("<f4").tobytes(order="C"))


def read_embeddings(path: str | Path) -> np.ndarray:
    """Read the value matrix back (float64); ids live in the JSON artifacts."""
    raw = Path(path).read_bytes()
    header_size = len(MAGIC) + struct.calcsize("<IQQ")
    if len(raw) < header_size or raw[: len(MAGIC)] != MAGIC:
        raise CorruptRecord(f"{path}: not an embeddings file (bad magic)")
    version, n_rows, dims = struct.unpack_from("<IQQ", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CorruptRecord(f"{path}: unsupported embeddings version {version}")
    expected = header_size + n_rows * dims * 4
    if len(raw) != expected:
        raise CorruptRecord(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", offset=header_size).astype(np.float64)
    return values.reshape(n_rows, dims)
