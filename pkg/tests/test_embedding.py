"""Embedding backend calls, the mock's locality guarantee, and the binary format."""

from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chart_refinery.analytics.embedding import (
    EmbeddingMatrix,
    embed_corpus,
    read_embeddings,
    write_embeddings,
)
from chart_refinery.analytics.pipeline import corpus_recommendation
from chart_refinery.backends import EmbedBackendConfig
from chart_refinery.errors import CorruptRecord, DimensionMismatch
from chart_refinery.mocks import embed_texts


def _recs(texts):
    return [corpus_recommendation(t, rec_id=f"r{i}") for i, t in enumerate(texts)]


class TestEmbedCorpus:
    def test_mock_shape_and_determinism(self):
        cfg = EmbedBackendConfig()
        recs = _recs(["axis labels too small", "legend overlaps", "low contrast"])
        first = embed_corpus(recs, cfg)
        second = embed_corpus(recs, cfg)
        assert first.values.shape == (3, 1536)
        assert np.array_equal(first.values, second.values)
        assert first.row_ids == ["r0", "r1", "r2"]

    def test_duplicate_texts_equal_rows(self):
        recs = _recs(["same critique text", "same critique text"])
        matrix = embed_corpus(recs, EmbedBackendConfig())
        assert np.array_equal(matrix.values[0], matrix.values[1])

    def test_dimension_mismatch(self, stub_backend):
        stub_backend.default = lambda path, body: (
            200,
            {"data": [{"embedding": [0.0] * 512} for _ in body["input"]]},
        )
        cfg = EmbedBackendConfig(endpoint_url=stub_backend.url("/v1/embeddings"), dims=1536, timeout_s=5)
        with pytest.raises(DimensionMismatch):
            embed_corpus(_recs(["a", "b"]), cfg)

    def test_http_wire_format_and_batching(self, stub_backend):
        def reply(path, body):
            return 200, {"data": [{"embedding": [1.0, 2.0]} for _ in body["input"]]}

        stub_backend.default = reply
        cfg = EmbedBackendConfig(
            endpoint_url=stub_backend.url("/v1/embeddings"),
            model_name="embedder",
            dims=2,
            batch_size=2,
            timeout_s=5,
        )
        matrix = embed_corpus(_recs(["a", "b", "c", "d", "e"]), cfg, parallelism=1)
        assert matrix.values.shape == (5, 2)
        batches = [body["input"] for _, body in stub_backend.requests]
        assert batches == [["a", "b"], ["c", "d"], ["e"]]
        assert all(body["model"] == "embedder" for _, body in stub_backend.requests)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            embed_corpus([], EmbedBackendConfig())

    def test_duplicate_ids_rejected(self):
        recs = [corpus_recommendation("a", rec_id="x"), corpus_recommendation("b", rec_id="x")]
        with pytest.raises(ValueError, match="unique"):
            embed_corpus(recs, EmbedBackendConfig())


def _jaccard(a: str, b: str) -> float:
    ta = set(a.lower().split())
    tb = set(b.lower().split())
    return len(ta & tb) / len(ta | tb)


class TestMockLocality:
    def test_sixty_percent_overlap_cosine(self):
        # 8 shared tokens of 10 each: Jaccard 8/12 = 0.667 >= 0.6
        shared = "axis tick label format unit scale baseline gridline"
        a = f"{shared} alpha one"
        b = f"{shared} beta two"
        assert _jaccard(a, b) >= 0.6
        va, vb = (np.array(v) for v in embed_texts([a, b], 256))
        assert float(va @ vb) >= 0.8

    def test_disjoint_texts_near_baseline(self):
        va, vb = (np.array(v) for v in embed_texts(
            ["axis tick label format", "palette hue saturation contrast"], 256
        ))
        assert float(va @ vb) == pytest.approx(0.5, abs=0.15)

    def test_unit_norm(self):
        vectors = np.array(embed_texts(["one two", "three", ""], 128))
        assert np.linalg.norm(vectors, axis=1) == pytest.approx(np.ones(3), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        base=st.lists(st.sampled_from("ab cd ef gh ij kl mn op qr st".split()),
                      min_size=8, max_size=8, unique=True),
        data=st.data(),
    )
    def test_overlap_property(self, base, data):
        extra_a = data.draw(st.sampled_from(["uv", "wx"]))
        extra_b = data.draw(st.sampled_from(["yz", "zz"]))
        a = " ".join(base + [extra_a])
        b = " ".join(base[:8] + [extra_b])
        if _jaccard(a, b) >= 0.6:
            va, vb = (np.array(v) for v in embed_texts([a, b], 384))
            assert float(va @ vb) >= 0.8


class TestBinaryFormat:
    def test_header_bytes_exact(self, tmp_path):
        matrix = EmbeddingMatrix(row_ids=["a", "b"], values=np.array([[1.0, 2.0], [3.0, 4.0]]))
        path = tmp_path / "embeddings.bin"
        write_embeddings(path, matrix)
        raw = path.read_bytes()
        assert raw[:4] == b"CREM"
        version, n, d = struct.unpack_from("<IQQ", raw, 4)
        assert (version, n, d) == (1, 2, 2)
        values = np.frombuffer(raw, dtype="<f4", offset=4 + struct.calcsize("<IQQ"))
        assert values.tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        matrix = EmbeddingMatrix(
            row_ids=[f"r{i}" for i in range(7)],
            values=rng.normal(size=(7, 12)),
        )
        path = tmp_path / "m.bin"
        write_embeddings(path, matrix)
        loaded = read_embeddings(path)
        assert loaded.shape == (7, 12)
        assert loaded == pytest.approx(matrix.values, abs=1e-6)  # f32 storage

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(CorruptRecord, match="magic"):
            read_embeddings(path)

    def test_truncated(self, tmp_path):
        matrix = EmbeddingMatrix(row_ids=["a"], values=np.ones((1, 8)))
        path = tmp_path / "t.bin"
        write_embeddings(path, matrix)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(CorruptRecord, match="bytes"):
            read_embeddings(path)

    def test_wrong_version(self, tmp_path):
        path = tmp_path / "v.bin"
        path.write_bytes(b"CREM" + struct.pack("<IQQ", 9, 0, 0))
        with pytest.raises(CorruptRecord, match="version"):
            read_embeddings(path)


class TestMatrixInvariants:
    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            EmbeddingMatrix(row_ids=["a"], values=np.array([[np.nan, 1.0]]))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingMatrix(row_ids=[], values=np.zeros((0, 3)))

    def test_normalized_rows(self):
        matrix = EmbeddingMatrix(row_ids=["a", "b"], values=np.array([[3.0, 4.0], [0.0, 0.0]]))
        normed = matrix.normalized()
        assert np.linalg.norm(normed.values[0]) == pytest.approx(1.0)
        assert normed.values[1].tolist() == [0.0, 0.0]  # zero rows left alone
