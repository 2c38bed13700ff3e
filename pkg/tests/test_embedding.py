from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fuzzymt.embedding import (
    EmbeddingProviderConfig,
    deterministic_embed,
    embed_batch,
    read_embedding_cache,
    text_sha256,
    write_embedding_cache,
)
from fuzzymt.errors import ArgumentError, ContractViolationError, ProviderError
from fuzzymt.llm_client import run_mock_server


def _cos(a, b):
    return float(np.dot(a, b))


class TestDeterministicEmbed:
    def test_bit_identical_across_calls(self):
        a = deterministic_embed("el paciente mejora", 384, seed=0)
        b = deterministic_embed("el paciente mejora", 384, seed=0)
        assert a.tobytes() == b.tobytes()

    def test_default_dim_length(self):
        assert deterministic_embed("cualquier texto", 384, seed=0).shape == (384,)

    def test_unit_norm(self):
        vec = deterministic_embed("una frase moderada", 384, seed=1)
        assert abs(float(np.linalg.norm(vec)) - 1.0) <= 1e-6

    def test_ngram_overlap_orders_cosine(self):
        base = deterministic_embed("abcdefgh", 384, seed=0)
        near = deterministic_embed("abcdefgx", 384, seed=0)
        far = deterministic_embed("zzzzzzzz", 384, seed=0)
        assert _cos(base, near) > _cos(base, far)

    def test_identical_texts_cosine_one(self):
        a = deterministic_embed("misma frase", 64, seed=5)
        b = deterministic_embed("misma frase", 64, seed=5)
        assert _cos(a, b) == pytest.approx(1.0, abs=1e-6)

    def test_empty_text_is_basis_vector(self):
        vec = deterministic_embed("", 16, seed=0)
        expected = np.zeros(16, dtype=np.float32)
        expected[0] = 1.0
        assert np.array_equal(vec, expected)

    def test_too_short_text_is_basis_vector(self):
        vec = deterministic_embed("ab", 16, seed=0)
        assert vec[0] == 1.0 and float(np.linalg.norm(vec)) == 1.0

    def test_seed_changes_vector(self):
        a = deterministic_embed("texto", 64, seed=0)
        b = deterministic_embed("texto", 64, seed=1)
        assert not np.array_equal(a, b)

    def test_bad_dim(self):
        with pytest.raises(ArgumentError):
            deterministic_embed("x", 0, seed=0)


class TestEmbedBatch:
    def test_order_preservation(self, det_provider):
        texts = ["uno dos tres", "cuatro cinco", "seis siete ocho"]
        batch = embed_batch(texts, det_provider)
        for i, text in enumerate(texts):
            single = embed_batch([text], det_provider)
            assert batch[i].tobytes() == single[0].tobytes()

    def test_norm_contract(self, det_provider):
        batch = embed_batch(["a b c", "d e f g"], det_provider)
        norms = np.linalg.norm(batch, axis=1)
        assert np.all(np.abs(norms - 1.0) <= 1e-6)

    def test_empty_input_rejected(self, det_provider):
        with pytest.raises(ArgumentError):
            embed_batch([], det_provider)

    @settings(max_examples=30, deadline=None)
    @given(st.text(max_size=40))
    def test_batch_matches_single(self, text):
        cfg = EmbeddingProviderConfig(kind="deterministic-test", dim=32, seed=3)
        assert embed_batch([text], cfg)[0].tobytes() == deterministic_embed(text, 32, 3).tobytes()


class TestRemoteProvider:
    def test_remote_matches_deterministic(self):
        with run_mock_server("echo-fuzzy", embed_dim=48, embed_seed=2) as server:
            cfg = EmbeddingProviderConfig(
                kind="remote-http",
                endpoint=server.endpoint + "/v1/embeddings",
                dim=48,
                seed=2,
                batch_size=2,
                backoff_seconds=0.0,
            )
            texts = ["hola mundo cruel", "otra frase distinta", "tercera frase"]
            remote = embed_batch(texts, cfg)
            local = np.stack([deterministic_embed(t, 48, 2) for t in texts])
            assert np.allclose(remote, local, atol=1e-6)

    def test_dim_mismatch_is_contract_violation(self):
        with run_mock_server("echo-fuzzy", embed_dim=16, embed_seed=0) as server:
            cfg = EmbeddingProviderConfig(
                kind="remote-http",
                endpoint=server.endpoint + "/v1/embeddings",
                dim=32,
                backoff_seconds=0.0,
            )
            with pytest.raises(ContractViolationError):
                embed_batch(["texto"], cfg)

    def test_http_error_after_retries(self):
        with run_mock_server("echo-fuzzy") as server:
            cfg = EmbeddingProviderConfig(
                kind="remote-http",
                endpoint=server.endpoint + "/wrong/path",
                dim=16,
                backoff_seconds=0.0,
            )
            with pytest.raises(ProviderError) as err:
                embed_batch(["texto"], cfg)
            assert err.value.status == 404

    def test_connection_failure(self):
        cfg = EmbeddingProviderConfig(
            kind="remote-http",
            endpoint="http://127.0.0.1:9/v1/embeddings",
            dim=16,
            backoff_seconds=0.0,
        )
        with pytest.raises(ProviderError):
            embed_batch(["texto"], cfg)


class TestEmbeddingCache:
    def test_round_trip_bit_identical(self, tmp_path, det_provider):
        texts = ["primera", "segunda", "tercera"]
        vectors = embed_batch(texts, det_provider)
        path = tmp_path / "cache.bin"
        write_embedding_cache(path, vectors, texts, ids=[10, 11, 12])
        loaded, sidecar = read_embedding_cache(path)
        assert loaded.tobytes() == vectors.tobytes()
        assert sidecar["ids"] == [10, 11, 12]
        assert sidecar["sha256"] == [text_sha256(t) for t in texts]
        assert sidecar["dim"] == det_provider.dim

    def test_truncated_cache_rejected(self, tmp_path):
        path = tmp_path / "cache.bin"
        vectors = np.ones((2, 4), dtype=np.float32)
        write_embedding_cache(path, vectors, ["a", "b"])
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ContractViolationError):
            read_embedding_cache(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "cache.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 12)
        with pytest.raises(ContractViolationError):
            read_embedding_cache(path)


def test_config_validation():
    with pytest.raises(ArgumentError):
        EmbeddingProviderConfig(dim=0)
    with pytest.raises(ArgumentError):
        EmbeddingProviderConfig(batch_size=0)
    with pytest.raises(ArgumentError):
        EmbeddingProviderConfig(kind="nonsense")
