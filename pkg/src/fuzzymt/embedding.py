"""Sentence embeddings behind a pluggable provider boundary.

Two providers: a remote HTTP encoder speaking the OpenAI-embedding JSON
shape, and a fully offline deterministic provider built from signed hashed
character n-grams, used wherever tests need stable vectors with meaningful
cosine structure.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .errors import ArgumentError, ContractViolationError, ProviderError

DEFAULT_DIM = 384
API_KEY_ENV = "FUZZYMT_API_KEY"

CACHE_MAGIC = b"EMB1"
_CACHE_HEADER = struct.Struct("<4sIQ")  # magic, dim, count


@dataclass
class EmbeddingProviderConfig:
    """Which encoder to use and how to call it."""

    kind: str = "deterministic-test"  # "remote-http" | "deterministic-test"
    endpoint: str = ""
    model_name: str = "deterministic-ngram"
    dim: int = DEFAULT_DIM
    batch_size: int = 64
    normalize: bool = True
    seed: int = 0
    max_attempts: int = 3
    backoff_seconds: float = 1.0
    max_in_flight: int = 4

    def __post_init__(self):
        if self.dim <= 0:
            raise ArgumentError(f"dim must be positive, got {self.dim}")
        if self.batch_size <= 0:
            raise ArgumentError(f"batch_size must be positive, got {self.batch_size}")
        if self.kind not in ("remote-http", "deterministic-test"):
            raise ArgumentError(f"unknown provider kind: {self.kind!r}")


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return vec
    return vec / norm


def check_vector(vec: np.ndarray, dim: int, normalized: bool) -> None:
    """Assert the vector contract: length, finiteness, and unit norm."""
    if vec.shape != (dim,):
        raise ContractViolationError(f"expected vector of length {dim}, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ContractViolationError("vector contains non-finite entries")
    if normalized:
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > 1e-6:
            raise ContractViolationError(f"vector norm {norm} outside [1-1e-6, 1+1e-6]")


def deterministic_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Embed one text as signed hashed character n-grams (n = 3..5).

    The lowercased text's n-grams are hashed (keyed by the seed) to buckets
    in [0, dim) with a +/-1 contribution, then L2-normalized. Texts too
    short to produce any n-gram map to the unit basis vector e_0.
    """
    if dim <= 0:
        raise ArgumentError(f"dim must be positive, got {dim}")
    vec = np.zeros(dim, dtype=np.float64)
    lowered = text.lower()
    key = seed.to_bytes(8, "little", signed=True)
    for n in (3, 4, 5):
        for i in range(len(lowered) - n + 1):
            gram = lowered[i : i + n]
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=key).digest()
            h = int.from_bytes(digest, "little")
            bucket = h % dim
            sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
            vec[bucket] += sign
    if not vec.any():
        vec[0] = 1.0
        return vec.astype(np.float32)
    return l2_normalize(vec).astype(np.float32)


def _embed_batch_deterministic(texts: Sequence[str], cfg: EmbeddingProviderConfig) -> np.ndarray:
    out = np.empty((len(texts), cfg.dim), dtype=np.float32)
    for i, text in enumerate(texts):
        out[i] = deterministic_embed(text, cfg.dim, cfg.seed)
    return out


def _post_embeddings(texts: Sequence[str], cfg: EmbeddingProviderConfig) -> np.ndarray:
    payload = {"model": cfg.model_name, "input": list(texts)}
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    last_status: int | None = None
    last_err: Exception | None = None
    for attempt in range(cfg.max_attempts):
        if attempt > 0:
            time.sleep(cfg.backoff_seconds * (2 ** (attempt - 1)))
        try:
            resp = requests.post(cfg.endpoint, json=payload, headers=headers, timeout=120)
        except requests.RequestException as exc:
            last_err = exc
            continue
        if resp.status_code != 200:
            last_status = resp.status_code
            continue
        try:
            data = resp.json()["data"]
            rows = [item["embedding"] for item in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolationError(f"malformed embedding response: {exc}") from exc
        if len(rows) != len(texts):
            raise ContractViolationError(
                f"provider returned {len(rows)} embeddings for {len(texts)} inputs"
            )
        matrix = np.asarray(rows, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[1] != cfg.dim:
            raise ContractViolationError(
                f"provider returned dim {matrix.shape[-1] if matrix.ndim == 2 else '?'}, expected {cfg.dim}"
            )
        return matrix
    detail = f"status {last_status}" if last_status is not None else repr(last_err)
    raise ProviderError(
        f"embedding endpoint {cfg.endpoint} failed after {cfg.max_attempts} attempts ({detail})",
        status=last_status,
    )


def _embed_batch_remote(texts: Sequence[str], cfg: EmbeddingProviderConfig) -> np.ndarray:
    from concurrent.futures import ThreadPoolExecutor

    chunks = [list(texts[i : i + cfg.batch_size]) for i in range(0, len(texts), cfg.batch_size)]
    if len(chunks) == 1:
        parts = [_post_embeddings(chunks[0], cfg)]
    else:
        with ThreadPoolExecutor(max_workers=max(1, cfg.max_in_flight)) as pool:
            parts = list(pool.map(lambda chunk: _post_embeddings(chunk, cfg), chunks))
    return np.concatenate(parts, axis=0)


def embed_batch(texts: Sequence[str], cfg: EmbeddingProviderConfig) -> np.ndarray:
    """Embed texts in order; returns a (len(texts), cfg.dim) float32 matrix."""
    if len(texts) == 0:
        raise ArgumentError("embed_batch requires a non-empty text list")
    if cfg.kind == "deterministic-test":
        # rows are unit-normalized by construction; renormalizing would
        # perturb low-order bits and break bit-level determinism
        matrix = _embed_batch_deterministic(texts, cfg)
    else:
        matrix = _embed_batch_remote(texts, cfg)
        if cfg.normalize:
            norms = np.linalg.norm(matrix, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            matrix = (matrix / norms).astype(np.float32)
    for row in matrix:
        check_vector(row, cfg.dim, cfg.normalize)
    return matrix


def text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_embedding_cache(
    path: str | Path,
    vectors: np.ndarray,
    texts: Sequence[str],
    ids: Sequence[int] | None = None,
) -> None:
    """Write vectors as magic/dim/count header + row-major float32 rows.

    A JSON sidecar at ``<path>.json`` records the text hashes (and row ids)
    so a cache can be matched back to its corpus.
    """
    matrix = np.ascontiguousarray(vectors, dtype=np.float32)
    if matrix.ndim != 2:
        raise ArgumentError("vectors must be a 2-D matrix")
    if len(texts) != matrix.shape[0]:
        raise ArgumentError("one text required per vector row")
    count, dim = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEADER.pack(CACHE_MAGIC, dim, count))
        fh.write(matrix.tobytes(order="C"))
    sidecar = {
        "schema_version": 1,
        "dim": dim,
        "count": count,
        "ids": list(ids) if ids is not None else list(range(count)),
        "sha256": [text_sha256(t) for t in texts],
    }
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def read_embedding_cache(path: str | Path) -> tuple[np.ndarray, dict]:
    """Read a cache file; returns (matrix, sidecar dict)."""
    raw = Path(path).read_bytes()
    if len(raw) < _CACHE_HEADER.size:
        raise ContractViolationError(f"{path}: truncated embedding cache")
    magic, dim, count = _CACHE_HEADER.unpack_from(raw, 0)
    if magic != CACHE_MAGIC:
        raise ContractViolationError(f"{path}: bad magic {magic!r}")
    body = raw[_CACHE_HEADER.size :]
    expected = dim * count * 4
    if len(body) != expected:
        raise ContractViolationError(f"{path}: expected {expected} payload bytes, got {len(body)}")
    matrix = np.frombuffer(body, dtype="<f4").reshape(count, dim).copy()
    sidecar_path = Path(str(path) + ".json")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8")) if sidecar_path.exists() else {}
    return matrix, sidecar
