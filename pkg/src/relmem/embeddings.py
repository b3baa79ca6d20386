"""Embedding providers and vector similarity.

Two providers share one interface. The local provider is a seeded hashed
bag-of-words: each whitespace token is hashed into one of ``dim`` buckets and
the count vector is L2-normalized. It is a pure function of (text, seed, dim),
which keeps every retrieval path testable offline. The remote provider speaks
the JSON contract used by common hosted embedding APIs: request
``{"model": ..., "input": [...]}``, response ``{"data": [{"index": i,
"embedding": [...]}]}``.
"""

from __future__ import annotations

import hashlib
import logging
import os
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from .errors import (
    ConfigError,
    DimensionError,
    ProviderContractError,
    RetryableProviderError,
    ZeroNormError,
)

logger = logging.getLogger(__name__)

LOCAL = "local-deterministic"
REMOTE = "remote"


@dataclass(frozen=True)
class EmbeddingProviderSpec:
    kind: str = LOCAL
    dim: int = 256
    hash_seed: int = 0
    endpoint_url: str | None = None
    model_name: str | None = None
    auth_token_env: str | None = None
    timeout: float = 30.0
    retries: int = 3
    retry_base_delay: float = 0.5

    def __post_init__(self):
        if self.kind not in (LOCAL, REMOTE):
            raise ConfigError(f"unknown provider kind: {self.kind!r}")
        if self.kind == REMOTE and not self.endpoint_url:
            raise ConfigError("remote provider requires endpoint_url")
        if self.kind == LOCAL and self.dim <= 0:
            raise ConfigError("local provider requires dim > 0")


def local_embedding(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Seeded hashed bag-of-words vector, L2-normalized.

    Text with no tokens hashes a single sentinel token so the result is never
    all-zero.
    """
    key = seed.to_bytes(8, "little", signed=False)
    vec = np.zeros(dim, dtype=np.float64)
    tokens = text.split() or [""]
    for token in tokens:
        digest = hashlib.blake2b(token.lower().encode("utf-8"), digest_size=8, key=key).digest()
        vec[int.from_bytes(digest, "big") % dim] += 1.0
    return vec / np.linalg.norm(vec)


def embed_batch(texts: Sequence, provider: EmbeddingProviderSpec) -> list[np.ndarray]:
    """Embed a batch of texts, order-preserving, one vector per input."""
    if not texts:
        raise ConfigError("embed_batch requires a non-empty list of texts")
    if provider.kind == LOCAL:
        return [local_embedding(t, provider.dim, provider.hash_seed) for t in texts]
    return _remote_batch(list(texts), provider)


def _remote_batch(texts: list[str], provider: EmbeddingProviderSpec) -> list[np.ndarray]:
    headers = {}
    if provider.auth_token_env:
        token = os.environ.get(provider.auth_token_env)
        if not token:
            raise ProviderContractError(
                f"auth environment variable {provider.auth_token_env} is not set"
            )
        headers["Authorization"] = f"Bearer {token}"
    body = {"model": provider.model_name, "input": texts}

    delay = provider.retry_base_delay
    max_attempts = provider.retries + 1
    last_failure = "unknown"
    for attempt in range(1, max_attempts + 1):
        try:
            resp = requests.post(
                provider.endpoint_url, json=body, headers=headers, timeout=provider.timeout
            )
        except requests.RequestException as exc:
            last_failure = str(exc)
        else:
            if resp.status_code == 200:
                return _parse_remote_response(resp.json(), len(texts))
            if resp.status_code < 500:
                # Client-side rejection will not improve on retry.
                raise ProviderContractError(
                    f"embedding endpoint returned HTTP {resp.status_code}"
                )
            last_failure = f"HTTP {resp.status_code}"
        if attempt < max_attempts:
            logger.warning(
                "embedding request failed (attempt %d/%d): %s",
                attempt, max_attempts, last_failure,
            )
            time.sleep(delay)
            delay *= 2
    raise RetryableProviderError(
        f"embedding endpoint unreachable after {max_attempts} attempts: {last_failure}",
        attempts=max_attempts,
    )


def _parse_remote_response(payload: dict, expected: int) -> list[np.ndarray]:
    try:
        items = sorted(payload["data"], key=lambda item: item["index"])
        vectors = [np.asarray(item["embedding"], dtype=np.float64) for item in items]
    except (KeyError, TypeError) as exc:
        raise ProviderContractError(f"malformed embedding response: {exc}") from exc
    if len(vectors) != expected:
        raise ProviderContractError(
            f"expected {expected} embeddings, provider returned {len(vectors)}"
        )
    dims = {v.shape[0] for v in vectors}
    if len(dims) > 1:
        raise ProviderContractError(f"dimension mismatch across batch: {sorted(dims)}")
    return vectors


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors: ``a . b / (|a| |b|)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroNormError("cosine similarity is undefined for a zero vector")
    return float(np.dot(a, b) / (norm_a * norm_b))
