"""Query scoring: independent, environment, and combined relation-aware scores.

For a query, every fragment first gets an independent score (embedding cosine
or BM25). Each fragment's environment score is the relation-weighted average
of the *other* fragments' independent scores, normalized by the total relation
weight so the two scores share a scale. The final ranking key adds the two:
``s_rel = s_ind + alpha * s_env``. With ``alpha = 0`` or an empty relation
matrix the ranking is exactly the plain independent one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .embeddings import embed_batch
from .errors import ConfigError, DimensionError, MatrixContractError, ZeroNormError
from .lexical import bm25_scores
from .relations import RelationMatrix

logger = logging.getLogger(__name__)

EMBEDDING_SCORER = "embedding-cosine"
BM25_SCORER = "bm25"


@dataclass(frozen=True)
class ScoreSet:
    """Per-fragment score triple for one query."""

    s_ind: np.ndarray
    s_env: np.ndarray
    s_rel: np.ndarray
    alpha: float

    @classmethod
    def compute(cls, s_ind, matrix: RelationMatrix, alpha: float) -> "ScoreSet":
        s_ind = np.asarray(s_ind, dtype=np.float64)
        s_env = environment_scores(s_ind, matrix)
        return cls(s_ind=s_ind, s_env=s_env, s_rel=relation_aware_scores(s_ind, s_env, alpha), alpha=alpha)


@dataclass(frozen=True)
class TopKSelection:
    """Indices of the best-scoring fragments, best first; ties go to lower id."""

    indices: tuple[int, ...]
    scores: tuple[float, ...]


def independent_scores(query: str, index, scorer: str | None = None) -> np.ndarray:
    """Score every fragment in ``index`` directly against the query."""
    scorer = scorer or index.scorer
    if scorer == EMBEDDING_SCORER:
        if index.embeddings is None or index.provider is None:
            raise ConfigError("scorer 'embedding-cosine' requested but the index has no embeddings")
        query_vec = embed_batch([query], index.provider)[0]
        return _cosine_row(query_vec, index.embeddings)
    if scorer == BM25_SCORER:
        if index.bm25 is None:
            raise ConfigError("scorer 'bm25' requested but the index has no BM25 statistics")
        return np.asarray(bm25_scores(query, index.bm25), dtype=np.float64)
    raise ConfigError(f"unknown scorer: {scorer!r}")


def _cosine_row(query_vec: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
    if embeddings.shape[1] != query_vec.shape[0]:
        raise DimensionError(
            f"query dim {query_vec.shape[0]} vs index dim {embeddings.shape[1]}"
        )
    query_norm = np.linalg.norm(query_vec)
    if query_norm == 0.0:
        raise ZeroNormError("query embedding has zero norm")
    norms = np.linalg.norm(embeddings, axis=1)
    scores = np.zeros(embeddings.shape[0], dtype=np.float64)
    ok = norms > 0.0
    scores[ok] = (embeddings[ok] @ query_vec) / (norms[ok] * query_norm)
    return scores


def environment_scores(s_ind, matrix: RelationMatrix) -> np.ndarray:
    """Relation-weighted average of the other fragments' independent scores.

    Fragments with no stored relation weight get an environment score of 0.
    """
    s = np.asarray(s_ind, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] != matrix.n:
        raise DimensionError(f"score vector of length {s.shape} vs matrix of size {matrix.n}")
    if matrix.weights.size and float(matrix.weights.min()) < 0.0:
        raise MatrixContractError("relation matrix holds a negative weight")
    numer = np.zeros(matrix.n, dtype=np.float64)
    denom = np.zeros(matrix.n, dtype=np.float64)
    if matrix.weights.size:
        np.add.at(numer, matrix.rows, matrix.weights * s[matrix.cols])
        np.add.at(numer, matrix.cols, matrix.weights * s[matrix.rows])
        np.add.at(denom, matrix.rows, matrix.weights)
        np.add.at(denom, matrix.cols, matrix.weights)
    out = np.zeros(matrix.n, dtype=np.float64)
    nonzero = denom > 0.0
    out[nonzero] = numer[nonzero] / denom[nonzero]
    return out


def relation_aware_scores(s_ind, s_env, alpha: float) -> np.ndarray:
    """Combined ranking key: independent score plus ``alpha`` times environment score."""
    s_ind = np.asarray(s_ind, dtype=np.float64)
    s_env = np.asarray(s_env, dtype=np.float64)
    if s_ind.shape != s_env.shape:
        raise DimensionError(f"shape mismatch: {s_ind.shape} vs {s_env.shape}")
    if alpha < 0:
        raise ConfigError("alpha must be >= 0")
    return s_ind + alpha * s_env


def top_k(s_rel, k: int) -> TopKSelection:
    """The ``k`` highest-scoring fragment indices, descending, ties by ascending id."""
    if k <= 0:
        raise ConfigError("k must be >= 1")
    scores = np.asarray(s_rel, dtype=np.float64)
    n = scores.shape[0]
    if k > n:
        logger.warning("k=%d exceeds store size %d; returning all fragments", k, n)
        k = n
    order = sorted(range(n), key=lambda i: (-scores[i], i))[:k]
    return TopKSelection(indices=tuple(order), scores=tuple(float(scores[i]) for i in order))
