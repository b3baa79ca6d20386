"""Okapi BM25 scoring for code fragments.

Tokenization is identifier-aware: text is split on non-alphanumeric runs,
then camelCase and digit boundaries, and lowercased, so ``getUserName`` and
``get_user_name`` share tokens. The IDF uses the non-negative variant
``ln((N - df + 0.5) / (df + 0.5) + 1)`` so scores can safely be averaged by
downstream propagation.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .errors import EmptyContext
from .fragments import Fragment

TOKENIZER_TAG = "code-identifiers/1"

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

_ALNUM_RE = re.compile(r"[A-Za-z0-9]+")
_CASE_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z0-9])|[A-Z]?[a-z0-9]+|[A-Z]+|[0-9]+")


def tokenize_code(text: str) -> list[str]:
    """Lowercased identifier tokens; camelCase and snake_case are split apart."""
    out = []
    for run in _ALNUM_RE.findall(text):
        for piece in _CASE_RE.findall(run):
            out.append(piece.lower())
    return out


@dataclass
class Bm25Index:
    n_docs: int
    avg_len: float
    doc_lens: list[int]
    term_freqs: list[dict[str, int]]
    doc_freq: dict[str, int]
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    tokenizer: str = field(default=TOKENIZER_TAG)


def build_bm25(fragments: Sequence[Fragment], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Index:
    """Build corpus statistics over the fragments' tokenized texts."""
    if not fragments:
        raise EmptyContext("cannot build a BM25 index over zero fragments")
    term_freqs = [dict(Counter(tokenize_code(f.text))) for f in fragments]
    doc_lens = [sum(tf.values()) for tf in term_freqs]
    doc_freq: Counter = Counter()
    for tf in term_freqs:
        doc_freq.update(tf.keys())
    return Bm25Index(
        n_docs=len(fragments),
        avg_len=sum(doc_lens) / len(doc_lens),
        doc_lens=doc_lens,
        term_freqs=term_freqs,
        doc_freq=dict(doc_freq),
        k1=k1,
        b=b,
    )


def _idf(index: Bm25Index, term: str) -> float:
    df = index.doc_freq.get(term, 0)
    return math.log((index.n_docs - df + 0.5) / (df + 0.5) + 1.0)


def bm25_scores(query: str, index: Bm25Index) -> list[float]:
    """Okapi BM25 score of every fragment against the query.

    Fragments sharing no token with the query score exactly 0; an empty query
    yields the all-zero vector. Repeated query tokens contribute once per
    occurrence.
    """
    terms = tokenize_code(query)
    scores = [0.0] * index.n_docs
    if not terms or index.avg_len == 0:
        return scores
    for i, tf in enumerate(index.term_freqs):
        length_norm = index.k1 * (1.0 - index.b + index.b * index.doc_lens[i] / index.avg_len)
        total = 0.0
        for term in terms:
            freq = tf.get(term)
            if not freq:
                continue
            total += _idf(index, term) * freq * (index.k1 + 1.0) / (freq + length_norm)
        scores[i] = total
    return scores
