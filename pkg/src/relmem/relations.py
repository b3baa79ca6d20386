"""Pairwise fragment relations and the sparse symmetric relation matrix.

Three relation kinds are implemented:

* ``semantic``: embedding cosine between fragment vectors. The default mode
  clips negatives to zero so downstream weighted averages stay bounded;
  ``one-minus-cosine`` is available for distance-style weighting.
* ``context-structure``: geometric decay ``w_rel ** |loc_i - loc_j|`` in source
  position. ``w_rel = 0`` leaves every pair unrelated, which makes retrieval
  degrade to plain independent ranking.
* ``code-structure``: length-weighted average of graph distances between the
  code nodes two fragments were attributed to.

Weights are symmetric, non-negative, and stored sparsely: exact zeros and
values below the configured floor are simply absent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .codegraph import CodeGraph, NodeSpanAssignment
from .embeddings import cosine_similarity
from .errors import ConfigError, FragmentUnmapped, MatrixContractError, RelmemError, ZeroNormError
from .fragments import Fragment

SEMANTIC = "semantic"
CONTEXT_STRUCTURE = "context-structure"
CODE_STRUCTURE = "code-structure"

COSINE_MODE = "cosine"
ONE_MINUS_COSINE_MODE = "one-minus-cosine"

# Geometric context weights below this are numerically irrelevant to the
# normalized averages they feed; dropping them bounds matrix size.
CONTEXT_SPARSITY_FLOOR = 1e-4


@dataclass(frozen=True)
class RelationSpec:
    kind: str = CONTEXT_STRUCTURE
    w_rel: float = 0.3
    semantic_mode: str = COSINE_MODE
    sparsity_floor: float | None = None

    def __post_init__(self):
        if self.kind not in (SEMANTIC, CONTEXT_STRUCTURE, CODE_STRUCTURE):
            raise ConfigError(f"unknown relation kind: {self.kind!r}")
        if not 0.0 <= self.w_rel <= 1.0:
            raise ConfigError("w_rel must lie in [0, 1]")
        if self.semantic_mode not in (COSINE_MODE, ONE_MINUS_COSINE_MODE):
            raise ConfigError(f"unknown semantic mode: {self.semantic_mode!r}")
        if self.sparsity_floor is None:
            floor = CONTEXT_SPARSITY_FLOOR if self.kind == CONTEXT_STRUCTURE else 0.0
            object.__setattr__(self, "sparsity_floor", floor)
        elif self.sparsity_floor < 0:
            raise ConfigError("sparsity_floor must be >= 0")


class RelationMatrix:
    """Sparse symmetric pairwise weights, diagonal omitted.

    Entries are kept once with ``i < j``; lookups mirror automatically.
    """

    def __init__(self, n: int, entries: Iterable[tuple[int, int, float]] = ()):
        store: dict[tuple[int, int], float] = {}
        for i, j, w in entries:
            if i == j:
                raise MatrixContractError(f"diagonal entry ({i},{i}) not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise MatrixContractError(f"entry ({i},{j}) outside matrix of size {n}")
            key = (i, j) if i < j else (j, i)
            store[key] = float(w)
        ordered = sorted(store.items())
        self.n = n
        self._store = dict(ordered)
        self.rows = np.fromiter((k[0] for k, _ in ordered), dtype=np.int64, count=len(ordered))
        self.cols = np.fromiter((k[1] for k, _ in ordered), dtype=np.int64, count=len(ordered))
        self.weights = np.fromiter((w for _, w in ordered), dtype=np.float64, count=len(ordered))

    @property
    def nnz(self) -> int:
        return len(self._store)

    def weight(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        key = (i, j) if i < j else (j, i)
        return self._store.get(key, 0.0)

    def entries(self) -> Iterable[tuple[int, int, float]]:
        return ((i, j, w) for (i, j), w in self._store.items())

    def density(self) -> float:
        pairs = self.n * (self.n - 1) // 2
        return self.nnz / pairs if pairs else 0.0


def semantic_relation(e_i, e_j, mode: str = COSINE_MODE) -> float:
    """Embedding-based relation strength between two fragments."""
    cos = cosine_similarity(e_i, e_j)
    if mode == ONE_MINUS_COSINE_MODE:
        return 1.0 - cos
    if mode == COSINE_MODE:
        return max(cos, 0.0)
    raise ConfigError(f"unknown semantic mode: {mode!r}")


def context_structure_relation(loc_i: int, loc_j: int, w_rel: float) -> float:
    """Geometric decay in position distance; 1.0 at distance zero for any base."""
    if not 0.0 <= w_rel <= 1.0:
        raise ConfigError("w_rel must lie in [0, 1]")
    return float(w_rel) ** abs(loc_i - loc_j)


def code_structure_relation(
    graph: CodeGraph,
    assign_i: NodeSpanAssignment,
    assign_j: NodeSpanAssignment,
) -> float:
    """Length-weighted average graph distance between two fragments' nodes."""
    if not assign_i.nodes or not assign_j.nodes:
        raise FragmentUnmapped("cannot relate a fragment with an empty node assignment")
    numerator = 0.0
    denominator = 0.0
    for node_k, len_k in assign_i.nodes:
        dists = graph.distances_from(node_k)
        for node_l, len_l in assign_j.nodes:
            mass = float(len_k) * float(len_l)
            numerator += mass * dists.get(node_l, 0.0)
            denominator += mass
    return numerator / denominator


def build_relation_matrix(
    fragments: Sequence[Fragment],
    spec: RelationSpec,
    *,
    embeddings: np.ndarray | None = None,
    graph: CodeGraph | None = None,
    assignments: Sequence[NodeSpanAssignment] | None = None,
) -> RelationMatrix:
    """Materialize pairwise weights for every fragment pair under ``spec``.

    Exact zeros and weights below ``spec.sparsity_floor`` are not stored; an
    absent entry and a zero weight are interchangeable downstream.
    """
    n = len(fragments)
    if spec.kind == SEMANTIC:
        if embeddings is None:
            raise ConfigError("semantic relation requires fragment embeddings")
        return RelationMatrix(n, _semantic_entries(embeddings, spec))
    if spec.kind == CONTEXT_STRUCTURE:
        return RelationMatrix(n, _context_entries(fragments, spec))
    if graph is None or assignments is None:
        raise ConfigError("code-structure relation requires a code graph and node assignments")
    return RelationMatrix(n, _code_entries(graph, assignments, spec))


def _keep(w: float, floor: float) -> bool:
    return w > 0.0 and w >= floor


def _semantic_entries(embeddings: np.ndarray, spec: RelationSpec):
    vectors = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    zero_rows = np.flatnonzero(norms == 0.0)
    if zero_rows.size:
        raise ZeroNormError(f"fragment {int(zero_rows[0])} has a zero-norm embedding")
    unit = vectors / norms[:, None]
    cosines = unit @ unit.T
    n = vectors.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            cos = float(cosines[i, j])
            w = (1.0 - cos) if spec.semantic_mode == ONE_MINUS_COSINE_MODE else max(cos, 0.0)
            if _keep(w, spec.sparsity_floor):
                yield i, j, w


def _context_entries(fragments: Sequence[Fragment], spec: RelationSpec):
    if spec.w_rel == 0.0:
        return
    locs = sorted((f.loc, idx) for idx, f in enumerate(fragments))
    n = len(locs)
    for a in range(n):
        loc_a, idx_a = locs[a]
        for b in range(a + 1, n):
            loc_b, idx_b = locs[b]
            w = spec.w_rel ** (loc_b - loc_a)
            if not _keep(w, spec.sparsity_floor):
                if spec.w_rel < 1.0:
                    break  # weights only shrink further out
                continue
            yield min(idx_a, idx_b), max(idx_a, idx_b), w


def _code_entries(graph: CodeGraph, assignments: Sequence[NodeSpanAssignment], spec: RelationSpec):
    n = len(assignments)
    for i in range(n):
        for j in range(i + 1, n):
            try:
                w = code_structure_relation(graph, assignments[i], assignments[j])
            except RelmemError as exc:
                raise type(exc)(f"relation for pair ({i},{j}): {exc}") from exc
            if _keep(w, spec.sparsity_floor):
                yield i, j, w
