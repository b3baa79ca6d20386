"""Build and persist retrieval indexes.

An index bundles everything one query needs: the fragment store, the scorer
artifacts (cached embeddings or BM25 statistics), the relation matrix with the
spec that generated it, and, for code, the repository graph plus per-fragment
node assignments. Indexes serialize to a single version-tagged JSON document;
reloading one reproduces in-memory retrieval bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .codegraph import (
    CodeEdge,
    CodeGraph,
    CodeNode,
    NodeSpanAssignment,
    build_code_graph,
    map_fragment_to_nodes,
)
from .embeddings import EmbeddingProviderSpec, embed_batch
from .errors import IndexFormatError
from .fragments import (
    CHAT,
    CODE,
    STORY,
    ChatSplit,
    ChatTurn,
    CodeSplit,
    Fragment,
    SourceRef,
    SplitConfig,
    StorySplit,
    split_chat,
    split_code,
    split_story,
)
from .lexical import Bm25Index, build_bm25
from .relations import CODE_STRUCTURE, CONTEXT_STRUCTURE, RelationMatrix, RelationSpec, SEMANTIC, build_relation_matrix
from .scoring import BM25_SCORER, EMBEDDING_SCORER

INDEX_FORMAT = "fragment-memory-index/1"

DEFAULT_STORY_RELATION = RelationSpec(kind=CONTEXT_STRUCTURE, w_rel=0.3)
DEFAULT_CHAT_RELATION = RelationSpec(kind=CONTEXT_STRUCTURE, w_rel=0.8)
DEFAULT_CODE_RELATION = RelationSpec(kind=CODE_STRUCTURE)


@dataclass
class MemoryIndex:
    kind: str
    split: SplitConfig
    fragments: list[Fragment]
    scorer: str
    relation_spec: RelationSpec
    matrix: RelationMatrix
    provider: EmbeddingProviderSpec | None = None
    embeddings: np.ndarray | None = None
    bm25: Bm25Index | None = None
    graph: CodeGraph | None = None
    assignments: list[NodeSpanAssignment] | None = None
    diagnostics: list[dict] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.fragments)


def _embed_fragments(fragments: Sequence[Fragment], provider: EmbeddingProviderSpec) -> np.ndarray:
    vectors = embed_batch([f.text for f in fragments], provider)
    return np.vstack(vectors)


def build_story_index(
    text: str,
    split: StorySplit | None = None,
    provider: EmbeddingProviderSpec | None = None,
    relation: RelationSpec | None = None,
) -> MemoryIndex:
    split = split or StorySplit()
    provider = provider or EmbeddingProviderSpec()
    relation = relation or DEFAULT_STORY_RELATION
    fragments = split_story(text, split)
    embeddings = _embed_fragments(fragments, provider)
    matrix = build_relation_matrix(fragments, relation, embeddings=embeddings)
    return MemoryIndex(
        kind=STORY,
        split=split,
        fragments=fragments,
        scorer=EMBEDDING_SCORER,
        relation_spec=relation,
        matrix=matrix,
        provider=provider,
        embeddings=embeddings,
    )


def build_code_index(
    files: Sequence[tuple[str, str]],
    split: CodeSplit | None = None,
    relation: RelationSpec | None = None,
    scorer: str = BM25_SCORER,
    provider: EmbeddingProviderSpec | None = None,
    language: str = "python",
) -> MemoryIndex:
    split = split or CodeSplit()
    relation = relation or DEFAULT_CODE_RELATION
    diagnostics: list[dict] = []
    fragments = split_code(files, split, diagnostics)
    graph = build_code_graph(files, language)
    diagnostics.extend(graph.diagnostics)
    assignments = [map_fragment_to_nodes(graph, f) for f in fragments]

    embeddings = None
    if scorer == EMBEDDING_SCORER or relation.kind == SEMANTIC:
        provider = provider or EmbeddingProviderSpec()
        embeddings = _embed_fragments(fragments, provider)
    bm25 = build_bm25(fragments) if scorer == BM25_SCORER else None
    matrix = build_relation_matrix(
        fragments, relation, embeddings=embeddings, graph=graph, assignments=assignments
    )
    return MemoryIndex(
        kind=CODE,
        split=split,
        fragments=fragments,
        scorer=scorer,
        relation_spec=relation,
        matrix=matrix,
        provider=provider if embeddings is not None else None,
        embeddings=embeddings,
        bm25=bm25,
        graph=graph,
        assignments=assignments,
        diagnostics=diagnostics,
    )


def build_chat_index(
    turns: Sequence[ChatTurn | tuple],
    provider: EmbeddingProviderSpec | None = None,
    relation: RelationSpec | None = None,
) -> MemoryIndex:
    provider = provider or EmbeddingProviderSpec()
    relation = relation or DEFAULT_CHAT_RELATION
    fragments = split_chat(turns)
    embeddings = _embed_fragments(fragments, provider)
    matrix = build_relation_matrix(fragments, relation, embeddings=embeddings)
    return MemoryIndex(
        kind=CHAT,
        split=ChatSplit(),
        fragments=fragments,
        scorer=EMBEDDING_SCORER,
        relation_spec=relation,
        matrix=matrix,
        provider=provider,
        embeddings=embeddings,
    )


# ----------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------


def _split_to_dict(split: SplitConfig) -> dict:
    if isinstance(split, StorySplit):
        return {"kind": STORY, "words_per_fragment": split.words_per_fragment}
    if isinstance(split, CodeSplit):
        return {"kind": CODE, "window_lines": split.window_lines, "overlap_lines": split.overlap_lines}
    return {"kind": CHAT}


def _split_from_dict(data: dict) -> SplitConfig:
    kind = data.get("kind")
    if kind == STORY:
        return StorySplit(words_per_fragment=data["words_per_fragment"])
    if kind == CODE:
        return CodeSplit(window_lines=data["window_lines"], overlap_lines=data["overlap_lines"])
    if kind == CHAT:
        return ChatSplit()
    raise IndexFormatError(f"unknown split kind: {kind!r}")


def _fragment_to_dict(f: Fragment) -> dict:
    return {
        "id": f.id,
        "loc": f.loc,
        "text": f.text,
        "tokens": f.token_estimate,
        "source": {
            "kind": f.source.kind,
            "path": f.source.path,
            "line_range": list(f.source.line_range) if f.source.line_range else None,
            "turn_index": f.source.turn_index,
            "timestamp": f.source.timestamp,
        },
    }


def _fragment_from_dict(data: dict) -> Fragment:
    src = data["source"]
    line_range = tuple(src["line_range"]) if src.get("line_range") else None
    return Fragment(
        id=data["id"],
        loc=data["loc"],
        text=data["text"],
        token_estimate=data["tokens"],
        source=SourceRef(
            kind=src["kind"],
            path=src.get("path"),
            line_range=line_range,
            turn_index=src.get("turn_index"),
            timestamp=src.get("timestamp"),
        ),
    )


def _graph_to_dict(graph: CodeGraph) -> dict:
    return {
        "nodes": [
            {
                "id": node.id,
                "kind": node.kind,
                "path": node.path,
                "syntax_kind": node.syntax_kind,
                "byte_span": list(node.byte_span) if node.byte_span else None,
                "text_length": node.text_length,
                "name": node.name,
                "parent": node.parent,
            }
            for node in graph.nodes
        ],
        "edges": [[e.a, e.b, e.weight, e.kind] for e in graph.edges],
        "line_starts": graph.line_starts,
    }


def _graph_from_dict(data: dict) -> CodeGraph:
    nodes = [
        CodeNode(
            id=item["id"],
            kind=item["kind"],
            path=item["path"],
            syntax_kind=item.get("syntax_kind"),
            byte_span=tuple(item["byte_span"]) if item.get("byte_span") else None,
            text_length=item.get("text_length", 0),
            name=item.get("name"),
            parent=item.get("parent"),
        )
        for item in data["nodes"]
    ]
    edges = [CodeEdge(a, b, w, kind) for a, b, w, kind in data["edges"]]
    return CodeGraph(nodes, edges, line_starts=data.get("line_starts"))


def index_to_dict(index: MemoryIndex) -> dict:
    return {
        "format": INDEX_FORMAT,
        "kind": index.kind,
        "split": _split_to_dict(index.split),
        "fragments": [_fragment_to_dict(f) for f in index.fragments],
        "scorer": index.scorer,
        "provider": asdict(index.provider) if index.provider else None,
        "embeddings": index.embeddings.tolist() if index.embeddings is not None else None,
        "bm25": asdict(index.bm25) if index.bm25 else None,
        "relation": asdict(index.relation_spec),
        "matrix": {"n": index.matrix.n, "entries": [[i, j, w] for i, j, w in index.matrix.entries()]},
        "graph": _graph_to_dict(index.graph) if index.graph else None,
        "assignments": (
            [{"fragment": a.fragment_id, "nodes": [list(pair) for pair in a.nodes]} for a in index.assignments]
            if index.assignments is not None
            else None
        ),
        "diagnostics": index.diagnostics,
    }


def index_from_dict(data: dict) -> MemoryIndex:
    if data.get("format") != INDEX_FORMAT:
        raise IndexFormatError(
            f"unsupported index format {data.get('format')!r}, expected {INDEX_FORMAT!r}"
        )
    fragments = [_fragment_from_dict(item) for item in data["fragments"]]
    matrix_data = data["matrix"]
    if matrix_data["n"] != len(fragments):
        raise IndexFormatError("matrix size does not match fragment count")
    if any(not (0 <= i < len(fragments) and 0 <= j < len(fragments)) for i, j, _ in matrix_data["entries"]):
        raise IndexFormatError("matrix entry references a missing fragment")
    embeddings = data.get("embeddings")
    bm25_data = data.get("bm25")
    assignments_data = data.get("assignments")
    return MemoryIndex(
        kind=data["kind"],
        split=_split_from_dict(data["split"]),
        fragments=fragments,
        scorer=data["scorer"],
        relation_spec=RelationSpec(**data["relation"]),
        matrix=RelationMatrix(matrix_data["n"], [tuple(e) for e in matrix_data["entries"]]),
        provider=EmbeddingProviderSpec(**data["provider"]) if data.get("provider") else None,
        embeddings=np.asarray(embeddings, dtype=np.float64) if embeddings is not None else None,
        bm25=Bm25Index(**bm25_data) if bm25_data else None,
        graph=_graph_from_dict(data["graph"]) if data.get("graph") else None,
        assignments=(
            [NodeSpanAssignment(item["fragment"], tuple(tuple(p) for p in item["nodes"])) for item in assignments_data]
            if assignments_data is not None
            else None
        ),
        diagnostics=data.get("diagnostics", []),
    )


def save_index(index: MemoryIndex, path: str | Path) -> None:
    """Write the index as a deterministic, version-tagged JSON document."""
    payload = index_to_dict(index)
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_index(path: str | Path) -> MemoryIndex:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IndexFormatError(f"not a JSON index file: {exc}") from exc
    return index_from_dict(data)
