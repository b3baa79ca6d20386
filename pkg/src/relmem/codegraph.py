"""Repository graph over source files, with max-product path distances.

The graph ties together three structures:

* one syntax tree per parseable file (statement-level nodes plus call
  expressions), parent/child edges weighted 0.5;
* the directory tree (directory and file nodes), parent/child edges weighted
  0.3, and a weight-1.0 link from every file node to its syntax root;
* weight-0.8 edges between each resolvable call site and the matching
  function definition, in-file or cross-file.

All edge weights lie in [0, 1]. A path's weight is the product of its edge
weights, and the distance between two nodes is the best such product: 1 for a
node with itself, 0 for disconnected pairs. Extending a path can only shrink
the product, so single-source Dijkstra (on a max-heap of running products)
computes it exactly.
"""

from __future__ import annotations

import ast
import logging
from collections import defaultdict
from dataclasses import dataclass
from heapq import heappop, heappush
from pathlib import PurePosixPath
from typing import Sequence

from .errors import ConfigError, FragmentUnmapped, NodeNotFound
from .fragments import Fragment, source_lines

logger = logging.getLogger(__name__)

SYNTAX_WEIGHT = 0.5
DIR_WEIGHT = 0.3
ROOT_LINK_WEIGHT = 1.0
CALL_WEIGHT = 0.8

DIRECTORY = "directory"
FILE = "file"
SYNTAX = "syntax"

ROOT_DIR = "."


@dataclass(frozen=True)
class CodeNode:
    id: int
    kind: str                               # directory | file | syntax
    path: str
    syntax_kind: str | None = None          # ast class name for syntax nodes
    byte_span: tuple[int, int] | None = None
    text_length: int = 0
    name: str | None = None                 # definition / callee name when known
    parent: int | None = None               # enclosing syntax node


@dataclass(frozen=True)
class CodeEdge:
    a: int
    b: int
    weight: float
    kind: str                               # syntax-tree | dir-tree | file-root-link | call


@dataclass(frozen=True)
class NodeSpanAssignment:
    """Non-overlapping attribution of a fragment's bytes to graph nodes."""

    fragment_id: int
    nodes: tuple[tuple[int, int], ...]      # (node id, attributed byte count)


class CodeGraph:
    """Read-only node/edge store with memoized single-source distances."""

    def __init__(
        self,
        nodes: Sequence[CodeNode],
        edges: Sequence[CodeEdge],
        line_starts: dict[str, list[int]] | None = None,
        diagnostics: list[dict] | None = None,
    ):
        self.nodes = list(nodes)
        self.edges = list(edges)
        self.line_starts = dict(line_starts or {})
        self.diagnostics = list(diagnostics or [])

        self._adjacency: dict[int, list[tuple[int, float]]] = defaultdict(list)
        for e in self.edges:
            self._adjacency[e.a].append((e.b, e.weight))
            self._adjacency[e.b].append((e.a, e.weight))

        self._children: dict[int, list[int]] = defaultdict(list)
        self._file_node: dict[str, int] = {}
        self._syntax_root: dict[str, int] = {}
        for node in self.nodes:
            if node.kind == FILE:
                self._file_node[node.path] = node.id
            elif node.kind == SYNTAX:
                if node.parent is None:
                    self._syntax_root[node.path] = node.id
                else:
                    self._children[node.parent].append(node.id)
        self._dist_cache: dict[int, dict[int, float]] = {}

    # ------------------------------------------------------------------
    # Distances
    # ------------------------------------------------------------------

    def distances_from(self, src: int) -> dict[int, float]:
        """Best path-weight product from ``src`` to every reachable node."""
        self._check_id(src)
        cached = self._dist_cache.get(src)
        if cached is not None:
            return cached
        best = {src: 1.0}
        heap = [(-1.0, src)]
        while heap:
            neg, u = heappop(heap)
            d = -neg
            if d < best.get(u, 0.0):
                continue
            for v, w in self._adjacency.get(u, ()):
                if w <= 0.0:
                    continue
                cand = d * w
                if cand > best.get(v, 0.0):
                    best[v] = cand
                    heappush(heap, (-cand, v))
        self._dist_cache[src] = best
        return best

    def node_distance(self, a: int, b: int) -> float:
        """Max-product path weight between two nodes; 0 when disconnected."""
        self._check_id(a)
        self._check_id(b)
        return self.distances_from(a).get(b, 0.0)

    def _check_id(self, node_id: int) -> None:
        if not 0 <= node_id < len(self.nodes):
            raise NodeNotFound(f"node id {node_id} not in graph of {len(self.nodes)} nodes")

    # ------------------------------------------------------------------
    # Fragment lookup
    # ------------------------------------------------------------------

    def fragment_byte_range(self, path: str, line_range: tuple[int, int]) -> tuple[int, int]:
        starts = self.line_starts.get(path)
        if starts is None:
            raise FragmentUnmapped(f"file not in graph: {path}")
        lo, hi = line_range
        hi = min(hi, len(starts) - 1)
        lo = min(lo, hi)
        return starts[lo], starts[hi]

    def file_node_id(self, path: str) -> int | None:
        return self._file_node.get(path)

    def syntax_root_id(self, path: str) -> int | None:
        return self._syntax_root.get(path)

    def children_of(self, node_id: int) -> list[int]:
        return self._children.get(node_id, [])


# ----------------------------------------------------------------------
# Parsing (one adapter per supported grammar)
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class _SyntaxRecord:
    kind: str
    name: str | None
    span: tuple[int, int]
    parent: int | None


@dataclass
class _ParsedSource:
    records: list[_SyntaxRecord]
    defs: list[tuple[int, str]]             # (record index, function name)
    calls: list[tuple[int, str | None]]     # (record index, callee name)


def _byte_line_starts(text: str) -> list[int]:
    """Byte offset of every line start plus a final total-length sentinel."""
    lines = source_lines(text)
    starts = [0]
    pos = 0
    for i, line in enumerate(lines):
        pos += len(line.encode("utf-8"))
        if i < len(lines) - 1 or text.endswith("\n"):
            pos += 1
        starts.append(pos)
    return starts


def _callee_name(call: ast.Call) -> str | None:
    func = call.func
    if isinstance(func, ast.Name):
        return func.id
    if isinstance(func, ast.Attribute):
        return func.attr
    return None


class PythonSourceParser:
    """Statement-level syntax records from the stdlib ast.

    Graph nodes are the module root, every statement, and every call
    expression; finer-grained expressions stay internal to their statement.
    """

    language = "python"
    suffixes = (".py",)

    def parse(self, text: str) -> _ParsedSource:
        tree = ast.parse(text)
        starts = _byte_line_starts(text)
        raw = text.encode("utf-8")
        records = [_SyntaxRecord("Module", None, (0, starts[-1]), None)]
        defs: list[tuple[int, str]] = []
        calls: list[tuple[int, str | None]] = []

        def span_of(node: ast.AST) -> tuple[int, int]:
            begin = starts[node.lineno - 1] + node.col_offset
            end = starts[node.end_lineno - 1] + node.end_col_offset
            decorators = getattr(node, "decorator_list", None)
            if decorators:
                # A decorated definition starts at its first decorator so the
                # decorator call nodes nest inside it.
                begin = min(
                    begin,
                    min(starts[d.lineno - 1] + d.col_offset - 1 for d in decorators),
                )
            # Spans absorb their trailing newline run so consecutive statements
            # tile line-window fragments without separator gaps. A child that
            # ends where its parent ends extends through the same run, so
            # nesting is preserved.
            while end < len(raw) and raw[end] == 0x0A:
                end += 1
            return begin, end

        def walk(node: ast.AST, ancestor: int) -> None:
            for child in ast.iter_child_nodes(node):
                if isinstance(child, (ast.stmt, ast.Call)):
                    idx = len(records)
                    records.append(_SyntaxRecord(
                        kind=type(child).__name__,
                        name=getattr(child, "name", None),
                        span=span_of(child),
                        parent=ancestor,
                    ))
                    if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
                        defs.append((idx, child.name))
                    elif isinstance(child, ast.Call):
                        calls.append((idx, _callee_name(child)))
                    walk(child, idx)
                else:
                    walk(child, ancestor)

        walk(tree, 0)
        return _ParsedSource(records, defs, calls)


PARSERS = {PythonSourceParser.language: PythonSourceParser()}


# ----------------------------------------------------------------------
# Graph construction
# ----------------------------------------------------------------------


def build_code_graph(files: Sequence[tuple[str, str]], language: str = "python") -> CodeGraph:
    """Assemble the repository graph for a set of (path, text) sources.

    Unparseable files contribute only their file node and a diagnostic record;
    calls that match no known definition are counted but produce no edge.
    """
    parser = PARSERS.get(language)
    if parser is None:
        raise ConfigError(f"no parser registered for language {language!r}")

    nodes: list[CodeNode] = []
    edges: list[CodeEdge] = []
    diagnostics: list[dict] = []
    line_starts: dict[str, list[int]] = {}

    def add_node(**kw) -> int:
        node = CodeNode(id=len(nodes), **kw)
        nodes.append(node)
        return node.id

    dir_ids: dict[str, int] = {}

    def ensure_dir(path: PurePosixPath) -> int:
        key = path.as_posix()
        existing = dir_ids.get(key)
        if existing is not None:
            return existing
        node_id = add_node(kind=DIRECTORY, path=key)
        dir_ids[key] = node_id
        if key != ROOT_DIR:
            parent_id = ensure_dir(path.parent)
            edges.append(CodeEdge(parent_id, node_id, DIR_WEIGHT, "dir-tree"))
        return node_id

    ensure_dir(PurePosixPath(ROOT_DIR))

    defs_by_name: dict[str, list[tuple[str, int]]] = defaultdict(list)
    call_sites: list[tuple[str, int, str | None]] = []

    for raw_path, text in sorted(files, key=lambda item: item[0]):
        path = PurePosixPath(raw_path).as_posix()
        dir_id = ensure_dir(PurePosixPath(path).parent)
        file_id = add_node(kind=FILE, path=path)
        edges.append(CodeEdge(dir_id, file_id, DIR_WEIGHT, "dir-tree"))
        line_starts[path] = _byte_line_starts(text)
        if not text.strip():
            continue
        try:
            parsed = parser.parse(text)
        except SyntaxError as exc:
            logger.warning("could not parse %s: %s", path, exc)
            diagnostics.append({"kind": "unparsed-file", "path": path, "detail": str(exc)})
            continue
        base = len(nodes)
        for record in parsed.records:
            parent = None if record.parent is None else base + record.parent
            node_id = add_node(
                kind=SYNTAX,
                path=path,
                syntax_kind=record.kind,
                byte_span=record.span,
                text_length=record.span[1] - record.span[0],
                name=record.name,
                parent=parent,
            )
            if parent is not None:
                edges.append(CodeEdge(parent, node_id, SYNTAX_WEIGHT, "syntax-tree"))
        edges.append(CodeEdge(file_id, base, ROOT_LINK_WEIGHT, "file-root-link"))
        for idx, name in parsed.defs:
            defs_by_name[name].append((path, base + idx))
        for idx, name in parsed.calls:
            call_sites.append((path, base + idx, name))

    seen_call_pairs: set[tuple[int, int]] = set()
    for path, call_id, name in call_sites:
        candidates = defs_by_name.get(name or "", [])
        same_file = [node_id for def_path, node_id in candidates if def_path == path]
        targets = same_file or [node_id for _, node_id in candidates]
        if not targets:
            diagnostics.append({"kind": "unresolved-call", "path": path, "name": name})
            continue
        for target in targets:
            key = (min(call_id, target), max(call_id, target))
            if key in seen_call_pairs:
                continue
            seen_call_pairs.add(key)
            edges.append(CodeEdge(call_id, target, CALL_WEIGHT, "call"))

    return CodeGraph(nodes, edges, line_starts, diagnostics)


# ----------------------------------------------------------------------
# Fragment-to-node attribution
# ----------------------------------------------------------------------


def map_fragment_to_nodes(graph: CodeGraph, frag: Fragment) -> NodeSpanAssignment:
    """Attribute every byte of a code fragment to exactly one graph node.

    Syntax nodes fully contained in the fragment absorb their whole span
    (recursion stops there); bytes outside any contained node go to the
    smallest enclosing node, clipped to the fragment. Fragments of files that
    never parsed map entirely to the file node.
    """
    src = frag.source
    if src.kind != "code" or not src.path or src.line_range is None:
        raise FragmentUnmapped(f"fragment {frag.id} is not a mappable code fragment")
    path = PurePosixPath(src.path).as_posix()
    if graph.file_node_id(path) is None:
        raise FragmentUnmapped(f"fragment {frag.id}: no graph entry for {path}")
    frag_start, frag_end = graph.fragment_byte_range(path, src.line_range)
    if frag_end <= frag_start:
        raise FragmentUnmapped(f"fragment {frag.id} covers no bytes of {path}")

    root = graph.syntax_root_id(path)
    if root is None:
        file_id = graph.file_node_id(path)
        return NodeSpanAssignment(frag.id, ((file_id, frag_end - frag_start),))

    attributed: dict[int, int] = {}

    def visit(node_id: int, lo: int, hi: int) -> None:
        span = graph.nodes[node_id].byte_span
        begin, end = max(span[0], lo), min(span[1], hi)
        if begin >= end:
            return
        if span[0] >= lo and span[1] <= hi:
            attributed[node_id] = attributed.get(node_id, 0) + (span[1] - span[0])
            return
        covered = 0
        for child_id in graph.children_of(node_id):
            child_span = graph.nodes[child_id].byte_span
            c0, c1 = max(child_span[0], begin), min(child_span[1], end)
            if c0 < c1:
                visit(child_id, begin, end)
                covered += c1 - c0
        leftover = (end - begin) - covered
        if leftover > 0:
            attributed[node_id] = attributed.get(node_id, 0) + leftover

    visit(root, frag_start, frag_end)
    if not attributed:
        raise FragmentUnmapped(f"fragment {frag.id} matched no syntax nodes in {path}")
    return NodeSpanAssignment(frag.id, tuple(sorted(attributed.items())))
