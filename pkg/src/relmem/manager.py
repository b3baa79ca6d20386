"""Retrieval orchestration: one-shot queries, iterative rounds, chat memory.

``retrieve`` runs the full scoring pipeline over a built index and assembles
the selected fragments into a context block. ``iterative_retrieve`` alternates
retrieval and generation, feeding each completion back into the next query.
``chat_step`` maintains a live conversation window, spilling old turns into
external memory once token or turn thresholds are exceeded and retrieving from
them afterwards.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Callable, Sequence

import requests

from .errors import ConfigError, GeneratorError
from .fragments import CODE, ChatTurn, Fragment, estimate_tokens, render_turn, source_lines
from .index import MemoryIndex, build_chat_index
from .relations import (
    CODE_STRUCTURE,
    CONTEXT_STRUCTURE,
    SEMANTIC,
    RelationMatrix,
    RelationSpec,
    build_relation_matrix,
)
from .scoring import BM25_SCORER, EMBEDDING_SCORER, ScoreSet, TopKSelection, independent_scores, top_k

logger = logging.getLogger(__name__)

RANK_ORDER = "rank"
POSITION_ORDER = "position"

DEFAULT_SEPARATOR = "\n\n"
DEFAULT_TEMPLATE = "Context:\n{context}\n\nInstruction:\n{instruction}"


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 8
    alpha: float = 0.5
    relation: RelationSpec | None = None        # None: use the index's own matrix
    scorer: str | None = None                   # None: use the index's scorer
    ordering: str = RANK_ORDER
    context_token_budget: int | None = None
    separator: str = DEFAULT_SEPARATOR

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.ordering not in (RANK_ORDER, POSITION_ORDER):
            raise ConfigError(f"unknown ordering: {self.ordering!r}")


def story_preset(**overrides) -> RetrievalConfig:
    defaults = dict(k=8, alpha=0.5, relation=RelationSpec(CONTEXT_STRUCTURE, w_rel=0.3))
    defaults.update(overrides)
    return RetrievalConfig(**defaults)


def code_preset(**overrides) -> RetrievalConfig:
    defaults = dict(k=10, alpha=0.5, relation=RelationSpec(CODE_STRUCTURE), scorer=BM25_SCORER)
    defaults.update(overrides)
    return RetrievalConfig(**defaults)


def chat_preset(**overrides) -> RetrievalConfig:
    defaults = dict(
        k=8, alpha=0.5, relation=RelationSpec(CONTEXT_STRUCTURE, w_rel=0.8), ordering=POSITION_ORDER
    )
    defaults.update(overrides)
    return RetrievalConfig(**defaults)


@dataclass(frozen=True)
class RetrievedContext:
    """Selected fragments plus the assembled context text handed to a generator."""

    query: str
    fragments: tuple[Fragment, ...]
    text: str
    token_estimate: int
    scores: ScoreSet
    selection: TopKSelection


def _fragment_block(frag: Fragment) -> str:
    if frag.source.kind == CODE and frag.source.path and frag.source.line_range:
        lo, hi = frag.source.line_range
        return f"# {frag.source.path}:{lo + 1}-{hi}\n{frag.text}"
    return frag.text


def assemble_context(fragments: Sequence[Fragment], separator: str = DEFAULT_SEPARATOR) -> str:
    """Concatenate fragment blocks with one separator; code blocks get a source header."""
    return separator.join(_fragment_block(f) for f in fragments)


def matrix_for(index: MemoryIndex, relation: RelationSpec | None) -> RelationMatrix:
    """The index's matrix, or a rebuilt one when the requested spec differs."""
    if relation is None or relation == index.relation_spec:
        return index.matrix
    if relation.kind == CODE_STRUCTURE and (index.graph is None or index.assignments is None):
        raise ConfigError("index has no code graph; cannot derive a code-structure matrix")
    if relation.kind == SEMANTIC and index.embeddings is None:
        raise ConfigError("index has no embeddings; cannot derive a semantic matrix")
    return build_relation_matrix(
        index.fragments,
        relation,
        embeddings=index.embeddings,
        graph=index.graph,
        assignments=index.assignments,
    )


def retrieve(query: str, index: MemoryIndex, cfg: RetrievalConfig) -> RetrievedContext:
    """Score, select, order, and assemble the top fragments for a query."""
    matrix = matrix_for(index, cfg.relation)
    s_ind = independent_scores(query, index, cfg.scorer)
    scores = ScoreSet.compute(s_ind, matrix, cfg.alpha)
    selection = top_k(scores.s_rel, cfg.k)
    chosen = [index.fragments[i] for i in selection.indices]
    if cfg.ordering == POSITION_ORDER:
        chosen.sort(key=lambda f: f.loc)
    if cfg.context_token_budget is not None:
        while chosen and estimate_tokens(assemble_context(chosen, cfg.separator)) > cfg.context_token_budget:
            chosen.pop()
    text = assemble_context(chosen, cfg.separator)
    return RetrievedContext(
        query=query,
        fragments=tuple(chosen),
        text=text,
        token_estimate=estimate_tokens(text),
        scores=scores,
        selection=selection,
    )


# ----------------------------------------------------------------------
# Generation
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorSpec:
    """A completion backend: a local callback or a remote HTTP endpoint.

    The prompt template must contain the ``{instruction}`` and ``{context}``
    placeholders exactly once each.
    """

    callback: Callable[[str], str] | None = None
    endpoint_url: str | None = None
    model_name: str | None = None
    temperature: float = 1.0
    max_tokens: int | None = None
    timeout: float = 30.0
    auth_token_env: str | None = None
    template: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        if self.callback is None and not self.endpoint_url:
            raise ConfigError("generator needs a callback or an endpoint_url")
        for placeholder in ("{instruction}", "{context}"):
            if self.template.count(placeholder) != 1:
                raise ConfigError(f"template must contain {placeholder} exactly once")

    def build_prompt(self, instruction: str, context: str) -> str:
        return self.template.replace("{context}", context).replace("{instruction}", instruction)

    def complete(self, instruction: str, context: str) -> str:
        prompt = self.build_prompt(instruction, context)
        if self.callback is not None:
            try:
                return self.callback(prompt)
            except Exception as exc:
                raise GeneratorError(f"generator callback failed: {exc}") from exc
        return self._remote_complete(prompt)

    def _remote_complete(self, prompt: str) -> str:
        headers = {}
        if self.auth_token_env:
            token = os.environ.get(self.auth_token_env)
            if not token:
                raise GeneratorError(f"auth environment variable {self.auth_token_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        body = {"model": self.model_name, "prompt": prompt, "temperature": self.temperature}
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        try:
            resp = requests.post(self.endpoint_url, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()["choices"][0]["text"]
        except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
            raise GeneratorError(f"completion endpoint failed: {exc}") from exc


def stub_generator(reply_prefix: str = "[stub]") -> GeneratorSpec:
    """Deterministic offline generator: echoes the first instruction line."""

    def _complete(prompt: str) -> str:
        lines = prompt.splitlines()
        instruction = lines[-1] if lines else ""
        return f"{reply_prefix} {instruction[:60]}".rstrip()

    return GeneratorSpec(callback=_complete)


def completion_query(text: str, window_lines: int) -> str:
    """The last ``window_lines`` lines of a completion context."""
    lines = source_lines(text)
    return "\n".join(lines[-window_lines:])


def _seed_tail(seed_query: str, index: MemoryIndex) -> str:
    if index.kind == CODE and hasattr(index.split, "window_lines"):
        return completion_query(seed_query, index.split.window_lines)
    return seed_query


def iterative_retrieve(
    seed_query: str,
    index: MemoryIndex,
    cfg: RetrievalConfig,
    generator: GeneratorSpec,
    rounds: int = 2,
) -> list[tuple[RetrievedContext, str]]:
    """Alternate retrieval and generation for ``rounds`` rounds.

    Round 1 queries with the seed; later rounds append the previous completion
    to the seed's tail window. All (context, completion) pairs are returned so
    the caller can pick the best round. On generator failure the completed
    rounds ride along on the raised error.
    """
    if rounds < 1:
        raise ConfigError("rounds must be >= 1")
    tail = _seed_tail(seed_query, index)
    results: list[tuple[RetrievedContext, str]] = []
    query = seed_query
    for round_index in range(1, rounds + 1):
        context = retrieve(query, index, cfg)
        try:
            completion = generator.complete(seed_query, context.text)
        except GeneratorError as exc:
            raise GeneratorError(str(exc), partial=results, round_index=round_index) from exc
        results.append((context, completion))
        query = tail + "\n" + completion
    return results


# ----------------------------------------------------------------------
# Chat memory
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ChatMemoryState:
    """Live conversation window plus the turns spilled to external memory."""

    live: tuple[ChatTurn, ...] = ()
    spilled: tuple[ChatTurn, ...] = ()
    token_limit: int = 1000
    turn_limit: int = 10
    index: MemoryIndex | None = None

    def transcript(self) -> tuple[ChatTurn, ...]:
        return self.spilled + self.live


def _live_tokens(turns: Sequence[ChatTurn]) -> int:
    return sum(estimate_tokens(render_turn(t)) for t in turns)


def default_chat_index_builder(turns: Sequence[ChatTurn]) -> MemoryIndex:
    return build_chat_index(turns)


def chat_step(
    state: ChatMemoryState,
    user_msg: str,
    index_builder: Callable[[Sequence[ChatTurn]], MemoryIndex] | None,
    cfg: RetrievalConfig,
    generator: GeneratorSpec,
    timestamp: str | None = None,
) -> tuple[str, ChatMemoryState]:
    """Run one conversation turn; returns the reply and the successor state.

    Before retrieval, whole turns are spilled oldest-first while the live
    window is at its turn limit or over its token limit, and the external
    memory index is rebuilt over everything spilled so far. Retrieval queries
    the memory with the most recent exchange plus the new user message. The
    input state is never mutated; a generator failure leaves it untouched.
    """
    index_builder = index_builder or default_chat_index_builder
    live = list(state.live)
    spilled = list(state.spilled)
    index = state.index

    moved = 0
    while live and (len(live) >= state.turn_limit or _live_tokens(live) > state.token_limit):
        spilled.append(live.pop(0))
        moved += 1
    if moved:
        logger.info("spilled %d turn(s) to external memory (%d total)", moved, len(spilled))
    if spilled and (moved or index is None):
        index = index_builder(spilled)

    retrieved = None
    if spilled:
        recent = live[-1] if live else spilled[-1]
        query = render_turn(recent) + "\nUser: " + user_msg
        retrieved = retrieve(query, index, cfg)

    parts = []
    if retrieved is not None and retrieved.text:
        parts.append(retrieved.text)
    parts.extend(render_turn(t) for t in live)
    context = cfg.separator.join(parts)

    reply = generator.complete(user_msg, context)

    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat()
    live.append(ChatTurn(user=user_msg, assistant=reply, timestamp=timestamp))
    new_state = replace(state, live=tuple(live), spilled=tuple(spilled), index=index)
    return reply, new_state
