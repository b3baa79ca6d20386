"""Command-line surface: build indexes, query them, sweep parameters, replay chats.

Exit codes: 0 success, 2 unusable input, 3 provider/generator failure,
4 configuration problem. Every failure prints one machine-parseable line to
stderr: ``relmem: error [<category>]: <message>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path, PurePosixPath

from .embeddings import LOCAL, REMOTE, EmbeddingProviderSpec
from .errors import (
    ConfigError,
    EmptyContext,
    GeneratorError,
    ProviderError,
    RelmemError,
)
from .fragments import CHAT, CODE, STORY, ChatTurn, CodeSplit, StorySplit
from .index import (
    MemoryIndex,
    build_chat_index,
    build_code_index,
    build_story_index,
    load_index,
    save_index,
)
from .manager import (
    GeneratorSpec,
    RetrievalConfig,
    ChatMemoryState,
    chat_preset,
    chat_step,
    retrieve,
    stub_generator,
)
from .relations import (
    CODE_STRUCTURE,
    CONTEXT_STRUCTURE,
    SEMANTIC,
    RelationSpec,
)
from . import report

logger = logging.getLogger(__name__)

RELATION_FLAG_TO_KIND = {"semantic": SEMANTIC, "context": CONTEXT_STRUCTURE, "code": CODE_STRUCTURE}

DEFAULT_SWEEP_ALPHAS = (0.2, 0.3, 0.4, 0.5)
DEFAULT_SWEEP_W_RELS = (0.1, 0.3, 0.5, 0.7)


# ----------------------------------------------------------------------
# Shared option plumbing
# ----------------------------------------------------------------------


def _add_provider_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider-endpoint", help="remote embedding endpoint URL (default: local embedder)")
    p.add_argument("--provider-model", help="model name sent to the remote embedding endpoint")
    p.add_argument("--provider-token-env", help="environment variable holding the bearer token")
    p.add_argument("--provider-timeout", type=float, help="remote request timeout in seconds (default 30)")
    p.add_argument("--provider-retries", type=int, help="remote retry count (default 3)")
    p.add_argument("--provider-dim", type=int, help="local embedder dimensionality (default 256)")
    p.add_argument("--provider-seed", type=int, help="local embedder hash seed (default 0)")


def _add_relation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--relation", choices=sorted(RELATION_FLAG_TO_KIND), help="relation kind")
    p.add_argument("--semantic-mode", choices=["cosine", "one-minus-cosine"])
    p.add_argument("--w-rel", type=float, help="context-structure decay base in [0, 1]")


def _add_query_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="number of fragments to retrieve")
    p.add_argument("--alpha", type=float, help="environment-score coefficient (default 0.5)")
    p.add_argument("--scorer", choices=["embedding-cosine", "bm25"])
    p.add_argument("--ordering", choices=["rank", "position"])
    p.add_argument("--budget", type=int, help="context token budget for the assembled text")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _merged(args: argparse.Namespace, config: dict, key: str, default=None):
    """Flag value if given, else config-file value, else default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    return config.get(key, default)


def _provider_from(args, config) -> EmbeddingProviderSpec:
    endpoint = _merged(args, config, "provider_endpoint")
    if endpoint:
        return EmbeddingProviderSpec(
            kind=REMOTE,
            endpoint_url=endpoint,
            model_name=_merged(args, config, "provider_model"),
            auth_token_env=_merged(args, config, "provider_token_env"),
            timeout=_merged(args, config, "provider_timeout", 30.0),
            retries=_merged(args, config, "provider_retries", 3),
        )
    return EmbeddingProviderSpec(
        kind=LOCAL,
        dim=_merged(args, config, "provider_dim", 256),
        hash_seed=_merged(args, config, "provider_seed", 0),
    )


def _relation_from(args, config, default_kind: str, default_w_rel: float) -> tuple[RelationSpec | None, list[str]]:
    """Resolve relation flags into a spec; returns (spec, conflicts)."""
    kind_flag = _merged(args, config, "relation")
    w_rel = _merged(args, config, "w_rel")
    mode = _merged(args, config, "semantic_mode")
    if kind_flag is None and w_rel is None and mode is None:
        return None, []

    kind = RELATION_FLAG_TO_KIND[kind_flag] if kind_flag else default_kind
    conflicts = []
    if w_rel is not None and kind != CONTEXT_STRUCTURE:
        conflicts.append(f"--w-rel does not apply to the {kind} relation")
    if mode is not None and kind != SEMANTIC:
        conflicts.append(f"--semantic-mode does not apply to the {kind} relation")
    if conflicts:
        return None, conflicts

    spec = RelationSpec(
        kind=kind,
        w_rel=w_rel if w_rel is not None else (default_w_rel if kind == CONTEXT_STRUCTURE else 0.0),
        semantic_mode=mode or "cosine",
    )
    return spec, []


def _read_query(args) -> str:
    if getattr(args, "query", None):
        return args.query
    query_file = getattr(args, "query_file", None)
    if query_file:
        return Path(query_file).read_text(encoding="utf-8").strip()
    raise ConfigError("a query is required (positional argument or --query-file)")


# ----------------------------------------------------------------------
# index
# ----------------------------------------------------------------------


def _collect_code_files(source: Path) -> list[tuple[str, str]]:
    if source.is_dir():
        paths = sorted(p for p in source.rglob("*.py") if p.is_file())
        return [(p.relative_to(source).as_posix(), p.read_text(encoding="utf-8")) for p in paths]
    return [(PurePosixPath(source.name).as_posix(), source.read_text(encoding="utf-8"))]


def _load_transcript(path: str) -> list[dict]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError(f"transcript {path} must be a JSON array of turns")
    return data


def _transcript_turns(entries: list[dict]) -> list[ChatTurn]:
    return [
        ChatTurn(
            user=e.get("user", ""),
            assistant=e.get("assistant", ""),
            timestamp=e.get("timestamp"),
        )
        for e in entries
    ]


def cmd_index(args) -> int:
    config = _load_config_file(args.config)
    kind = args.kind
    conflicts = []
    if kind != STORY and _merged(args, config, "fragment_words") is not None:
        conflicts.append("--fragment-words only applies to --kind story")
    if kind != CODE:
        for flag in ("window_lines", "stride_overlap"):
            if _merged(args, config, flag) is not None:
                conflicts.append(f"--{flag.replace('_', '-')} only applies to --kind code")
    default_kind = {STORY: CONTEXT_STRUCTURE, CODE: CODE_STRUCTURE, CHAT: CONTEXT_STRUCTURE}[kind]
    default_w = 0.8 if kind == CHAT else 0.3
    relation, rel_conflicts = _relation_from(args, config, default_kind, default_w)
    conflicts.extend(rel_conflicts)
    if relation is not None and relation.kind == CODE_STRUCTURE and kind != CODE:
        conflicts.append(f"code-structure relation needs a code index, not {kind}")
    if conflicts:
        raise ConfigError("; ".join(conflicts))

    source = Path(args.source)
    provider = _provider_from(args, config)
    scorer = _merged(args, config, "scorer")

    if kind == STORY:
        split = StorySplit(words_per_fragment=_merged(args, config, "fragment_words", 500))
        index = build_story_index(source.read_text(encoding="utf-8"), split=split,
                                  provider=provider, relation=relation)
    elif kind == CODE:
        split = CodeSplit(
            window_lines=_merged(args, config, "window_lines", 20),
            overlap_lines=_merged(args, config, "stride_overlap", 10),
        )
        index = build_code_index(
            _collect_code_files(source),
            split=split,
            relation=relation,
            scorer=scorer or "bm25",
            provider=provider,
        )
    else:
        turns = _transcript_turns(_load_transcript(args.source))
        if not turns:
            raise EmptyContext(f"transcript {args.source} holds no turns")
        index = build_chat_index(turns, provider=provider, relation=relation)

    save_index(index, args.out)
    print(f"fragments: {index.n}")
    print(f"matrix: {index.matrix.nnz} entries (density {index.matrix.density():.3f})")
    print(f"diagnostics: {len(index.diagnostics)}")
    print(f"index written: {args.out}")
    return 0


# ----------------------------------------------------------------------
# query
# ----------------------------------------------------------------------


def _retrieval_config(args, config, index: MemoryIndex) -> RetrievalConfig:
    default_kind = index.relation_spec.kind
    default_w = index.relation_spec.w_rel
    relation, conflicts = _relation_from(args, config, default_kind, default_w)
    if conflicts:
        raise ConfigError("; ".join(conflicts))
    ordering = _merged(args, config, "ordering")
    if ordering is None:
        ordering = "position" if index.kind == CHAT else "rank"
    return RetrievalConfig(
        k=_merged(args, config, "k", 8),
        alpha=_merged(args, config, "alpha", 0.5),
        relation=relation,
        scorer=_merged(args, config, "scorer"),
        ordering=ordering,
        context_token_budget=_merged(args, config, "budget"),
    )


def _score_report(result, index: MemoryIndex, cfg: RetrievalConfig) -> dict:
    selected = set(result.selection.indices[:len(result.fragments)])
    rows = [
        {
            "id": f.id,
            "loc": f.loc,
            "s_ind": float(result.scores.s_ind[f.id]),
            "s_env": float(result.scores.s_env[f.id]),
            "s_rel": float(result.scores.s_rel[f.id]),
            "selected": f.id in selected,
        }
        for f in index.fragments
    ]
    return {
        "query": result.query,
        "alpha": cfg.alpha,
        "k": cfg.k,
        "scorer": cfg.scorer or index.scorer,
        "relation": (cfg.relation or index.relation_spec).kind,
        "rows": rows,
    }


def cmd_query(args) -> int:
    config = _load_config_file(args.config)
    index = load_index(args.index)
    cfg = _retrieval_config(args, config, index)
    query = _read_query(args)
    result = retrieve(query, index, cfg)
    if args.explain:
        payload = _score_report(result, index, cfg)
        explain_path = Path(args.explain)
        explain_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        figure_path = report.render_score_report(payload["rows"], explain_path.with_suffix(".png"))
        logger.info("score report: %s, figure: %s", explain_path, figure_path)
    print(result.text)
    return 0


# ----------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------


def _parse_grid(text: str | None, default: tuple[float, ...]) -> list[float]:
    if text is None:
        return list(default)
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad grid value: {exc}") from exc


def cmd_sweep(args) -> int:
    config = _load_config_file(args.config)
    index = load_index(args.index)
    if index.relation_spec.kind != CONTEXT_STRUCTURE:
        raise ConfigError(
            f"sweep varies w_rel, which does not apply to a {index.relation_spec.kind} index"
        )
    query = _read_query(args)
    alphas = _parse_grid(args.alphas, DEFAULT_SWEEP_ALPHAS)
    w_rels = _parse_grid(args.w_rels, DEFAULT_SWEEP_W_RELS)
    k = _merged(args, config, "k", 8)

    vanilla = retrieve(query, index, RetrievalConfig(k=k, alpha=0.0))
    vanilla_ids = set(vanilla.selection.indices)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["alpha\tw_rel\tselected\toverlap\toverlap_fraction"]
    grid = [[0.0] * len(alphas) for _ in w_rels]
    for yi, w_rel in enumerate(w_rels):
        spec = RelationSpec(kind=CONTEXT_STRUCTURE, w_rel=w_rel)
        for xi, alpha in enumerate(alphas):
            cell = retrieve(query, index, RetrievalConfig(k=k, alpha=alpha, relation=spec))
            ids = list(cell.selection.indices)
            overlap = len(vanilla_ids.intersection(ids))
            fraction = overlap / len(vanilla_ids) if vanilla_ids else 0.0
            grid[yi][xi] = fraction
            lines.append(
                f"{alpha:g}\t{w_rel:g}\t{','.join(str(i) for i in ids)}\t{overlap}\t{fraction:.4f}"
            )

    table = "\n".join(lines) + "\n"
    table_path = out_dir / "sweep.tsv"
    table_path.write_text(table, encoding="utf-8")
    figure_path = report.render_sweep_heatmap(alphas, w_rels, grid, out_dir / "sweep.png")
    print(table, end="")
    logger.info("sweep table: %s, figure: %s", table_path, figure_path)
    return 0


# ----------------------------------------------------------------------
# chat
# ----------------------------------------------------------------------


def _turn_generator(entry: dict, remote: GeneratorSpec | None) -> GeneratorSpec:
    if entry.get("assistant"):
        reply = entry["assistant"]
        return GeneratorSpec(callback=lambda _prompt, _reply=reply: _reply)
    if remote is not None:
        return remote
    return stub_generator()


def cmd_chat(args) -> int:
    config = _load_config_file(args.config)
    entries = _load_transcript(args.transcript)
    if not entries:
        raise EmptyContext(f"transcript {args.transcript} holds no turns")

    remote = None
    endpoint = _merged(args, config, "generator_endpoint")
    if endpoint:
        template = None
        template_file = _merged(args, config, "template_file")
        if template_file:
            template = Path(template_file).read_text(encoding="utf-8")
        remote = GeneratorSpec(
            endpoint_url=endpoint,
            model_name=_merged(args, config, "generator_model"),
            auth_token_env=_merged(args, config, "generator_token_env"),
            **({"template": template} if template else {}),
        )

    provider = _provider_from(args, config)
    cfg = chat_preset(
        k=_merged(args, config, "k", 8),
        alpha=_merged(args, config, "alpha", 0.5),
        relation=RelationSpec(kind=CONTEXT_STRUCTURE, w_rel=_merged(args, config, "w_rel", 0.8)),
    )
    state = ChatMemoryState(
        token_limit=_merged(args, config, "token_limit", 1000),
        turn_limit=_merged(args, config, "turn_limit", 10),
    )

    def build(turns):
        return build_chat_index(turns, provider=provider, relation=cfg.relation)

    for number, entry in enumerate(entries, start=1):
        before = len(state.spilled)
        reply, state = chat_step(
            state,
            entry.get("user", ""),
            build,
            cfg,
            _turn_generator(entry, remote),
            timestamp=entry.get("timestamp"),
        )
        print(
            f"turn {number}: spilled={len(state.spilled) - before} "
            f"live={len(state.live)} memory={len(state.spilled)}"
        )
        print(f"  reply: {reply}")
    return 0


# ----------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relmem",
        description="Relation-aware external-memory retrieval over long contexts.",
    )
    parser.add_argument("--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="split a source and build a query index")
    p_index.add_argument("source", help="story text file, code file/directory, or chat transcript JSON")
    p_index.add_argument("--kind", choices=[STORY, CODE, CHAT], required=True)
    p_index.add_argument("--out", default="index.json", help="index output path")
    p_index.add_argument("--fragment-words", type=int, help="words per story fragment (default 500)")
    p_index.add_argument("--window-lines", type=int, help="lines per code window (default 20)")
    p_index.add_argument("--stride-overlap", type=int, help="overlapping lines between windows (default 10)")
    p_index.add_argument("--scorer", choices=["embedding-cosine", "bm25"])
    _add_relation_flags(p_index)
    _add_provider_flags(p_index)
    p_index.add_argument("--config", help="JSON config file; flags override its values")
    p_index.set_defaults(func=cmd_index)

    p_query = sub.add_parser("query", help="retrieve context for a query from an index")
    p_query.add_argument("index", help="index file built by the index command")
    p_query.add_argument("query", nargs="?", help="query text")
    p_query.add_argument("--query-file", help="read the query from a file")
    p_query.add_argument("--explain", help="write a JSON score report (and a PNG figure) here")
    _add_query_flags(p_query)
    _add_relation_flags(p_query)
    p_query.add_argument("--config", help="JSON config file; flags override its values")
    p_query.set_defaults(func=cmd_query)

    p_sweep = sub.add_parser("sweep", help="grid-sweep alpha and w_rel, report selection overlap")
    p_sweep.add_argument("index")
    p_sweep.add_argument("query", nargs="?", help="query text")
    p_sweep.add_argument("--query-file", help="read the query from a file")
    p_sweep.add_argument("--alphas", help="comma-separated alpha grid (default 0.2,0.3,0.4,0.5)")
    p_sweep.add_argument("--w-rels", help="comma-separated w_rel grid (default 0.1,0.3,0.5,0.7)")
    p_sweep.add_argument("--k", type=int, help="fragments per selection (default 8)")
    p_sweep.add_argument("--out-dir", default=".", help="directory for sweep.tsv and sweep.png")
    p_sweep.add_argument("--config", help="JSON config file; flags override its values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_chat = sub.add_parser("chat", help="replay a chat transcript through the memory-spill pipeline")
    p_chat.add_argument("--transcript", required=True, help="JSON array of {user, assistant, timestamp} turns")
    p_chat.add_argument("--turn-limit", type=int, help="live-window turn limit (default 10)")
    p_chat.add_argument("--token-limit", type=int, help="live-window token limit (default 1000)")
    p_chat.add_argument("--k", type=int, help="fragments retrieved per turn (default 8)")
    p_chat.add_argument("--alpha", type=float)
    p_chat.add_argument("--w-rel", type=float, help="context decay for chat memory (default 0.8)")
    p_chat.add_argument("--generator-endpoint", help="remote completion endpoint (default: scripted/stub)")
    p_chat.add_argument("--generator-model")
    p_chat.add_argument("--generator-token-env", help="environment variable holding the generator token")
    p_chat.add_argument("--template-file", help="prompt template with {instruction} and {context}")
    _add_provider_flags(p_chat)
    p_chat.add_argument("--config", help="JSON config file; flags override its values")
    p_chat.set_defaults(func=cmd_chat)

    return parser


def _fail(category: str, code: int, exc: Exception) -> int:
    print(f"relmem: error [{category}]: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except EmptyContext as exc:
        return _fail("input", 2, exc)
    except (GeneratorError, ProviderError) as exc:
        return _fail("provider", 3, exc)
    except RelmemError as exc:
        return _fail("config", 4, exc)
    except OSError as exc:
        return _fail("input", 2, exc)
    except ValueError as exc:
        return _fail("input", 2, exc)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
