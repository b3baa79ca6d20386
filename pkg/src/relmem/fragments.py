"""Fragment layer: split long sources into the retrievable units of external memory.

Three source kinds are supported. Narrative text is split into fixed word-count
fragments, source code into fixed-size line windows with a configurable overlap,
and chat history into one fragment per completed turn. Every fragment carries an
ordinal position ``loc`` so position-based relations can be derived later.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigError, EmptyContext

logger = logging.getLogger(__name__)

STORY = "story"
CODE = "code"
CHAT = "chat"


def estimate_tokens(text: str, chars_per_token: float | None = None) -> int:
    """Cheap token-count proxy.

    Counts whitespace-separated tokens by default; pass ``chars_per_token`` to
    use a character-ratio estimate instead.
    """
    if chars_per_token:
        return math.ceil(len(text) / chars_per_token)
    return len(text.split())


def source_lines(text: str) -> list[str]:
    """Split ``text`` on newlines, without a trailing empty artifact.

    A file that ends with a newline has as many lines as it has line breaks;
    an empty string has zero lines.
    """
    if text == "":
        return []
    lines = text.split("\n")
    if lines and lines[-1] == "" and text.endswith("\n"):
        lines.pop()
    return lines


@dataclass(frozen=True)
class SourceRef:
    """Where a fragment came from.

    Code fragments carry ``path`` and a half-open ``line_range``; chat fragments
    carry ``turn_index`` (and usually a timestamp); story fragments carry neither.
    """

    kind: str
    path: str | None = None
    line_range: tuple[int, int] | None = None
    turn_index: int | None = None
    timestamp: str | None = None


@dataclass(frozen=True)
class Fragment:
    """One chunk of a long context, the atom of external memory.

    ``id`` is the 0-based insertion ordinal within a store and ``loc`` the
    ordinal position in the source; for a fresh split the two coincide.
    """

    id: int
    text: str
    loc: int
    source: SourceRef
    token_estimate: int = 0


@dataclass(frozen=True)
class ChatTurn:
    user: str
    assistant: str
    timestamp: str | None = None


@dataclass(frozen=True)
class StorySplit:
    words_per_fragment: int = 500

    def __post_init__(self):
        if self.words_per_fragment <= 0:
            raise ConfigError("words_per_fragment must be positive")


@dataclass(frozen=True)
class CodeSplit:
    """Sliding line windows: each window has ``window_lines`` lines and shares
    ``overlap_lines`` of them with its predecessor."""

    window_lines: int = 20
    overlap_lines: int = 10

    def __post_init__(self):
        if self.window_lines <= 0:
            raise ConfigError("window_lines must be positive")
        if not 0 <= self.overlap_lines < self.window_lines:
            raise ConfigError("overlap_lines must satisfy 0 <= overlap < window_lines")


@dataclass(frozen=True)
class ChatSplit:
    """One fragment per turn; no parameters."""


SplitConfig = StorySplit | CodeSplit | ChatSplit


def split_story(text: str, cfg: StorySplit) -> list[Fragment]:
    """Split narrative text into consecutive fragments of ``words_per_fragment`` words.

    Words are maximal runs of non-whitespace. The concatenation of the returned
    fragments' word sequences reproduces the source word sequence; only the last
    fragment may be short. Raises EmptyContext when the text holds no words.
    """
    words = text.split()
    if not words:
        raise EmptyContext("story text contains no words")
    step = cfg.words_per_fragment
    out = []
    for loc, start in enumerate(range(0, len(words), step)):
        chunk = " ".join(words[start:start + step])
        out.append(Fragment(
            id=loc,
            text=chunk,
            loc=loc,
            source=SourceRef(kind=STORY),
            token_estimate=estimate_tokens(chunk),
        ))
    return out


def _code_windows(n_lines: int, window: int, stride: int) -> list[tuple[int, int]]:
    # Windows start at multiples of the stride; the final window absorbs the
    # remainder and is the only one allowed to be short.
    spans = []
    start = 0
    while start + window < n_lines:
        spans.append((start, start + window))
        start += stride
    spans.append((start, n_lines))
    return spans


def split_code(
    files: Sequence[tuple[str, str]],
    cfg: CodeSplit,
    diagnostics: list[dict] | None = None,
) -> list[Fragment]:
    """Split source files into overlapping line windows.

    Files are processed in lexicographic path order so fragment ordinals are
    reproducible. Files with no content are skipped with a warning record
    (appended to ``diagnostics`` when given), not an error.
    """
    stride = cfg.window_lines - cfg.overlap_lines
    frags: list[Fragment] = []
    for path, text in sorted(files, key=lambda item: item[0]):
        lines = source_lines(text)
        if not lines or not text.strip():
            logger.warning("skipping file with no content: %s", path)
            if diagnostics is not None:
                diagnostics.append({"kind": "empty-file", "path": path})
            continue
        for start, end in _code_windows(len(lines), cfg.window_lines, stride):
            body = "\n".join(lines[start:end])
            loc = len(frags)
            frags.append(Fragment(
                id=loc,
                text=body,
                loc=loc,
                source=SourceRef(kind=CODE, path=path, line_range=(start, end)),
                token_estimate=estimate_tokens(body),
            ))
    if not frags:
        raise EmptyContext("no code fragments produced (all files empty?)")
    return frags


def split_chat(turns: Sequence[ChatTurn | tuple]) -> list[Fragment]:
    """One fragment per chat turn, with role labels and the turn's timestamp.

    Timestamps are preserved verbatim and never reordered; ``loc`` follows the
    list order of the transcript.
    """
    if not turns:
        raise EmptyContext("chat transcript has no turns")
    frags = []
    for loc, turn in enumerate(turns):
        if not isinstance(turn, ChatTurn):
            turn = ChatTurn(*turn)
        body = render_turn(turn)
        frags.append(Fragment(
            id=loc,
            text=body,
            loc=loc,
            source=SourceRef(kind=CHAT, turn_index=loc, timestamp=turn.timestamp),
            token_estimate=estimate_tokens(body),
        ))
    return frags


def render_turn(turn: ChatTurn) -> str:
    return f"User: {turn.user}\nAssistant: {turn.assistant}"
