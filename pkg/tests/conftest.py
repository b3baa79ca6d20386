"""Shared fixtures: the bundled fixture repository, a local HTTP stub, corpora builders."""

from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path
from types import SimpleNamespace

import pytest

from relmem import EmbeddingProviderSpec

FIXTURE_DIR = Path(__file__).parent / "fixtures"
REPO_DIR = FIXTURE_DIR / "repo"


def repo_files() -> list[tuple[str, str]]:
    """The bundled 3-file repository as (relative path, text) pairs."""
    paths = sorted(p for p in REPO_DIR.rglob("*.py"))
    return [(p.relative_to(REPO_DIR).as_posix(), p.read_text()) for p in paths]


@pytest.fixture
def fixture_repo():
    return repo_files()


@pytest.fixture
def local_provider():
    return EmbeddingProviderSpec(dim=64, hash_seed=0)


# ----------------------------------------------------------------------
# Local HTTP stub for remote provider / generator tests
# ----------------------------------------------------------------------


class _JsonHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        state = self.server.state
        state["requests"].append({
            "path": self.path,
            "body": body,
            "headers": {k.lower(): v for k, v in self.headers.items()},
        })
        if state["responses"]:
            status, payload = state["responses"].pop(0)
        else:
            status, payload = state["default"]
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_stub():
    server = HTTPServer(("127.0.0.1", 0), _JsonHandler)
    server.state = {"requests": [], "responses": [], "default": (200, {})}
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield SimpleNamespace(
        url=f"http://127.0.0.1:{server.server_port}",
        state=server.state,
    )
    server.shutdown()


# ----------------------------------------------------------------------
# Synthetic corpus where relation-aware retrieval provably helps
# ----------------------------------------------------------------------

WORDS_PER_FRAGMENT = 24
ANSWER_MARKER = "needlefact"


def neighbor_benefit_corpus(rng: random.Random, n_fragments: int | None = None):
    """A corpus whose answer fragment shares no vocabulary with the query.

    The answer sits between two fragments that match the query exactly, while
    a dozen decoys share just enough query vocabulary to crowd the answer out
    of any ranking that looks at direct similarity alone.

    Returns (fragment_texts, query, answer_position).
    """
    n = n_fragments or rng.randint(30, 60)
    fresh = iter(f"w{next_id:05d}" for next_id in range(100000))

    def background() -> list[str]:
        return [next(fresh) for _ in range(WORDS_PER_FRAGMENT)]

    query_words = [next(fresh) for _ in range(WORDS_PER_FRAGMENT)]
    texts = [background() for _ in range(n)]

    answer_pos = rng.randint(3, n - 4)
    answer_words = [ANSWER_MARKER] + [next(fresh) for _ in range(WORDS_PER_FRAGMENT - 1)]
    rng.shuffle(answer_words)
    texts[answer_pos] = answer_words
    for side in (answer_pos - 1, answer_pos + 1):
        hot = list(query_words)
        rng.shuffle(hot)
        texts[side] = hot

    decoy_slots = [
        i for i in range(n)
        if abs(i - answer_pos) > 3 and i not in (answer_pos - 1, answer_pos + 1)
    ]
    rng.shuffle(decoy_slots)
    for slot in decoy_slots[:12]:
        decoy = rng.sample(query_words, 4) + [next(fresh) for _ in range(WORDS_PER_FRAGMENT - 4)]
        rng.shuffle(decoy)
        texts[slot] = decoy

    return [" ".join(t) for t in texts], " ".join(query_words), answer_pos
