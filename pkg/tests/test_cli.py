"""End-to-end tests for the command-line interface."""

from __future__ import annotations

import json
import random
import shutil

import pytest

from relmem.cli import main

from conftest import REPO_DIR, WORDS_PER_FRAGMENT, neighbor_benefit_corpus


@pytest.fixture
def repo_copy(tmp_path):
    dest = tmp_path / "repo"
    shutil.copytree(REPO_DIR, dest)
    return dest


@pytest.fixture
def story_file(tmp_path):
    rng = random.Random(99)
    text = " ".join(f"tok{rng.randint(0, 150)}" for _ in range(1000))
    path = tmp_path / "story.txt"
    path.write_text(text)
    return path


def _run(capsys, *argv) -> tuple[int, str, str]:
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestIndexCommand:
    def test_code_index_summary(self, repo_copy, tmp_path, capsys):
        out_path = tmp_path / "code.json"
        code, out, _ = _run(capsys, "index", repo_copy, "--kind", "code",
                            "--window-lines", "2", "--stride-overlap", "1", "--out", out_path)
        assert code == 0
        assert "fragments: " in out and "matrix: " in out and "diagnostics: 1" in out
        assert out_path.exists()

    def test_forty_line_file_gives_three_fragments(self, tmp_path, capsys):
        src = tmp_path / "one.py"
        src.write_text("\n".join(f"x{i} = {i}" for i in range(40)) + "\n")
        out_path = tmp_path / "idx.json"
        code, out, _ = _run(capsys, "index", src, "--kind", "code", "--out", out_path)
        assert code == 0
        assert "fragments: 3" in out

    def test_empty_story_exits_2_without_index(self, tmp_path, capsys):
        src = tmp_path / "empty.txt"
        src.write_text("")
        out_path = tmp_path / "never.json"
        code, _, err = _run(capsys, "index", src, "--kind", "story", "--out", out_path)
        assert code == 2
        assert "relmem: error [input]:" in err
        assert not out_path.exists()

    def test_unreadable_source_exits_2(self, tmp_path, capsys):
        code, _, err = _run(capsys, "index", tmp_path / "missing.txt", "--kind", "story",
                            "--out", tmp_path / "o.json")
        assert code == 2
        assert "relmem: error [input]:" in err

    def test_reindex_is_byte_identical(self, story_file, tmp_path, capsys):
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        assert _run(capsys, "index", story_file, "--kind", "story", "--out", first)[0] == 0
        assert _run(capsys, "index", story_file, "--kind", "story", "--out", second)[0] == 0
        assert first.read_bytes() == second.read_bytes()

    def test_conflicting_flags_aggregated(self, story_file, tmp_path, capsys):
        code, _, err = _run(capsys, "index", story_file, "--kind", "story",
                            "--window-lines", "5", "--stride-overlap", "2",
                            "--out", tmp_path / "o.json")
        assert code == 4
        assert "relmem: error [config]:" in err
        assert "window-lines" in err and "stride-overlap" in err

    def test_provider_failure_exits_3(self, story_file, tmp_path, http_stub, capsys):
        http_stub.state["default"] = (500, {})
        code, _, err = _run(capsys, "index", story_file, "--kind", "story",
                            "--provider-endpoint", http_stub.url, "--provider-retries", "0",
                            "--out", tmp_path / "o.json")
        assert code == 3
        assert "relmem: error [provider]:" in err
        assert not (tmp_path / "o.json").exists()

    def test_chat_transcript_index(self, tmp_path, capsys):
        transcript = [
            {"user": f"q{i}", "assistant": f"a{i}", "timestamp": f"t{i}"} for i in range(5)
        ]
        src = tmp_path / "chat.json"
        src.write_text(json.dumps(transcript))
        code, out, _ = _run(capsys, "index", src, "--kind", "chat", "--out", tmp_path / "c.json")
        assert code == 0
        assert "fragments: 5" in out


class TestQueryCommand:
    @pytest.fixture
    def story_index(self, story_file, tmp_path, capsys):
        path = tmp_path / "story.json"
        assert _run(capsys, "index", story_file, "--kind", "story",
                    "--fragment-words", "100", "--out", path)[0] == 0
        return path

    def test_alpha_zero_equals_vanilla_ranking(self, story_index, capsys):
        code, out_zero, _ = _run(capsys, "query", story_index, "tok1 tok2", "--alpha", "0", "--k", "4")
        assert code == 0

        # Vanilla oracle: rank by direct scores only, reassemble by hand.
        from relmem import load_index
        from relmem.scoring import independent_scores

        index = load_index(story_index)
        s_ind = independent_scores("tok1 tok2", index)
        order = sorted(range(index.n), key=lambda i: (-s_ind[i], i))[:4]
        expected = "\n\n".join(index.fragments[i].text for i in order) + "\n"
        assert out_zero == expected

    def test_explain_report_is_self_consistent(self, story_index, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code, _, _ = _run(capsys, "query", story_index, "tok3 tok4",
                          "--explain", report_path, "--k", "3")
        assert code == 0
        report = json.loads(report_path.read_text())
        assert len(report["rows"]) > 0
        for row in report["rows"]:
            assert abs(row["s_rel"] - (row["s_ind"] + report["alpha"] * row["s_env"])) < 1e-12
        assert sum(row["selected"] for row in report["rows"]) == 3
        figure = report_path.with_suffix(".png")
        assert figure.exists() and figure.stat().st_size > 0

    def test_k_larger_than_store_returns_all_with_warning(self, story_index, capsys, caplog):
        with caplog.at_level("WARNING"):
            code, out, _ = _run(capsys, "query", story_index, "tok1", "--k", "9999")
        assert code == 0
        assert out.count("\n\n") == 9  # all 10 fragments
        assert any("exceeds store size" in r.message for r in caplog.records)

    def test_scorer_index_mismatch_exits_4(self, story_index, capsys):
        code, _, err = _run(capsys, "query", story_index, "tok1", "--scorer", "bm25")
        assert code == 4
        assert "relmem: error [config]:" in err
        assert "bm25" in err

    def test_query_file(self, story_index, tmp_path, capsys):
        qf = tmp_path / "q.txt"
        qf.write_text("tok1 tok2\n")
        direct = _run(capsys, "query", story_index, "tok1 tok2")
        from_file = _run(capsys, "query", story_index, "--query-file", qf)
        assert direct[1] == from_file[1]

    def test_missing_query_exits_4(self, story_index, capsys):
        code, _, err = _run(capsys, "query", story_index)
        assert code == 4
        assert "query" in err

    def test_w_rel_conflicts_with_code_relation(self, story_index, capsys):
        code, _, err = _run(capsys, "query", story_index, "tok1",
                            "--relation", "code", "--w-rel", "0.5")
        assert code == 4
        assert "w-rel" in err

    def test_bare_w_rel_on_code_index_conflicts(self, repo_copy, tmp_path, capsys):
        index_path = tmp_path / "code.json"
        assert _run(capsys, "index", repo_copy, "--kind", "code", "--out", index_path)[0] == 0
        code, _, err = _run(capsys, "query", index_path, "scale", "--w-rel", "0.5")
        assert code == 4
        assert "w-rel" in err and "code-structure" in err


class TestSweepCommand:
    @pytest.fixture
    def sweep_setup(self, tmp_path, capsys):
        rng = random.Random(77)
        texts, query, answer_pos = neighbor_benefit_corpus(rng, n_fragments=36)
        story = tmp_path / "corpus.txt"
        story.write_text(" ".join(texts))
        index_path = tmp_path / "idx.json"
        assert _run(capsys, "index", story, "--kind", "story",
                    "--fragment-words", str(WORDS_PER_FRAGMENT),
                    "--provider-dim", "4096", "--out", index_path)[0] == 0
        query_file = tmp_path / "q.txt"
        query_file.write_text(query)
        return index_path, query_file, answer_pos

    def test_alpha_zero_cell_equals_vanilla(self, sweep_setup, tmp_path, capsys):
        index_path, query_file, _ = sweep_setup
        out_dir = tmp_path / "sweep0"
        code, out, _ = _run(capsys, "sweep", index_path, "--query-file", query_file,
                            "--alphas", "0", "--w-rels", "0.3", "--out-dir", out_dir)
        assert code == 0
        row = out.strip().splitlines()[1].split("\t")
        assert row[0] == "0" and row[4] == "1.0000"

    def test_cell_matches_query_command(self, sweep_setup, tmp_path, capsys):
        index_path, query_file, _ = sweep_setup
        out_dir = tmp_path / "sweep1"
        code, out, _ = _run(capsys, "sweep", index_path, "--query-file", query_file,
                            "--alphas", "0.5", "--w-rels", "0.3", "--out-dir", out_dir)
        assert code == 0
        selected = out.strip().splitlines()[1].split("\t")[2]

        _, query_out, _ = _run(capsys, "query", index_path, "--query-file", query_file,
                               "--alpha", "0.5", "--w-rel", "0.3", "--k", "8")
        from relmem import load_index
        from relmem.manager import RetrievalConfig, retrieve
        from relmem.relations import RelationSpec

        index = load_index(index_path)
        cfg = RetrievalConfig(k=8, alpha=0.5, relation=RelationSpec("context-structure", w_rel=0.3))
        expected_ids = ",".join(str(i) for i in retrieve(query_file.read_text().strip(), index, cfg).selection.indices)
        assert selected == expected_ids
        assert query_out  # the query command ran and printed context

    def test_overlap_non_increasing_in_alpha_on_monotone_fixture(self, sweep_setup, tmp_path, capsys):
        index_path, query_file, _ = sweep_setup
        out_dir = tmp_path / "sweep2"
        code, out, _ = _run(capsys, "sweep", index_path, "--query-file", query_file,
                            "--alphas", "0,0.2,0.5,0.8", "--w-rels", "0.3", "--out-dir", out_dir)
        assert code == 0
        fractions = [float(line.split("\t")[4]) for line in out.strip().splitlines()[1:]]
        assert all(a >= b for a, b in zip(fractions, fractions[1:]))

    def test_writes_table_and_figure(self, sweep_setup, tmp_path, capsys):
        index_path, query_file, _ = sweep_setup
        out_dir = tmp_path / "sweep3"
        code, out, _ = _run(capsys, "sweep", index_path, "--query-file", query_file,
                            "--out-dir", out_dir)
        assert code == 0
        table = (out_dir / "sweep.tsv").read_text()
        assert table.splitlines()[0] == "alpha\tw_rel\tselected\toverlap\toverlap_fraction"
        assert len(table.strip().splitlines()) == 1 + 4 * 4  # default grid
        assert (out_dir / "sweep.png").stat().st_size > 0
        assert out == table

    def test_sweep_on_code_index_exits_4(self, repo_copy, tmp_path, capsys):
        index_path = tmp_path / "code.json"
        assert _run(capsys, "index", repo_copy, "--kind", "code", "--out", index_path)[0] == 0
        code, _, err = _run(capsys, "sweep", index_path, "anything", "--out-dir", tmp_path)
        assert code == 4
        assert "w_rel" in err


class TestChatCommand:
    def _transcript(self, n_turns: int, words_per_turn: int = 8):
        return [
            {
                "user": " ".join(f"theme{i}term{j}" for j in range(words_per_turn)),
                "assistant": f"noted theme {i}",
                "timestamp": f"2024-02-01T00:{i:02d}:00",
            }
            for i in range(n_turns)
        ]

    def test_replay_spills_and_reports(self, tmp_path, capsys):
        path = tmp_path / "chat.json"
        path.write_text(json.dumps(self._transcript(15)))
        code, out, _ = _run(capsys, "chat", "--transcript", path,
                            "--turn-limit", "10", "--token-limit", "1000")
        assert code == 0
        lines = [l for l in out.splitlines() if l.startswith("turn ")]
        assert len(lines) == 15
        assert "turn 11: spilled=1" in out
        assert "memory=5" in lines[-1]

    def test_replay_is_deterministic(self, tmp_path, capsys):
        path = tmp_path / "chat.json"
        path.write_text(json.dumps(self._transcript(12)))
        first = _run(capsys, "chat", "--transcript", path)
        second = _run(capsys, "chat", "--transcript", path)
        assert first == second

    def test_empty_transcript_exits_2(self, tmp_path, capsys):
        path = tmp_path / "chat.json"
        path.write_text("[]")
        code, _, err = _run(capsys, "chat", "--transcript", path)
        assert code == 2
        assert "relmem: error [input]:" in err

    def test_malformed_transcript_exits_2(self, tmp_path, capsys):
        path = tmp_path / "chat.json"
        path.write_text("{not json")
        code, _, err = _run(capsys, "chat", "--transcript", path)
        assert code == 2


class TestConfigFile:
    def test_flags_override_config_file(self, story_file, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"fragment_words": 100}))
        index_a = tmp_path / "a.json"
        index_b = tmp_path / "b.json"
        assert _run(capsys, "index", story_file, "--kind", "story", "--config", config,
                    "--out", index_a)[0] == 0
        assert _run(capsys, "index", story_file, "--kind", "story", "--config", config,
                    "--fragment-words", "250", "--out", index_b)[0] == 0
        assert json.loads(index_a.read_text())["split"]["words_per_fragment"] == 100
        assert json.loads(index_b.read_text())["split"]["words_per_fragment"] == 250

    def test_bad_config_file_exits_4(self, story_file, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text("[1, 2]")
        code, _, err = _run(capsys, "index", story_file, "--kind", "story", "--config", config,
                            "--out", tmp_path / "o.json")
        assert code == 4
        assert "config" in err
