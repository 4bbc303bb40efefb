"""Data model, ingestion, and context concatenation tests."""

import pytest

from conftest import make_collection, make_context, make_split
from fullrank.corpus import (
    Collection,
    DialogueContext,
    ResponsePassage,
    Utterance,
    concat_context,
    ingest_collection,
    ingest_dialogues,
    write_collection,
    write_dialogues,
)
from fullrank.errors import IngestError


def write_jsonl(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestIngestCollection:
    def test_counts_preserved(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [
            '{"id": "a", "text": "alpha"}',
            '{"id": "b", "text": "beta"}',
            '{"id": "c", "text": "gamma"}',
        ])
        collection = ingest_collection(path)
        assert len(collection) == 3
        assert collection["b"].text == "beta"

    def test_empty_text_rejected_with_line_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, ['{"id": "a", "text": "ok"}', '{"id": "b", "text": "  "}'])
        with pytest.raises(IngestError, match="line 2"):
            ingest_collection(path)

    def test_empty_text_allowed_when_flagged(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, ['{"id": "a", "text": ""}'])
        assert len(ingest_collection(path, allow_empty=True)) == 1

    def test_duplicate_id_names_offender(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, ['{"id": "a", "text": "x"}', '{"id": "a", "text": "y"}'])
        with pytest.raises(IngestError, match="'a'"):
            ingest_collection(path)

    def test_malformed_record_names_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, ['{"id": "a", "text": "x"}', "{broken"])
        with pytest.raises(IngestError, match="line 2"):
            ingest_collection(path)

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, ['{"id": "a", "text": "x"}'])
        with pytest.raises(IngestError, match="format"):
            ingest_collection(path, format="tsv")

    def test_expansions_parsed(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, ['{"id": "a", "text": "x", "expansions": ["p", "q"]}'])
        passage = ingest_collection(path)["a"]
        assert passage.expansions == ("p", "q")
        assert passage.indexed_text() == "x p q"


class TestIngestDialogues:
    def collection(self, tmp_path) -> Collection:
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [
            '{"id": "r1", "text": "resp one"}',
            '{"id": "r2", "text": "resp two"}',
        ])
        return ingest_collection(path)

    def test_basic(self, tmp_path):
        collection = self.collection(tmp_path)
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [
            '{"id": "q1", "utterances": [{"text": "hi", "speaker": "seeker"}], "response_id": "r1"}',
            '{"id": "q2", "utterances": [{"text": "yo", "speaker": "seeker"}], "response_id": "r2"}',
        ])
        split = ingest_dialogues(path, collection)
        assert len(split) == 2

    def test_empty_context_rejected(self, tmp_path):
        collection = self.collection(tmp_path)
        path = tmp_path / "d.jsonl"
        write_jsonl(path, ['{"id": "q1", "utterances": [], "response_id": "r1"}'])
        with pytest.raises(IngestError, match="at least one utterance"):
            ingest_dialogues(path, collection)

    def test_dangling_response_listed(self, tmp_path):
        collection = self.collection(tmp_path)
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [
            '{"id": "q1", "utterances": [{"text": "hi", "speaker": "seeker"}], "response_id": "x9"}',
        ])
        with pytest.raises(IngestError, match="x9"):
            ingest_dialogues(path, collection)


class TestRoundTrip:
    def test_collection_round_trip(self, tmp_path):
        original = Collection([
            ResponsePassage(id="a", text="alpha beta"),
            ResponsePassage(id="b", text="gamma", expansions=("x", "y")),
        ])
        path = tmp_path / "out.jsonl"
        write_collection(original, path)
        loaded = ingest_collection(path)
        assert loaded.ids() == original.ids()
        for rid in original.ids():
            assert loaded[rid] == original[rid]

    def test_dialogues_round_trip(self, tmp_path):
        collection = make_collection({"r1": "one", "r2": "two"})
        split = make_split([
            (make_context("q1", ("seeker", "hello"), ("responder", "hi")), "r1"),
            (make_context("q2", ("seeker", "bye")), "r2"),
        ])
        path = tmp_path / "out.jsonl"
        write_dialogues(split, path)
        loaded = ingest_dialogues(path, collection)
        assert loaded == split


class TestDomainTypes:
    def test_context_requires_utterances(self):
        with pytest.raises(ValueError):
            DialogueContext(id="q", utterances=())

    def test_last_utterance(self):
        for n in range(1, 6):
            turns = [("seeker", f"u{i}") for i in range(n)]
            ctx = make_context("q", *turns)
            assert ctx.last_utterance.text == f"u{n - 1}"

    def test_turn_indices_must_not_decrease(self):
        utts = (
            Utterance(text="a", speaker="seeker", turn_index=1),
            Utterance(text="b", speaker="responder", turn_index=0),
        )
        with pytest.raises(ValueError):
            DialogueContext(id="q", utterances=utts)

    def test_bad_speaker_rejected(self):
        with pytest.raises(ValueError):
            Utterance(text="x", speaker="narrator", turn_index=0)


class TestConcatContext:
    def test_single_utterance_is_bare(self):
        assert concat_context(make_context("q", ("seeker", "hi"))) == "hi"

    def test_speaker_change_inserts_turn_separator(self):
        ctx = make_context(
            "q",
            ("seeker", "hey... how long until dapper comes out?"),
            ("responder", "14 days"),
            ("seeker", "i thought it was coming out tonight"),
        )
        assert concat_context(ctx) == (
            "hey... how long until dapper comes out? [U] [T] 14 days [U] [T] "
            "i thought it was coming out tonight"
        )

    def test_same_speaker_uses_utterance_separator_only(self):
        ctx = make_context("q", ("seeker", "first"), ("seeker", "second"))
        assert concat_context(ctx) == "first [U] second"

    def test_every_utterance_is_a_substring_in_order(self):
        ctx = make_context(
            "q", ("seeker", "alpha"), ("responder", "beta"), ("seeker", "gamma")
        )
        joined = concat_context(ctx)
        pos = -1
        for utt in ctx.utterances:
            found = joined.find(utt.text, pos + 1)
            assert found > pos
            pos = found
