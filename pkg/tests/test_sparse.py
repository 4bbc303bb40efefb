"""Inverted index and BM25 tests, checked against a brute-force oracle."""

import math
from collections import Counter

import numpy as np
import pytest

from conftest import make_collection, random_token_corpus
from fullrank.analysis import AnalyzerConfig, analyze
from fullrank.errors import FormatError, ValidationError
from fullrank.sparse import (
    BM25_B,
    BM25_K1,
    ScoredList,
    WeightedQuery,
    build_index,
    load_index,
    save_index,
    search,
)


def oracle_bm25_ranking(
    docs: dict[str, str],
    query_weights: dict[str, float],
    config: AnalyzerConfig,
    k: int,
) -> list[tuple[str, float]]:
    """Direct evaluation of the BM25 formula over every document.

    Recomputes all statistics from scratch: no shared code with the index
    beyond the analyzer.
    """
    analyzed = {d: analyze(text, config) for d, text in docs.items()}
    n = len(docs)
    avgdl = sum(len(t) for t in analyzed.values()) / n
    df = Counter()
    for tokens in analyzed.values():
        df.update(set(tokens))
    scores = {}
    for doc_id, tokens in analyzed.items():
        tf = Counter(tokens)
        score = 0.0
        for term, weight in query_weights.items():
            if tf[term] == 0 or df[term] == 0:
                continue
            idf = math.log(1 + (n - df[term] + 0.5) / (df[term] + 0.5))
            denom = tf[term] + BM25_K1 * (1 - BM25_B + BM25_B * len(tokens) / avgdl)
            score += weight * idf * tf[term] / denom
        if score > 0.0:
            scores[doc_id] = score
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


class TestBuildIndex:
    def test_hand_counted_statistics(self, plain_analyzer):
        collection = make_collection({"a": "x y", "b": "y"})
        index = build_index(collection, plain_analyzer)
        assert index.N == 2
        assert index.df["y"] == 2
        assert index.df["x"] == 1
        assert index.avgdl == 1.5

    def test_df_equals_posting_lengths_and_sorted(self, plain_analyzer):
        rng = np.random.default_rng(7)
        collection = make_collection(random_token_corpus(rng, 50))
        index = build_index(collection, plain_analyzer)
        for term, plist in index.postings.items():
            assert index.df[term] == len(plist)
            ids = [d for d, _ in plist]
            assert ids == sorted(ids)
        assert index.avgdl == sum(index.doc_lengths.values()) / index.N

    def test_empty_collection_rejected(self, plain_analyzer):
        from fullrank.corpus import Collection

        with pytest.raises(ValidationError):
            build_index(Collection([]), plain_analyzer)

    def test_empty_expansions_change_nothing(self, plain_analyzer):
        collection = make_collection({"a": "x y", "b": "y z"})
        with_flag = build_index(collection, plain_analyzer, use_expansions=True)
        without = build_index(collection, plain_analyzer, use_expansions=False)
        assert with_flag.postings == without.postings
        assert with_flag.doc_lengths == without.doc_lengths

    def test_expansions_touch_their_document_only(self, plain_analyzer):
        from fullrank.corpus import Collection, ResponsePassage

        collection = Collection([
            ResponsePassage(id="a", text="x", expansions=("zz qq",)),
            ResponsePassage(id="b", text="x"),
        ])
        index = build_index(collection, plain_analyzer, use_expansions=True)
        assert index.postings["zz"] == [("a", 1)]
        assert index.postings["qq"] == [("a", 1)]
        assert index.doc_lengths == {"a": 3, "b": 1}


class TestSearch:
    def test_only_matching_doc_wins(self, plain_analyzer):
        collection = make_collection({"a": "ubuntu kernel", "b": "travel visa"})
        index = build_index(collection, plain_analyzer)
        scored = search(index, "kernel", k=1)
        assert scored.doc_ids() == ["a"]

    def test_unknown_terms_give_empty_list(self, plain_analyzer):
        collection = make_collection({"a": "ubuntu kernel"})
        index = build_index(collection, plain_analyzer)
        assert search(index, "qqqq zzzz", k=5).entries == ()

    def test_five_doc_corpus_matches_oracle(self, plain_analyzer):
        docs = {
            "d1": "apt install kernel",
            "d2": "apt apt remove",
            "d3": "install visa travel",
            "d4": "kernel panic reboot",
            "d5": "apt install install",
        }
        index = build_index(make_collection(docs), plain_analyzer)
        got = search(index, "apt install", k=5)
        weights = {t: float(c) for t, c in Counter(analyze("apt install", plain_analyzer)).items()}
        expected = oracle_bm25_ranking(docs, weights, plain_analyzer, k=5)
        assert got.doc_ids() == [d for d, _ in expected]
        for (_, got_score), (_, exp_score) in zip(got.entries, expected):
            assert got_score == pytest.approx(exp_score, abs=1e-9)

    def test_randomized_oracle_equivalence(self, plain_analyzer):
        rng = np.random.default_rng(42)
        for _ in range(5):
            docs = random_token_corpus(rng, int(rng.integers(20, 200)), vocab_size=30)
            index = build_index(make_collection(docs), plain_analyzer)
            terms = rng.choice([f"w{v}" for v in range(30)], size=8).tolist()
            query = " ".join(terms)
            got = search(index, query, k=len(docs))
            weights = {t: float(c) for t, c in Counter(terms).items()}
            expected = oracle_bm25_ranking(docs, weights, plain_analyzer, k=len(docs))
            assert got.doc_ids() == [d for d, _ in expected]

    def test_uniform_weighted_query_preserves_ordering(self, plain_analyzer):
        rng = np.random.default_rng(3)
        docs = random_token_corpus(rng, 100, vocab_size=20)
        index = build_index(make_collection(docs), plain_analyzer)
        query = "w1 w2 w3"
        plain = search(index, query, k=100)
        weighted = search(
            index, WeightedQuery({"w1": 2.5, "w2": 2.5, "w3": 2.5}), k=100
        )
        assert weighted.doc_ids() == plain.doc_ids()
        for (_, w_score), (_, p_score) in zip(weighted.entries, plain.entries):
            assert w_score == pytest.approx(2.5 * p_score, rel=1e-12)

    def test_single_term_matches_closed_form(self, plain_analyzer):
        rng = np.random.default_rng(11)
        docs = random_token_corpus(rng, 300, vocab_size=15)
        index = build_index(make_collection(docs), plain_analyzer)
        got = search(index, "w5", k=300)
        expected = oracle_bm25_ranking(docs, {"w5": 1.0}, plain_analyzer, k=300)
        assert [d for d, _ in expected] == got.doc_ids()

    def test_determinism_including_ties(self, plain_analyzer):
        # Identical docs force score ties; order must be stable by id.
        docs = {"b": "x", "a": "x", "c": "x"}
        index = build_index(make_collection(docs), plain_analyzer)
        first = search(index, "x", k=3)
        second = search(index, "x", k=3)
        assert first == second
        assert first.doc_ids() == ["a", "b", "c"]

    def test_k_must_be_positive(self, plain_analyzer):
        index = build_index(make_collection({"a": "x"}), plain_analyzer)
        with pytest.raises(ValidationError):
            search(index, "x", k=0)


class TestWeightedQuery:
    def test_requires_positive_weight(self):
        with pytest.raises(ValidationError):
            WeightedQuery({"x": 0.0})

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            WeightedQuery({"x": float("inf")})

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            WeightedQuery({"x": -1.0})


class TestScoredList:
    def test_rejects_score_inversion(self):
        with pytest.raises(ValidationError):
            ScoredList(query_id="q", entries=(("a", 1.0), ("b", 2.0)), cutoff=2)

    def test_rejects_bad_tie_order(self):
        with pytest.raises(ValidationError):
            ScoredList(query_id="q", entries=(("b", 1.0), ("a", 1.0)), cutoff=2)

    def test_rejects_duplicates(self):
        with pytest.raises(ValidationError):
            ScoredList(query_id="q", entries=(("a", 2.0), ("a", 1.0)), cutoff=2)


class TestPersistence:
    def test_round_trip(self, tmp_path, plain_analyzer):
        rng = np.random.default_rng(5)
        docs = random_token_corpus(rng, 80, vocab_size=25)
        index = build_index(make_collection(docs), plain_analyzer)
        path = tmp_path / "index.bin"
        save_index(index, path)
        loaded = load_index(path)
        assert loaded.N == index.N
        assert loaded.avgdl == index.avgdl
        assert loaded.doc_lengths == index.doc_lengths
        assert loaded.postings == index.postings
        assert loaded.analyzer == index.analyzer

    def test_search_identical_after_reload(self, tmp_path, plain_analyzer):
        docs = {"a": "x y z", "b": "x x", "c": "y"}
        index = build_index(make_collection(docs), plain_analyzer)
        path = tmp_path / "index.bin"
        save_index(index, path)
        loaded = load_index(path)
        assert search(loaded, "x y", k=3) == search(index, "x y", k=3)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError, match="magic"):
            load_index(path)

    def test_truncated_file_rejected(self, tmp_path, plain_analyzer):
        index = build_index(make_collection({"a": "x y"}), plain_analyzer)
        path = tmp_path / "index.bin"
        save_index(index, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(FormatError):
            load_index(path)
