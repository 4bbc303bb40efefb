"""Dense encoding, vector store, and exact-search tests."""

import numpy as np
import pytest

from conftest import make_collection
from fullrank.analysis import AnalyzerConfig
from fullrank.dense import (
    HashedEncoder,
    VectorStore,
    build_store,
    dense_search,
    encode,
    export_store,
    fnv1a64,
    import_store,
)
from fullrank.errors import FormatError, ValidationError


def oracle_top_k(store: VectorStore, query: np.ndarray, k: int):
    """Full score sweep plus a stable (score desc, id asc) sort."""
    scores = store.matrix.astype(np.float64) @ np.asarray(query, dtype=np.float64)
    ranked = sorted(zip(store.ids, scores), key=lambda item: (-item[1], item[0]))
    return [(doc_id, float(score)) for doc_id, score in ranked[:k]]


class TestHashedEncoder:
    def test_single_token_is_its_table_row(self):
        enc = HashedEncoder(buckets=64, dim=8, seed=1)
        row = enc.table[enc.bucket("kernel")]
        np.testing.assert_array_equal(enc.encode_tokens(["kernel"]), row)

    def test_mean_of_two_rows(self):
        enc = HashedEncoder(buckets=64, dim=2, seed=1)
        enc.table[:] = 0.0
        enc.table[enc.bucket("aa")] = (1.0, 0.0)
        enc.table[enc.bucket("bb")] = (0.0, 1.0)
        assert enc.bucket("aa") != enc.bucket("bb")
        np.testing.assert_allclose(enc.encode_tokens(["aa", "bb"]), [0.5, 0.5])

    def test_zero_table_encodes_to_zero(self):
        enc = HashedEncoder(buckets=16, dim=4, seed=0)
        enc.table[:] = 0.0
        np.testing.assert_array_equal(enc.encode_tokens(["x", "y"]), np.zeros(4))

    def test_empty_text_is_zero_vector(self):
        enc = HashedEncoder(buckets=16, dim=4, seed=0)
        np.testing.assert_array_equal(encode(enc, ""), np.zeros(4))

    def test_deterministic_given_seed(self):
        a = HashedEncoder(buckets=128, dim=16, seed=9)
        b = HashedEncoder(buckets=128, dim=16, seed=9)
        np.testing.assert_array_equal(a.table, b.table)

    def test_hash_is_stable(self):
        # 64-bit FNV-1a of "a" is a published constant.
        assert fnv1a64("a") == 0xAF63DC4C8601EC8C

    def test_encode_linearity_in_table(self):
        enc = HashedEncoder(buckets=256, dim=8, seed=3)
        config = AnalyzerConfig.plain()
        tokens = ["aa", "bb", "aa", "cc"]
        bucket = enc.bucket("aa")
        before = enc.encode_tokens(tokens)
        delta = np.full(8, 0.25)
        enc.table[bucket] += delta
        after = enc.encode_tokens(tokens)
        count = sum(1 for t in tokens if enc.bucket(t) == bucket)
        np.testing.assert_allclose(after - before, delta * count / len(tokens))


class TestBuildStore:
    def test_one_row_per_response_in_order(self, plain_analyzer):
        collection = make_collection({"a": "x", "b": "y", "c": "z"})
        store = build_store(HashedEncoder(64, 8, seed=0), collection, plain_analyzer)
        assert store.ids == ["a", "b", "c"]
        assert store.matrix.shape == (3, 8)

    def test_identical_texts_identical_rows(self, plain_analyzer):
        collection = make_collection({"a": "same text", "b": "same text"})
        store = build_store(HashedEncoder(64, 8, seed=0), collection, plain_analyzer)
        np.testing.assert_array_equal(store.matrix[0], store.matrix[1])

    def test_rebuild_bit_identical(self, plain_analyzer):
        collection = make_collection({"a": "x y z", "b": "w"})
        s1 = build_store(HashedEncoder(64, 8, seed=5), collection, plain_analyzer)
        s2 = build_store(HashedEncoder(64, 8, seed=5), collection, plain_analyzer)
        assert s1.matrix.tobytes() == s2.matrix.tobytes()


class TestDenseSearch:
    def test_basis_vector_query(self):
        store = VectorStore(["r0", "r1", "r2"], np.eye(3, dtype=np.float32))
        result = dense_search(store, np.array([0.0, 1.0, 0.0]), k=1)
        assert result.entries == (("r1", 1.0),)

    def test_matches_oracle_on_random_store(self):
        rng = np.random.default_rng(0)
        matrix = rng.normal(size=(200, 16)).astype(np.float32)
        ids = [f"v{i:03d}" for i in range(200)]
        store = VectorStore(ids, matrix)
        for _ in range(10):
            query = rng.normal(size=16)
            got = dense_search(store, query, k=25)
            assert list(got.entries) == oracle_top_k(store, query, 25)

    def test_tie_order_by_id(self):
        # Duplicate rows force exact score ties.
        row = np.array([1.0, 2.0], dtype=np.float32)
        store = VectorStore(["bb", "aa", "cc"], np.stack([row, row, row]))
        got = dense_search(store, np.array([1.0, 1.0]), k=3)
        assert got.doc_ids() == ["aa", "bb", "cc"]

    def test_k_larger_than_store_returns_all(self):
        store = VectorStore(["a", "b"], np.eye(2, dtype=np.float32))
        got = dense_search(store, np.array([1.0, 0.5]), k=10)
        assert len(got.entries) == 2

    def test_exhaustive(self):
        rng = np.random.default_rng(4)
        store = VectorStore(
            [f"r{i}" for i in range(50)], rng.normal(size=(50, 8)).astype(np.float32)
        )
        query = rng.normal(size=8)
        top = dense_search(store, query, k=10)
        returned = dict(top.entries)
        floor = min(returned.values())
        all_scores = store.matrix.astype(np.float64) @ query
        for doc_id, score in zip(store.ids, all_scores):
            if doc_id not in returned:
                assert score <= floor

    def test_scaling_query_preserves_order(self):
        rng = np.random.default_rng(8)
        store = VectorStore(
            [f"r{i}" for i in range(40)], rng.normal(size=(40, 6)).astype(np.float32)
        )
        query = rng.normal(size=6)
        base = dense_search(store, query, k=40)
        scaled = dense_search(store, 3.0 * query, k=40)
        assert scaled.doc_ids() == base.doc_ids()
        for (_, s_score), (_, b_score) in zip(scaled.entries, base.entries):
            assert s_score == pytest.approx(3.0 * b_score, rel=1e-12)

    def test_dimension_mismatch_rejected(self):
        store = VectorStore(["a"], np.zeros((1, 4), dtype=np.float32))
        with pytest.raises(ValidationError):
            dense_search(store, np.zeros(5), k=1)


class TestDvecFiles:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        store = VectorStore(
            [f"id{i}" for i in range(100)],
            rng.normal(size=(100, 768)).astype(np.float32),
        )
        path = tmp_path / "store.dvec"
        export_store(store, path)
        loaded = import_store(path)
        assert loaded.ids == store.ids
        assert loaded.dim == 768
        assert loaded.matrix.tobytes() == store.matrix.tobytes()

    def test_truncated_file(self, tmp_path):
        store = VectorStore(["a", "b"], np.ones((2, 4), dtype=np.float32))
        path = tmp_path / "store.dvec"
        export_store(store, path)
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(FormatError, match="unexpected end of file"):
            import_store(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "store.dvec"
        path.write_bytes(b"XVEC" + b"\x00" * 40)
        with pytest.raises(FormatError, match="magic"):
            import_store(path)

    def test_nan_rejected(self, tmp_path):
        store = VectorStore(["a"], np.ones((1, 2), dtype=np.float32))
        path = tmp_path / "store.dvec"
        export_store(store, path)
        data = bytearray(path.read_bytes())
        data[-8:-4] = np.array([np.nan], dtype="<f4").tobytes()
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="NaN"):
            import_store(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        store = VectorStore(["a", "b"], np.ones((2, 2), dtype=np.float32))
        path = tmp_path / "store.dvec"
        export_store(store, path)
        data = path.read_bytes().replace(b"\x01\x00\x00\x00b", b"\x01\x00\x00\x00a")
        path.write_bytes(data)
        with pytest.raises(FormatError, match="duplicate"):
            import_store(path)
