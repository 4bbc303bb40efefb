"""Inverted index construction and BM25 retrieval.

Scoring uses the non-negative idf variant

    idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))

and the saturated term frequency

    idf(t) * tf / (tf + k1 * (1 - b + b * |d| / avgdl))

with defaults k1 = 0.9, b = 0.4, matching common search-toolkit defaults.
A plain string query scores each distinct term weighted by its frequency in
the query; a :class:`WeightedQuery` multiplies each term's contribution by
an arbitrary non-negative weight instead. Ties are broken by ascending doc
id so rankings are reproducible.

Index files are binary, little-endian, layout documented in
``docs/file-formats.md``.
"""

from __future__ import annotations

import heapq
import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .analysis import AnalyzerConfig, analyze
from .corpus import Collection
from .errors import FormatError, ValidationError

__all__ = [
    "InvertedIndex",
    "WeightedQuery",
    "ScoredList",
    "build_index",
    "search",
    "save_index",
    "load_index",
    "BM25_K1",
    "BM25_B",
]

BM25_K1 = 0.9
BM25_B = 0.4

_INDEX_MAGIC = b"FRIX"
_INDEX_VERSION = 1


@dataclass(frozen=True)
class WeightedQuery:
    """Bag of query terms with non-negative real weights.

    Terms are assumed to be already analyzed (they normally come out of the
    same analyzer that built the index). ``fallback_reason`` is set when an
    expansion step could not run and returned the original query unchanged.
    """

    weights: dict[str, float]
    fallback_reason: str | None = None

    def __post_init__(self):
        if not self.weights:
            raise ValidationError("weighted query has no terms")
        if not any(w > 0 for w in self.weights.values()):
            raise ValidationError("weighted query has no positive weights")
        for term, w in self.weights.items():
            if not math.isfinite(w) or w < 0:
                raise ValidationError(f"non-finite or negative weight for {term!r}")


@dataclass(frozen=True)
class ScoredList:
    """A ranked result list: (doc id, score) pairs, best first.

    Scores are non-increasing; ties are ordered by ascending doc id; doc ids
    are unique.
    """

    query_id: str
    entries: tuple[tuple[str, float], ...]
    cutoff: int

    def __post_init__(self):
        prev = None
        seen = set()
        for doc_id, score in self.entries:
            if doc_id in seen:
                raise ValidationError(f"duplicate doc id in ranking: {doc_id!r}")
            seen.add(doc_id)
            if prev is not None:
                prev_score, prev_id = prev
                if score > prev_score or (score == prev_score and doc_id < prev_id):
                    raise ValidationError("ranking is not (score desc, id asc) ordered")
            prev = (score, doc_id)

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]


class InvertedIndex:
    """Term statistics, postings, and document lengths for BM25 scoring."""

    def __init__(
        self,
        doc_lengths: dict[str, int],
        postings: dict[str, list[tuple[str, int]]],
        analyzer: AnalyzerConfig,
    ):
        self.doc_lengths = doc_lengths
        self.postings = postings
        self.analyzer = analyzer
        self.N = len(doc_lengths)
        self.avgdl = (
            sum(doc_lengths.values()) / self.N if self.N else 0.0
        )
        self.df = {term: len(plist) for term, plist in postings.items()}
        self._forward: dict[str, dict[str, int]] | None = None

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        if df == 0:
            return 0.0
        return math.log(1.0 + (self.N - df + 0.5) / (df + 0.5))

    def doc_terms(self, doc_id: str) -> dict[str, int]:
        """Term frequencies of one document (forward view, built lazily)."""
        if self._forward is None:
            forward: dict[str, dict[str, int]] = {d: {} for d in self.doc_lengths}
            for term, plist in self.postings.items():
                for doc, tf in plist:
                    forward[doc][term] = tf
            self._forward = forward
        return self._forward[doc_id]


def build_index(
    collection: Collection,
    config: AnalyzerConfig | None = None,
    use_expansions: bool = False,
) -> InvertedIndex:
    """Index a collection; expansions are appended to their document only
    when ``use_expansions`` is set."""
    if len(collection) == 0:
        raise ValidationError("cannot index an empty collection")
    config = config or AnalyzerConfig()
    doc_lengths: dict[str, int] = {}
    postings: dict[str, list[tuple[str, int]]] = {}
    for passage in collection:
        text = passage.indexed_text() if use_expansions else passage.text
        tokens = analyze(text, config)
        doc_lengths[passage.id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((passage.id, tf))
    for plist in postings.values():
        plist.sort(key=lambda entry: entry[0])
    return InvertedIndex(doc_lengths, postings, config)


def _query_weights(
    index: InvertedIndex,
    query: str | WeightedQuery,
    config: AnalyzerConfig | None,
) -> dict[str, float]:
    if isinstance(query, WeightedQuery):
        return {t: w for t, w in query.weights.items() if w > 0}
    tokens = analyze(query, config or index.analyzer)
    return {t: float(c) for t, c in Counter(tokens).items()}


def search(
    index: InvertedIndex,
    query: str | WeightedQuery,
    k: int,
    config: AnalyzerConfig | None = None,
    query_id: str = "",
) -> ScoredList:
    """Exact top-k BM25 retrieval (term-at-a-time, no pruning).

    A query with no term present in the index yields an empty list.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    weights = _query_weights(index, query, config)

    accumulator: dict[str, float] = {}
    k1, b = BM25_K1, BM25_B
    avgdl = index.avgdl
    for term, weight in weights.items():
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for doc_id, tf in plist:
            norm = k1 * (1.0 - b + b * index.doc_lengths[doc_id] / avgdl)
            accumulator[doc_id] = accumulator.get(doc_id, 0.0) + weight * idf * tf / (
                tf + norm
            )

    top = heapq.nsmallest(
        k, accumulator.items(), key=lambda item: (-item[1], item[0])
    )
    return ScoredList(
        query_id=query_id,
        entries=tuple((doc_id, score) for doc_id, score in top),
        cutoff=k,
    )


# ---------------------------------------------------------------------------
# Binary persistence.
# ---------------------------------------------------------------------------


def _write_varint(out: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise FormatError("unexpected end of file in varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def _write_str(out: bytearray, s: str) -> None:
    data = s.encode("utf-8")
    out += struct.pack("<I", len(data))
    out += data


def _read_str(buf: bytes, pos: int) -> tuple[str, int]:
    if pos + 4 > len(buf):
        raise FormatError("unexpected end of file in string length")
    (length,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if pos + length > len(buf):
        raise FormatError("unexpected end of file in string data")
    return buf[pos : pos + length].decode("utf-8"), pos + length


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """Persist an index; layout in docs/file-formats.md."""
    out = bytearray()
    out += _INDEX_MAGIC
    out += struct.pack("<I", _INDEX_VERSION)
    doc_ids = sorted(index.doc_lengths)
    doc_pos = {d: i for i, d in enumerate(doc_ids)}
    out += struct.pack("<Q", len(doc_ids))
    for doc_id in doc_ids:
        _write_str(out, doc_id)
        out += struct.pack("<I", index.doc_lengths[doc_id])
    out += struct.pack("<Q", len(index.postings))
    for term in sorted(index.postings):
        _write_str(out, term)
        plist = index.postings[term]
        _write_varint(out, len(plist))
        prev = 0
        for doc_id, tf in plist:  # sorted by doc id, so positions ascend
            position = doc_pos[doc_id]
            _write_varint(out, position - prev)
            _write_varint(out, tf)
            prev = position
    # Analyzer settings ride along so queries analyze consistently.
    _write_str(out, index.analyzer.stemmer)
    out += struct.pack("<?", index.analyzer.lowercase)
    _write_str(out, index.analyzer.token_pattern)
    out += struct.pack("<I", len(index.analyzer.stopwords))
    for word in sorted(index.analyzer.stopwords):
        _write_str(out, word)
    Path(path).write_bytes(bytes(out))


def load_index(path: str | Path) -> InvertedIndex:
    buf = Path(path).read_bytes()
    if buf[:4] != _INDEX_MAGIC:
        raise FormatError(f"{path}: not an index file (bad magic)")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != _INDEX_VERSION:
        raise FormatError(f"{path}: unsupported index version {version}")
    pos = 8
    if pos + 8 > len(buf):
        raise FormatError("unexpected end of file")
    (n_docs,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    doc_ids: list[str] = []
    doc_lengths: dict[str, int] = {}
    for _ in range(n_docs):
        doc_id, pos = _read_str(buf, pos)
        if pos + 4 > len(buf):
            raise FormatError("unexpected end of file")
        (length,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        doc_ids.append(doc_id)
        doc_lengths[doc_id] = length
    if pos + 8 > len(buf):
        raise FormatError("unexpected end of file")
    (n_terms,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    postings: dict[str, list[tuple[str, int]]] = {}
    for _ in range(n_terms):
        term, pos = _read_str(buf, pos)
        count, pos = _read_varint(buf, pos)
        plist: list[tuple[str, int]] = []
        position = 0
        for _ in range(count):
            gap, pos = _read_varint(buf, pos)
            tf, pos = _read_varint(buf, pos)
            position += gap
            if position >= len(doc_ids):
                raise FormatError(f"{path}: posting references unknown document")
            plist.append((doc_ids[position], tf))
        postings[term] = plist
    stemmer, pos = _read_str(buf, pos)
    if pos + 1 > len(buf):
        raise FormatError("unexpected end of file")
    (lowercase,) = struct.unpack_from("<?", buf, pos)
    pos += 1
    token_pattern, pos = _read_str(buf, pos)
    if pos + 4 > len(buf):
        raise FormatError("unexpected end of file")
    (n_stop,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    stopwords = set()
    for _ in range(n_stop):
        word, pos = _read_str(buf, pos)
        stopwords.add(word)
    analyzer = AnalyzerConfig(
        lowercase=bool(lowercase),
        stopwords=frozenset(stopwords),
        stemmer=stemmer,
        token_pattern=token_pattern,
    )
    return InvertedIndex(doc_lengths, postings, analyzer)
