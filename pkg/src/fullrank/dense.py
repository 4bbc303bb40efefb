"""Dense representations and exact inner-product retrieval.

A text is encoded as the mean of its per-token vectors; a context/response
pair is scored by the dot product of the two mean-pooled vectors. Search is
an exhaustive score sweep: every row is scored, so oracle checks are exact
and no approximation error ever enters the evaluation.

Embedding files ("DVEC") are binary, little-endian, layout documented in
``docs/file-formats.md``; externally computed embeddings can be imported to
run zero-shot evaluations without any model dependency in this package.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .analysis import AnalyzerConfig, analyze
from .corpus import Collection
from .errors import FormatError, ValidationError
from .sparse import ScoredList

__all__ = [
    "Encoder",
    "HashedEncoder",
    "VectorStore",
    "encode",
    "build_store",
    "export_store",
    "import_store",
    "dense_search",
    "fnv1a64",
]

logger = logging.getLogger(__name__)

_DVEC_MAGIC = b"DVEC"
_DVEC_VERSION = 1
_DVEC_DTYPE_F32 = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: str) -> int:
    """64-bit FNV-1a hash of a token's UTF-8 bytes."""
    h = _FNV_OFFSET
    for byte in data.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


class Encoder(Protocol):
    """Anything that turns token lists into per-token vectors of width dim.

    ``encode_tokens`` must return the arithmetic mean of the per-token
    vectors and be deterministic given the encoder's parameters.
    """

    dim: int

    def token_vectors(self, tokens: Sequence[str]) -> np.ndarray: ...

    def encode_tokens(self, tokens: Sequence[str]) -> np.ndarray: ...


class HashedEncoder:
    """Bucket-hashed embedding table with mean pooling.

    Each token maps to a row of a ``buckets x dim`` table via 64-bit FNV-1a
    modulo the bucket count; a text's vector is the mean of its tokens'
    rows. The table is the full trainable parameter set, which keeps
    gradients simple enough to verify by finite differences.
    """

    def __init__(
        self,
        buckets: int = 2**18,
        dim: int = 64,
        seed: int = 0,
        init_scale: float | None = None,
    ):
        if buckets < 1 or dim < 1:
            raise ValidationError("buckets and dim must be positive")
        self.buckets = buckets
        self.dim = dim
        if init_scale is None:
            init_scale = 1.0 / np.sqrt(dim)
        rng = np.random.default_rng(seed)
        self.table = rng.normal(0.0, init_scale, size=(buckets, dim))

    def bucket(self, token: str) -> int:
        return fnv1a64(token) % self.buckets

    def token_vectors(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim))
        rows = np.fromiter((self.bucket(t) for t in tokens), dtype=np.int64)
        return self.table[rows]

    def encode_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            return np.zeros(self.dim)
        return self.token_vectors(tokens).mean(axis=0)

    def parameters(self) -> np.ndarray:
        return self.table

    def load_parameters(self, table: np.ndarray) -> None:
        if table.shape != (self.buckets, self.dim):
            raise ValidationError("parameter shape mismatch")
        self.table = np.array(table, dtype=float)


def encode(
    encoder: Encoder, text: str, config: AnalyzerConfig | None = None
) -> np.ndarray:
    """Mean-pooled vector of a text; empty text yields a zero vector."""
    tokens = analyze(text, config)
    if not tokens:
        logger.warning("text analyzed to no tokens; encoding as zero vector")
        return np.zeros(encoder.dim)
    return encoder.encode_tokens(tokens)


class VectorStore:
    """Fixed-dimension vectors addressed by id, one matrix row per id."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise ValidationError("store matrix must be 2-dimensional")
        if len(ids) != matrix.shape[0]:
            raise ValidationError("row count does not match id count")
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate ids in vector store")
        if not np.all(np.isfinite(matrix)):
            raise ValidationError("store contains non-finite values")
        self.ids = list(ids)
        self.matrix = matrix
        self.dim = matrix.shape[1]
        # Tie-break order: rank of each row's id in lexicographic id order.
        self._id_rank = np.empty(len(self.ids), dtype=np.int64)
        self._id_rank[np.argsort(np.array(self.ids, dtype=object))] = np.arange(
            len(self.ids)
        )

    def __len__(self) -> int:
        return len(self.ids)


def build_store(
    encoder: Encoder,
    collection: Collection,
    config: AnalyzerConfig | None = None,
) -> VectorStore:
    """Encode every response, one row per passage in collection order."""
    if len(collection) == 0:
        raise ValidationError("cannot build a store from an empty collection")
    ids = collection.ids()
    matrix = np.stack(
        [encode(encoder, collection[i].text, config) for i in ids]
    ).astype(np.float32)
    return VectorStore(ids, matrix)


def dense_search(store: VectorStore, query: np.ndarray, k: int) -> ScoredList:
    """Exact top-k by inner product over every stored row.

    Ties are broken by ascending id; ``k`` larger than the store returns
    every row ranked.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (store.dim,):
        raise ValidationError(
            f"query dimension {query.shape} does not match store dim {store.dim}"
        )
    scores = store.matrix.astype(np.float64) @ query
    order = np.lexsort((store._id_rank, -scores))[:k]
    entries = tuple((store.ids[i], float(scores[i])) for i in order)
    return ScoredList(query_id="", entries=entries, cutoff=k)


def export_store(store: VectorStore, path: str | Path) -> None:
    """Write a store as a DVEC file; layout in docs/file-formats.md."""
    out = bytearray()
    out += _DVEC_MAGIC
    out += struct.pack("<IIQI", _DVEC_VERSION, _DVEC_DTYPE_F32, len(store), store.dim)
    for doc_id in store.ids:
        data = doc_id.encode("utf-8")
        out += struct.pack("<I", len(data))
        out += data
    out += store.matrix.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(bytes(out))


def import_store(path: str | Path) -> VectorStore:
    """Read a DVEC file, validating layout, finiteness, and id uniqueness."""
    buf = Path(path).read_bytes()
    if buf[:4] != _DVEC_MAGIC:
        raise FormatError(f"{path}: not a DVEC file (bad magic)")
    header = struct.calcsize("<IIQI")
    if len(buf) < 4 + header:
        raise FormatError(f"{path}: unexpected end of file in header")
    version, dtype, rows, dim = struct.unpack_from("<IIQI", buf, 4)
    if version != _DVEC_VERSION:
        raise FormatError(f"{path}: unsupported DVEC version {version}")
    if dtype != _DVEC_DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    pos = 4 + header
    ids: list[str] = []
    for _ in range(rows):
        if pos + 4 > len(buf):
            raise FormatError(f"{path}: unexpected end of file in id table")
        (length,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if pos + length > len(buf):
            raise FormatError(f"{path}: unexpected end of file in id table")
        ids.append(buf[pos : pos + length].decode("utf-8"))
        pos += length
    expected = rows * dim * 4
    if len(buf) - pos < expected:
        raise FormatError(f"{path}: unexpected end of file in matrix data")
    if len(buf) - pos > expected:
        raise FormatError(f"{path}: trailing bytes after matrix data")
    matrix = np.frombuffer(buf, dtype="<f4", count=rows * dim, offset=pos)
    matrix = matrix.reshape(rows, dim)
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate ids in embedding file")
    if not np.all(np.isfinite(matrix)):
        raise FormatError(f"{path}: embedding file contains NaN or Inf values")
    return VectorStore(ids, matrix)
