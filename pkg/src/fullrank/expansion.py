"""Query expansion via pseudo-relevance feedback and response expansion.

Query side: :func:`rm3_expand` interpolates the original query's term
distribution with a feedback distribution built from the top-ranked
documents of a first retrieval pass.

Document side: :func:`attach_expansions` appends externally generated
context predictions to responses before indexing; :func:`expansion_stats`
summarizes what the augmentation did (lengths, fraction of novel words).
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .analysis import analyze
from .corpus import Collection, DatasetSplit, ResponsePassage
from .errors import IngestError, ValidationError
from .sparse import InvertedIndex, WeightedQuery, search

__all__ = [
    "Rm3Config",
    "ExpansionStats",
    "AttachReport",
    "rm3_expand",
    "attach_expansions",
    "expansion_stats",
    "MAX_PREDICTIONS",
]

logger = logging.getLogger(__name__)

# Expansion files carry at most this many predictions per response.
MAX_PREDICTIONS = 5


@dataclass(frozen=True)
class Rm3Config:
    """Pseudo-relevance feedback settings.

    ``orig_weight`` interpolates between the original query (1.0) and the
    feedback term distribution (0.0).
    """

    fb_terms: int = 10
    fb_docs: int = 10
    orig_weight: float = 0.5

    def __post_init__(self):
        if self.fb_terms < 1 or self.fb_docs < 1:
            raise ValidationError("fb_terms and fb_docs must be positive")
        if not 0.0 <= self.orig_weight <= 1.0:
            raise ValidationError("orig_weight must be in [0, 1]")

    @staticmethod
    def grid() -> list["Rm3Config"]:
        """The full hyperparameter grid swept by the harness."""
        return [
            Rm3Config(fb_terms=t, fb_docs=d, orig_weight=w)
            for t in (5, 10, 15)
            for d in (5, 10, 15)
            for w in (0.5, 0.7)
        ]


@dataclass(frozen=True)
class ExpansionStats:
    """Whitespace-token statistics of a response-expansion pass."""

    avg_context_len: float
    avg_response_len: float
    avg_expansion_len: float
    pct_new_words: float


@dataclass(frozen=True)
class AttachReport:
    """Outcome of attaching an expansion file to a collection."""

    attached: int
    unmatched_ids: tuple[str, ...]


def rm3_expand(
    index: InvertedIndex,
    context_text: str,
    cfg: Rm3Config,
    first_pass_k: int | None = None,
) -> WeightedQuery:
    """Expand a query with terms from pseudo-relevant feedback documents.

    The first retrieval pass fetches ``first_pass_k`` documents (default
    ``max(fb_docs, 100)``); the top ``fb_docs`` of those act as feedback.
    Feedback term weights are ``sum_d tf(t, d) / |d| * w(d)`` where ``w(d)``
    is the document's min-shifted, sum-normalized retrieval score (uniform
    when all scores are equal). The top ``fb_terms`` feedback terms are
    kept, renormalized, and interpolated with the normalized original query
    term frequencies at ``orig_weight``.

    An empty first pass returns the original query unchanged with
    ``fallback_reason`` set.
    """
    if first_pass_k is None:
        first_pass_k = max(cfg.fb_docs, 100)
    if first_pass_k < cfg.fb_docs:
        raise ValidationError("first_pass_k must be >= fb_docs")

    query_tf = Counter(analyze(context_text, index.analyzer))
    if not query_tf:
        raise ValidationError("context analyzes to no terms")
    if cfg.orig_weight == 1.0:
        # The feedback share is exactly zero: return the query's own term
        # frequencies so scores match the unexpanded query bit-for-bit.
        return WeightedQuery(weights={t: float(c) for t, c in query_tf.items()})
    total_q = sum(query_tf.values())
    orig = {t: c / total_q for t, c in query_tf.items()}

    first_pass = search(index, context_text, k=first_pass_k)
    feedback = first_pass.entries[: cfg.fb_docs]
    if not feedback:
        logger.warning("first pass retrieved nothing; query left unexpanded")
        return WeightedQuery(weights=dict(orig), fallback_reason="empty first pass")

    scores = [score for _, score in feedback]
    min_score = min(scores)
    shifted = [s - min_score for s in scores]
    total = sum(shifted)
    if total > 0:
        doc_weights = [s / total for s in shifted]
    else:
        doc_weights = [1.0 / len(feedback)] * len(feedback)

    fb_weights: dict[str, float] = {}
    for (doc_id, _), dw in zip(feedback, doc_weights):
        if dw == 0.0:
            continue
        doc_len = index.doc_lengths[doc_id]
        if doc_len == 0:
            continue
        for term, tf in index.doc_terms(doc_id).items():
            fb_weights[term] = fb_weights.get(term, 0.0) + dw * tf / doc_len

    kept = sorted(fb_weights.items(), key=lambda item: (-item[1], item[0]))
    kept = kept[: cfg.fb_terms]
    fb_total = sum(w for _, w in kept)

    final: dict[str, float] = {}
    for term, weight in orig.items():
        final[term] = cfg.orig_weight * weight
    if fb_total > 0:
        for term, weight in kept:
            final[term] = final.get(term, 0.0) + (1.0 - cfg.orig_weight) * (
                weight / fb_total
            )
    final = {t: w for t, w in final.items() if w > 0}
    return WeightedQuery(weights=final)


def _load_expansion_file(path: str | Path) -> dict[str, list[str]]:
    predictions: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}: line {lineno}: invalid JSON ({exc.msg})")
            try:
                rid = obj["id"]
                preds = obj["predictions"]
            except (KeyError, TypeError) as exc:
                raise IngestError(f"{path}: line {lineno}: missing field {exc}")
            if not isinstance(preds, list) or any(
                not isinstance(p, str) for p in preds
            ):
                raise IngestError(
                    f"{path}: line {lineno}: predictions must be an array of strings"
                )
            if len(preds) > MAX_PREDICTIONS:
                raise IngestError(
                    f"{path}: line {lineno}: at most {MAX_PREDICTIONS} predictions allowed"
                )
            if rid in predictions:
                raise IngestError(f"{path}: line {lineno}: duplicate id {rid!r}")
            predictions[rid] = preds
    return predictions


def attach_expansions(
    collection: Collection, expansion_file: str | Path
) -> tuple[Collection, AttachReport]:
    """Append predictions from an expansion file to their responses.

    Original passage texts are never modified. Ids present in the file but
    absent from the collection are collected into the report rather than
    failing the run. Re-attaching onto passages that already carry
    expansions is rejected so a file cannot be applied twice.
    """
    predictions = _load_expansion_file(expansion_file)
    unmatched = sorted(set(predictions) - set(collection.ids()))
    for rid, preds in predictions.items():
        if preds and rid in collection and collection[rid].expansions:
            raise ValidationError(
                f"expansions already present on response {rid!r}; refusing to re-attach"
            )
    attached = 0
    passages = []
    for passage in collection:
        preds = predictions.get(passage.id)
        if preds:
            passages.append(
                ResponsePassage(
                    id=passage.id,
                    text=passage.text,
                    expansions=passage.expansions + tuple(preds),
                )
            )
            attached += 1
        else:
            passages.append(passage)
    if unmatched:
        logger.warning("%d expansion ids not found in collection", len(unmatched))
    return Collection(passages), AttachReport(
        attached=attached, unmatched_ids=tuple(unmatched)
    )


def _whitespace_tokens(text: str) -> list[str]:
    return text.lower().split()


def expansion_stats(
    split: DatasetSplit,
    collection_before: Collection,
    collection_after: Collection,
) -> ExpansionStats:
    """Summarize an augmentation pass at the whitespace-token level.

    ``pct_new_words`` is the fraction of expansion tokens that do not occur
    in their response's original token set, pooled over all augmented
    responses.
    """
    before_ids = set(collection_before.ids())
    after_ids = set(collection_after.ids())
    if before_ids != after_ids:
        raise ValidationError("collections do not share the same response ids")

    context_lens = [
        len(_whitespace_tokens(ctx.joined_text())) for ctx, _ in split
    ]
    response_lens = [
        len(_whitespace_tokens(p.text)) for p in collection_before
    ]

    expansion_lens: list[int] = []
    new_tokens = 0
    total_tokens = 0
    for after in collection_after:
        before = collection_before[after.id]
        added = after.expansions[len(before.expansions):]
        if not added:
            continue
        original_vocab = set(_whitespace_tokens(before.text))
        tokens = [t for chunk in added for t in _whitespace_tokens(chunk)]
        expansion_lens.append(len(tokens))
        total_tokens += len(tokens)
        new_tokens += sum(1 for t in tokens if t not in original_vocab)

    def mean(values) -> float:
        values = list(values)
        return sum(values) / len(values) if values else 0.0

    return ExpansionStats(
        avg_context_len=mean(context_lens),
        avg_response_len=mean(response_lens),
        avg_expansion_len=mean(expansion_lens),
        pct_new_words=(new_tokens / total_tokens) if total_tokens else 0.0,
    )
