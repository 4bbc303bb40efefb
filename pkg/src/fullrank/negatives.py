"""Negative sampling over the whole collection.

Strategies: uniform random, top of a sparse or dense ranking, negatives read
from a generated-responses file, plus modifiers:

* denoise(k, m): take the bottom m of the top-k ranking instead of the top m,
  so near-top candidates (the ones most likely to be unlabeled positives)
  never enter the training set;
* query_mode="last_utterance": retrieve with the final utterance only;
* subset_filter: drop candidates whose normalized text occurs verbatim
  inside the context, backfilling from deeper ranks.

Every context's draw is seeded by (run seed, context id), so sampling is
deterministic and independent of iteration order. The ground-truth response
is always excluded.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import AnalyzerConfig, analyze
from .corpus import (
    Collection,
    DatasetSplit,
    DialogueContext,
    ResponsePassage,
    concat_context,
)
from .dense import Encoder, VectorStore, dense_search, encode, fnv1a64
from .errors import IngestError, ValidationError
from .sparse import InvertedIndex, search

__all__ = [
    "SamplerSpec",
    "SampleSet",
    "sample",
    "ingest_generated",
    "export_annotation_sample",
    "union_collection",
    "write_sample_set",
    "read_sample_set",
]

logger = logging.getLogger(__name__)

SAMPLER_KINDS = ("random", "sparse_topk", "dense_topk", "generated_file", "composite")


@dataclass(frozen=True)
class SamplerSpec:
    """What to sample and how; recorded as provenance on every SampleSet."""

    kind: str
    seed: int = 0
    query_mode: str = "full_context"  # or "last_utterance"
    subset_filter: bool = False
    denoise: tuple[int, int] | None = None  # (list size k, keep m)
    corpus: str = "native"  # or "expanded"

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValidationError(f"unknown sampler kind: {self.kind!r}")
        if self.query_mode not in ("full_context", "last_utterance"):
            raise ValidationError(f"unknown query mode: {self.query_mode!r}")
        if self.denoise is not None:
            k, m = self.denoise
            if not k >= m >= 1:
                raise ValidationError("denoise requires k >= m >= 1")
            if self.kind not in ("sparse_topk", "dense_topk"):
                raise ValidationError("denoise applies to retrieval samplers only")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "query_mode": self.query_mode,
            "subset_filter": self.subset_filter,
            "denoise": list(self.denoise) if self.denoise else None,
            "corpus": self.corpus,
        }


@dataclass(frozen=True)
class SampleSet:
    """Sampled negatives per context, with ranks where retrieval produced them."""

    entries: dict[str, tuple[str, ...]]  # context id -> negative ids
    spec: SamplerSpec
    ranks: dict[str, tuple[int, ...]] = field(default_factory=dict)
    short_contexts: tuple[str, ...] = ()  # contexts whose list came up short

    def negatives(self, context_id: str) -> list[str]:
        return list(self.entries[context_id])

    def as_training_map(self) -> dict[str, list[str]]:
        return {cid: list(negs) for cid, negs in self.entries.items()}


def _context_rng(seed: int, context_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, fnv1a64(context_id)])


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.lower()).strip()


def _query_text(ctx: DialogueContext, query_mode: str) -> str:
    if query_mode == "last_utterance":
        return ctx.last_utterance.text
    return concat_context(ctx)


def _is_context_subset(candidate_text: str, context_norm: str) -> bool:
    cand = _normalize(candidate_text)
    return bool(cand) and cand in context_norm


def _retrieval_ranking(
    ctx: DialogueContext,
    spec: SamplerSpec,
    collection: Collection,
    index: InvertedIndex | None,
    store: VectorStore | None,
    encoder: Encoder | None,
    depth: int,
    config: AnalyzerConfig | None,
) -> list[str]:
    """Doc ids of the raw ranking (ground truth still included)."""
    query = _query_text(ctx, spec.query_mode)
    if spec.kind == "sparse_topk":
        if index is None:
            raise ValidationError("sparse_topk sampling requires an index")
        return search(index, query, k=depth, config=config).doc_ids()
    if spec.kind == "dense_topk":
        if store is None or encoder is None:
            raise ValidationError("dense_topk sampling requires a store and encoder")
        return dense_search(store, encode(encoder, query, config), k=depth).doc_ids()
    raise ValidationError(f"{spec.kind!r} is not a retrieval sampler")


def _top_m_negatives(
    ranking: list[str],
    truth: str,
    m: int,
    context_norm: str | None,
    collection: Collection,
) -> tuple[list[str], list[int]]:
    """First m eligible ids of a raw ranking, with their original ranks."""
    chosen: list[str] = []
    ranks: list[int] = []
    for position, doc_id in enumerate(ranking, start=1):
        if doc_id == truth:
            continue
        if context_norm is not None and _is_context_subset(
            collection[doc_id].text, context_norm
        ):
            continue
        chosen.append(doc_id)
        ranks.append(position)
        if len(chosen) == m:
            break
    return chosen, ranks


def _denoised_negatives(
    ranking: list[str], truth: str, k: int, m: int
) -> tuple[list[str], list[int]]:
    """Bottom m of the top-k window, with the ground truth cut out.

    When the ground truth sits inside the window, the window is extended by
    one rank past k when the ranking is deep enough, otherwise by one rank
    above the window; the replacement item leads the returned list.
    """
    k = min(k, len(ranking))
    window = list(range(k - m, k))  # 0-based positions of ranks k-m+1..k
    backfill: int | None = None
    truth_pos = ranking.index(truth) if truth in ranking else None
    if truth_pos is not None and truth_pos in window:
        window.remove(truth_pos)
        if k < len(ranking):
            backfill = k
        elif k - m - 1 >= 0:
            backfill = k - m - 1
    positions = ([backfill] if backfill is not None else []) + window
    return [ranking[p] for p in positions], [p + 1 for p in positions]


def sample(
    spec: SamplerSpec,
    split: DatasetSplit,
    collection: Collection,
    m: int,
    index: InvertedIndex | None = None,
    store: VectorStore | None = None,
    encoder: Encoder | None = None,
    config: AnalyzerConfig | None = None,
) -> SampleSet:
    """Draw m negatives per context according to the sampler spec.

    Shorter lists are produced (and flagged) only when the collection holds
    too few eligible candidates.
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    if spec.kind == "generated_file":
        raise ValidationError("generated_file sampling goes through ingest_generated")
    if spec.kind == "composite":
        raise ValidationError("composite sets are produced by ingest_generated")

    entries: dict[str, tuple[str, ...]] = {}
    ranks: dict[str, tuple[int, ...]] = {}
    short: list[str] = []
    all_ids = np.array(collection.ids(), dtype=object)

    for ctx, truth in split:
        if spec.kind == "random":
            rng = _context_rng(spec.seed, ctx.id)
            pool = all_ids[all_ids != truth]
            take = min(m, len(pool))
            drawn = rng.choice(pool, size=take, replace=False).tolist()
            if take < m:
                short.append(ctx.id)
            entries[ctx.id] = tuple(drawn)
            continue

        context_norm = _normalize(ctx.joined_text()) if spec.subset_filter else None
        if spec.denoise is not None:
            k, _m_kept = spec.denoise
            if k > len(collection):
                logger.warning(
                    "denoise k=%d exceeds collection size %d; clamped",
                    k,
                    len(collection),
                )
            depth = min(k + 1, len(collection))
            ranking = _retrieval_ranking(
                ctx, spec, collection, index, store, encoder, depth, config
            )
            negs, neg_ranks = _denoised_negatives(ranking, truth, min(k, len(ranking)), m)
        else:
            depth = min(m + 50, len(collection))
            while True:
                ranking = _retrieval_ranking(
                    ctx, spec, collection, index, store, encoder, depth, config
                )
                negs, neg_ranks = _top_m_negatives(
                    ranking, truth, m, context_norm, collection
                )
                if len(negs) == m or len(ranking) >= len(collection) or depth >= len(collection):
                    break
                depth = min(depth * 2, len(collection))
        if len(negs) < m:
            short.append(ctx.id)
        entries[ctx.id] = tuple(negs)
        ranks[ctx.id] = tuple(neg_ranks)

    if short:
        logger.warning("%d contexts received fewer than %d negatives", len(short), m)
    return SampleSet(entries=entries, spec=spec, ranks=ranks, short_contexts=tuple(short))


def ingest_generated(
    path: str | Path,
    split: DatasetSplit,
    collection: Collection,
    m: int = 10,
    seed: int = 0,
) -> tuple[SampleSet, Collection]:
    """Read generated responses and build a composite negative set.

    Generated texts become synthetic passages (ids prefixed ``gen:``) in the
    returned collection; each covered context gets its generations as
    negatives, backfilled to m with random draws. A generation whose text
    equals the context's ground-truth response is rejected as a suspected
    unlabeled positive. Unknown context ids are reported and skipped.
    """
    known = {ctx.id: truth for ctx, truth in split}
    generated: dict[str, list[str]] = {}
    passages: list[ResponsePassage] = list(collection)
    counter = 0
    skipped_unknown: list[str] = []
    rejected_duplicates: list[str] = []

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}: line {lineno}: invalid JSON ({exc.msg})")
            try:
                cid = obj["context_id"]
                text = obj["text"]
            except (KeyError, TypeError) as exc:
                raise IngestError(f"{path}: line {lineno}: missing field {exc}")
            if not isinstance(cid, str) or not isinstance(text, str):
                raise IngestError(f"{path}: line {lineno}: fields must be strings")
            if cid not in known:
                skipped_unknown.append(cid)
                continue
            if not text.strip():
                logger.warning("%s: line %d: empty generation skipped", path, lineno)
                continue
            truth_text = collection[known[cid]].text
            if _normalize(text) == _normalize(truth_text):
                rejected_duplicates.append(cid)
                logger.warning(
                    "generation for %r equals its ground truth; rejected as a "
                    "suspected false negative",
                    cid,
                )
                continue
            gen_id = f"gen:{counter:06d}"
            counter += 1
            passages.append(ResponsePassage(id=gen_id, text=text))
            generated.setdefault(cid, []).append(gen_id)

    if skipped_unknown:
        logger.warning(
            "%d generated entries referenced unknown contexts: %s",
            len(skipped_unknown),
            sorted(set(skipped_unknown))[:10],
        )

    augmented = Collection(passages)
    spec = SamplerSpec(kind="composite", seed=seed)
    all_ids = np.array(collection.ids(), dtype=object)
    entries: dict[str, tuple[str, ...]] = {}
    short: list[str] = []
    for ctx, truth in split:
        negs = list(generated.get(ctx.id, ()))[:m]
        need = m - len(negs)
        if need > 0:
            rng = _context_rng(seed, ctx.id)
            pool = all_ids[all_ids != truth]
            take = min(need, len(pool))
            negs.extend(rng.choice(pool, size=take, replace=False).tolist())
        if len(negs) < m:
            short.append(ctx.id)
        entries[ctx.id] = tuple(negs)
    return (
        SampleSet(entries=entries, spec=spec, short_contexts=tuple(short)),
        augmented,
    )


def union_collection(
    native: Collection, external: Collection, namespace: str = "ext"
) -> Collection:
    """Merge an external response corpus into the native one.

    External ids are namespaced so they can never shadow native ones.
    """
    passages = list(native)
    for p in external:
        passages.append(
            ResponsePassage(
                id=f"{namespace}:{p.id}", text=p.text, expansions=p.expansions
            )
        )
    return Collection(passages)


ANNOTATION_HEADER = (
    "dataset",
    "context_id",
    "context_text",
    "sampler",
    "negative_id",
    "negative_text",
    "relevance",
)


def export_annotation_sample(
    datasets: list[tuple[str, DatasetSplit, Collection]],
    samplers: list[tuple[str, dict[str, SampleSet]]],
    path: str | Path,
    contexts_per_dataset: int = 3,
    negs_per_context: int = 10,
    seed: int = 0,
) -> int:
    """Write the relevance-annotation worksheet; returns the data row count.

    ``samplers`` maps each sampler label to its SampleSets keyed by dataset
    name. The worksheet holds one row per (dataset, drawn context, sampler,
    negative), with an empty relevance column to be filled by annotators.
    Identical seeds produce byte-identical files.
    """
    rows: list[tuple[str, ...]] = []
    for ds_name, split, collection in datasets:
        rng = np.random.default_rng([seed, fnv1a64(ds_name)])
        if len(split) < contexts_per_dataset:
            raise ValidationError(
                f"dataset {ds_name!r} has only {len(split)} contexts, "
                f"need {contexts_per_dataset}"
            )
        picked = sorted(
            rng.choice(len(split), size=contexts_per_dataset, replace=False).tolist()
        )
        for idx in picked:
            ctx, _ = split.examples[idx]
            for sampler_name, sets_by_dataset in samplers:
                sample_set = sets_by_dataset.get(ds_name)
                if sample_set is None or ctx.id not in sample_set.entries:
                    raise ValidationError(
                        f"sampler {sampler_name!r} does not cover context "
                        f"{ctx.id!r} of dataset {ds_name!r}"
                    )
                negs = sample_set.entries[ctx.id]
                if len(negs) < negs_per_context:
                    raise ValidationError(
                        f"sampler {sampler_name!r} drew only {len(negs)} negatives "
                        f"for context {ctx.id!r}, need {negs_per_context}"
                    )
                for neg_id in negs[:negs_per_context]:
                    rows.append(
                        (
                            ds_name,
                            ctx.id,
                            ctx.joined_text(),
                            sampler_name,
                            neg_id,
                            collection[neg_id].text,
                            "",
                        )
                    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ANNOTATION_HEADER)
        writer.writerows(rows)
    return len(rows)


def write_sample_set(sample_set: SampleSet, path: str | Path) -> None:
    """Persist sampled negatives as JSONL, one context per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for cid, negs in sample_set.entries.items():
            ranks = sample_set.ranks.get(cid)
            negatives = []
            for i, neg_id in enumerate(negs):
                entry: dict = {"id": neg_id}
                if ranks is not None and i < len(ranks):
                    entry["rank"] = ranks[i]
                negatives.append(entry)
            fh.write(
                json.dumps(
                    {
                        "context_id": cid,
                        "negatives": negatives,
                        "sampler": sample_set.spec.to_dict(),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_sample_set(path: str | Path) -> SampleSet:
    entries: dict[str, tuple[str, ...]] = {}
    ranks: dict[str, tuple[int, ...]] = {}
    spec_dict: dict | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}: line {lineno}: invalid JSON ({exc.msg})")
            try:
                cid = obj["context_id"]
                negatives = obj["negatives"]
            except (KeyError, TypeError) as exc:
                raise IngestError(f"{path}: line {lineno}: missing field {exc}")
            if cid in entries:
                raise IngestError(f"{path}: line {lineno}: duplicate context {cid!r}")
            if not isinstance(negatives, list) or any(
                not isinstance(n, dict) or "id" not in n for n in negatives
            ):
                raise IngestError(
                    f"{path}: line {lineno}: negatives must be objects with an id"
                )
            entries[cid] = tuple(n["id"] for n in negatives)
            if negatives and all("rank" in n for n in negatives):
                ranks[cid] = tuple(int(n["rank"]) for n in negatives)
            if spec_dict is None:
                spec_dict = obj.get("sampler")
    if spec_dict is None:
        spec_dict = {"kind": "random"}
    denoise = spec_dict.get("denoise")
    spec = SamplerSpec(
        kind=spec_dict.get("kind", "random"),
        seed=spec_dict.get("seed", 0),
        query_mode=spec_dict.get("query_mode", "full_context"),
        subset_filter=spec_dict.get("subset_filter", False),
        denoise=tuple(denoise) if denoise else None,
        corpus=spec_dict.get("corpus", "native"),
    )
    return SampleSet(entries=entries, spec=spec, ranks=ranks)
