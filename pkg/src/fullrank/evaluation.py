"""Recall evaluation, re-ranking MAP, significance testing, run-file I/O.

Run files use the classic six-column interchange format::

    qid Q0 docid rank score tag

with ranks contiguous from 1 per query and scores non-increasing. Recall at
K is the fraction of queries whose ground-truth response appears in the top
K of the ranking over the whole collection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .corpus import DatasetSplit
from .errors import FormatError, ValidationError
from .sparse import ScoredList

__all__ = [
    "RunFile",
    "EvalReport",
    "SignificanceReport",
    "evaluate_full_rank",
    "rerank_map",
    "paired_ttest",
    "write_run",
    "read_run",
    "run_from_scored_lists",
]


@dataclass(frozen=True)
class RunFile:
    """Ranked results for a set of queries, ready for evaluation or export."""

    rankings: dict[str, tuple[tuple[str, float], ...]]  # qid -> (docid, score)
    tag: str = "fullrank"

    def __post_init__(self):
        for qid, entries in self.rankings.items():
            prev = None
            seen = set()
            for doc_id, score in entries:
                if doc_id in seen:
                    raise ValidationError(f"query {qid!r}: duplicate doc {doc_id!r}")
                seen.add(doc_id)
                if prev is not None and score > prev:
                    raise ValidationError(f"query {qid!r}: scores increase")
                prev = score


def run_from_scored_lists(lists: Iterable[ScoredList], tag: str = "fullrank") -> RunFile:
    rankings = {}
    for scored in lists:
        if scored.query_id in rankings:
            raise ValidationError(f"duplicate query id {scored.query_id!r}")
        rankings[scored.query_id] = scored.entries
    return RunFile(rankings=rankings, tag=tag)


@dataclass(frozen=True)
class EvalReport:
    """Recall at each K plus the per-query hit indicators behind it."""

    recall: dict[int, float]
    per_query_hits: dict[int, dict[str, int]]
    query_count: int

    def to_dict(self) -> dict:
        return {
            "query_count": self.query_count,
            "recall": {str(k): v for k, v in sorted(self.recall.items())},
        }


@dataclass(frozen=True)
class SignificanceReport:
    """Paired t-test outcome under a multiple-comparison corrected threshold."""

    label: str
    t_statistic: float
    p_value: float
    corrected_alpha: float
    significant: bool
    m_comparisons: int

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "t_statistic": self.t_statistic,
            "p_value": self.p_value,
            "corrected_alpha": self.corrected_alpha,
            "significant": self.significant,
            "m_comparisons": self.m_comparisons,
        }


def evaluate_full_rank(
    run: RunFile, split: DatasetSplit, k_set: Sequence[int] = (1, 10)
) -> EvalReport:
    """Recall at each K over the run's full-collection rankings."""
    if not k_set or any(k < 1 for k in k_set):
        raise ValidationError("k_set must hold positive integers")
    missing = [ctx.id for ctx, _ in split if ctx.id not in run.rankings]
    if missing:
        raise ValidationError(f"queries missing from run: {sorted(missing)}")
    per_query_hits: dict[int, dict[str, int]] = {k: {} for k in k_set}
    for ctx, truth in split:
        ranked_ids = [doc_id for doc_id, _ in run.rankings[ctx.id]]
        for k in k_set:
            per_query_hits[k][ctx.id] = 1 if truth in ranked_ids[:k] else 0
    recall = {
        k: sum(hits.values()) / len(split) for k, hits in per_query_hits.items()
    }
    return EvalReport(
        recall=recall, per_query_hits=per_query_hits, query_count=len(split)
    )


def rerank_map(ranked_labels: Sequence[Sequence[int]]) -> float:
    """MAP over candidate lists that each contain exactly one relevant item.

    With a single relevant candidate, per-query average precision reduces to
    the reciprocal of the relevant item's rank.
    """
    if not ranked_labels:
        raise ValidationError("no candidate lists given")
    total = 0.0
    for i, labels in enumerate(ranked_labels):
        relevant = [pos for pos, label in enumerate(labels, start=1) if label == 1]
        if len(relevant) != 1:
            raise ValidationError(
                f"list {i} has {len(relevant)} relevant items, expected exactly 1"
            )
        total += 1.0 / relevant[0]
    return total / len(ranked_labels)


def paired_ttest(
    metric_a: Sequence[float],
    metric_b: Sequence[float],
    confidence: float = 0.95,
    m_comparisons: int = 1,
    label: str = "",
) -> SignificanceReport:
    """Two-sided paired t-test with a multiple-comparison corrected alpha.

    Degenerate input (all per-query differences zero) leaves the statistic
    undefined; it is reported as t=0, p=1, not significant.
    """
    a = np.asarray(metric_a, dtype=float)
    b = np.asarray(metric_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("metric vectors must be 1-d and of equal length")
    if len(a) < 2:
        raise ValidationError("need at least 2 paired observations")
    if not 0 < confidence < 1:
        raise ValidationError("confidence must lie in (0, 1)")
    if m_comparisons < 1:
        raise ValidationError("m_comparisons must be positive")

    corrected_alpha = (1.0 - confidence) / m_comparisons
    diffs = a - b
    sd = diffs.std(ddof=1)
    if sd == 0.0:
        t_stat, p_value = 0.0, 1.0
    else:
        n = len(diffs)
        t_stat = float(diffs.mean() / (sd / math.sqrt(n)))
        p_value = float(2.0 * stats.t.sf(abs(t_stat), df=n - 1))
    return SignificanceReport(
        label=label,
        t_statistic=t_stat,
        p_value=p_value,
        corrected_alpha=corrected_alpha,
        significant=p_value < corrected_alpha,
        m_comparisons=m_comparisons,
    )


def write_run(run: RunFile, path: str | Path) -> None:
    """Write a run in the six-column format; floats keep full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for qid in run.rankings:
            for rank, (doc_id, score) in enumerate(run.rankings[qid], start=1):
                fh.write(f"{qid} Q0 {doc_id} {rank} {score!r} {run.tag}\n")


def read_run(path: str | Path) -> RunFile:
    """Parse a run file, checking rank contiguity and score ordering."""
    rankings: dict[str, list[tuple[str, float]]] = {}
    last_rank: dict[str, int] = {}
    last_score: dict[str, float] = {}
    tag = "fullrank"
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise FormatError(f"{path}: line {lineno}: expected 6 columns")
            qid, _, doc_id, rank_s, score_s, tag = parts
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: bad rank or score")
            expected = last_rank.get(qid, 0) + 1
            if rank != expected:
                raise FormatError(
                    f"{path}: line {lineno}: rank {rank} breaks contiguity "
                    f"(expected {expected})"
                )
            if qid in last_score and score > last_score[qid]:
                raise FormatError(f"{path}: line {lineno}: score inversion")
            last_rank[qid] = rank
            last_score[qid] = score
            rankings.setdefault(qid, []).append((doc_id, score))
    return RunFile(
        rankings={q: tuple(entries) for q, entries in rankings.items()}, tag=tag
    )
