"""Dialogue/response data model and dataset ingestion.

File formats (JSONL, UTF-8, one object per line):

* collection: ``{"id": str, "text": str, "expansions": [str, ...]?}``
* dialogues:  ``{"id": str, "utterances": [{"text": str, "speaker": str}, ...],
  "response_id": str}``

All values constructed here are immutable once built and safe to share
across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import IngestError

__all__ = [
    "Utterance",
    "DialogueContext",
    "ResponsePassage",
    "Collection",
    "DatasetSplit",
    "UTTERANCE_SEP",
    "TURN_SEP",
    "concat_context",
    "ingest_collection",
    "ingest_dialogues",
    "write_collection",
    "write_dialogues",
]

SPEAKER_ROLES = ("seeker", "responder")

# Separator tokens marking utterance ends and speaker turns in the
# concatenated context string consumed by encoders and retrievers.
UTTERANCE_SEP = "[U]"
TURN_SEP = "[T]"


@dataclass(frozen=True)
class Utterance:
    """One utterance of a dialogue, with its speaker role and turn index."""

    text: str
    speaker: str
    turn_index: int

    def __post_init__(self):
        if self.speaker not in SPEAKER_ROLES:
            raise ValueError(f"unknown speaker role: {self.speaker!r}")
        if self.turn_index < 0:
            raise ValueError("turn_index must be non-negative")


@dataclass(frozen=True)
class DialogueContext:
    """The query side of retrieval: the utterances of one conversation so far."""

    id: str
    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        if len(self.utterances) < 1:
            raise ValueError(f"context {self.id!r} has no utterances")
        indices = [u.turn_index for u in self.utterances]
        if any(b < a for a, b in zip(indices, indices[1:])):
            raise ValueError(f"context {self.id!r} has decreasing turn indices")

    @property
    def last_utterance(self) -> Utterance:
        return self.utterances[-1]

    def joined_text(self) -> str:
        """Utterance texts joined by single spaces, without separator tokens."""
        return " ".join(u.text for u in self.utterances)


@dataclass(frozen=True)
class ResponsePassage:
    """A candidate response, optionally augmented with expansion strings."""

    id: str
    text: str
    expansions: tuple[str, ...] = ()

    def indexed_text(self) -> str:
        """The text an index sees: original text followed by all expansions."""
        if not self.expansions:
            return self.text
        return " ".join((self.text, *self.expansions))


class Collection:
    """Immutable id-addressed set of response passages.

    Iteration order is the order passages were added (file order for
    ingested collections); that order also defines vector-store row order.
    """

    def __init__(self, passages: list[ResponsePassage]):
        self._by_id: dict[str, ResponsePassage] = {}
        for p in passages:
            if p.id in self._by_id:
                raise IngestError(f"duplicate response id: {p.id!r}")
            self._by_id[p.id] = p

    def __len__(self) -> int:
        return len(self._by_id)

    def __contains__(self, response_id: str) -> bool:
        return response_id in self._by_id

    def __iter__(self) -> Iterator[ResponsePassage]:
        return iter(self._by_id.values())

    def __getitem__(self, response_id: str) -> ResponsePassage:
        return self._by_id[response_id]

    def ids(self) -> list[str]:
        return list(self._by_id.keys())

    def get(self, response_id: str) -> ResponsePassage | None:
        return self._by_id.get(response_id)


@dataclass(frozen=True)
class DatasetSplit:
    """Labeled examples: one dialogue context paired with its true response id."""

    examples: tuple[tuple[DialogueContext, str], ...]

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[tuple[DialogueContext, str]]:
        return iter(self.examples)

    def context_ids(self) -> list[str]:
        return [ctx.id for ctx, _ in self.examples]


def concat_context(context: DialogueContext) -> str:
    """Flatten a dialogue context into one string with separator tokens.

    ``[U]`` terminates every utterance except the last; ``[T]`` additionally
    follows ``[U]`` wherever the speaker changes. A single utterance is
    returned as-is.
    """
    parts: list[str] = []
    utterances = context.utterances
    for i, utt in enumerate(utterances):
        parts.append(utt.text)
        if i + 1 < len(utterances):
            parts.append(UTTERANCE_SEP)
            if utterances[i + 1].speaker != utt.speaker:
                parts.append(TURN_SEP)
    return " ".join(parts)


def _read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (1-based line number, parsed object) pairs, skipping blank lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}: line {lineno}: invalid JSON ({exc.msg})")
            if not isinstance(obj, dict):
                raise IngestError(f"{path}: line {lineno}: expected an object")
            yield lineno, obj


def ingest_collection(
    path: str | Path,
    format: str = "jsonl",
    allow_empty: bool = False,
) -> Collection:
    """Load a response collection file.

    Empty response texts are rejected unless ``allow_empty`` is set;
    duplicate ids are always rejected.
    """
    if format != "jsonl":
        raise IngestError(f"unknown collection format: {format!r}")
    passages: list[ResponsePassage] = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(path):
        try:
            rid = obj["id"]
            text = obj["text"]
        except KeyError as exc:
            raise IngestError(f"{path}: line {lineno}: missing field {exc}")
        if not isinstance(rid, str) or not isinstance(text, str):
            raise IngestError(f"{path}: line {lineno}: id and text must be strings")
        expansions = obj.get("expansions", [])
        if not isinstance(expansions, list) or any(
            not isinstance(e, str) for e in expansions
        ):
            raise IngestError(
                f"{path}: line {lineno}: expansions must be an array of strings"
            )
        if rid in seen:
            raise IngestError(f"{path}: line {lineno}: duplicate response id {rid!r}")
        seen.add(rid)
        if not text.strip() and not allow_empty:
            raise IngestError(f"{path}: line {lineno}: empty response text ({rid!r})")
        passages.append(ResponsePassage(id=rid, text=text, expansions=tuple(expansions)))
    return Collection(passages)


def ingest_dialogues(path: str | Path, collection: Collection) -> DatasetSplit:
    """Load a dialogue split and verify every ground-truth link resolves."""
    examples: list[tuple[DialogueContext, str]] = []
    seen_ids: set[str] = set()
    dangling: list[str] = []
    for lineno, obj in _read_jsonl(path):
        try:
            cid = obj["id"]
            raw_utts = obj["utterances"]
            response_id = obj["response_id"]
        except KeyError as exc:
            raise IngestError(f"{path}: line {lineno}: missing field {exc}")
        if cid in seen_ids:
            raise IngestError(f"{path}: line {lineno}: duplicate context id {cid!r}")
        seen_ids.add(cid)
        if not isinstance(raw_utts, list) or not raw_utts:
            raise IngestError(
                f"{path}: line {lineno}: context {cid!r} must have at least one utterance"
            )
        utterances = []
        for turn, u in enumerate(raw_utts):
            try:
                utterances.append(
                    Utterance(text=u["text"], speaker=u["speaker"], turn_index=turn)
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"{path}: line {lineno}: bad utterance ({exc})")
        if response_id not in collection:
            dangling.append(response_id)
            continue
        examples.append((DialogueContext(id=cid, utterances=tuple(utterances)), response_id))
    if dangling:
        raise IngestError(
            f"{path}: response ids not in collection: {sorted(set(dangling))}"
        )
    return DatasetSplit(examples=tuple(examples))


def write_collection(collection: Collection, path: str | Path) -> None:
    """Serialize a collection back to JSONL (inverse of ingest_collection)."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in collection:
            obj: dict = {"id": p.id, "text": p.text}
            if p.expansions:
                obj["expansions"] = list(p.expansions)
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def write_dialogues(split: DatasetSplit, path: str | Path) -> None:
    """Serialize a dialogue split back to JSONL (inverse of ingest_dialogues)."""
    with open(path, "w", encoding="utf-8") as fh:
        for ctx, response_id in split:
            obj = {
                "id": ctx.id,
                "utterances": [
                    {"text": u.text, "speaker": u.speaker} for u in ctx.utterances
                ],
                "response_id": response_id,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
