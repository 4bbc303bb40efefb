"""Shared fixtures: tiny corpora and randomized corpus generators."""

from __future__ import annotations

import numpy as np
import pytest

from fullrank.analysis import AnalyzerConfig
from fullrank.corpus import Collection, DatasetSplit, DialogueContext, ResponsePassage, Utterance


@pytest.fixture
def plain_analyzer():
    """No stopwords, no stemming: tokens survive analysis verbatim."""
    return AnalyzerConfig.plain()


def make_collection(texts: dict[str, str]) -> Collection:
    return Collection([ResponsePassage(id=i, text=t) for i, t in texts.items()])


def make_context(cid: str, *turns: tuple[str, str]) -> DialogueContext:
    utterances = tuple(
        Utterance(text=text, speaker=speaker, turn_index=i)
        for i, (speaker, text) in enumerate(turns)
    )
    return DialogueContext(id=cid, utterances=utterances)


def make_split(pairs: list[tuple[DialogueContext, str]]) -> DatasetSplit:
    return DatasetSplit(examples=tuple(pairs))


def random_token_corpus(
    rng: np.random.Generator,
    n_docs: int,
    vocab_size: int = 50,
    min_len: int = 2,
    max_len: int = 30,
) -> dict[str, str]:
    """Random documents over a small synthetic vocabulary."""
    vocab = [f"w{v}" for v in range(vocab_size)]
    docs = {}
    for d in range(n_docs):
        length = int(rng.integers(min_len, max_len + 1))
        words = rng.choice(vocab, size=length, replace=True)
        docs[f"d{d:04d}"] = " ".join(words.tolist())
    return docs
