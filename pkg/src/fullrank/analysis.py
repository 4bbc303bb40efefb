"""Text analysis: tokenization, stopword removal, Porter stemming.

The default chain (lowercase, classic English stopword list, Porter stemmer)
approximates what mainstream full-text search toolkits apply out of the box,
so indexes and queries built here behave like those produced by such tools.
Every step is configurable off.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

__all__ = ["AnalyzerConfig", "analyze", "porter_stem", "ENGLISH_STOPWORDS"]

# The 33-word list used by classic English analyzers.
ENGLISH_STOPWORDS: frozenset[str] = frozenset(
    [
        "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if",
        "in", "into", "is", "it", "no", "not", "of", "on", "or", "such",
        "that", "the", "their", "then", "there", "these", "they", "this",
        "to", "was", "will", "with",
    ]
)

_DEFAULT_TOKEN_PATTERN = r"[a-zA-Z0-9]+"


@dataclass(frozen=True)
class AnalyzerConfig:
    """Settings for the text analysis chain.

    Analysis is deterministic, and idempotent on already-analyzed token text
    when stemming is disabled.
    """

    lowercase: bool = True
    stopwords: frozenset[str] = ENGLISH_STOPWORDS
    stemmer: str = "porter"  # "porter" or "none"
    token_pattern: str = _DEFAULT_TOKEN_PATTERN

    def __post_init__(self):
        if self.stemmer not in ("porter", "none"):
            raise ValueError(f"unknown stemmer: {self.stemmer!r}")

    @classmethod
    def plain(cls) -> "AnalyzerConfig":
        """Whitespace-ish splitting only: no stopwords, no stemming."""
        return cls(stopwords=frozenset(), stemmer="none")


_PATTERN_CACHE: dict[str, re.Pattern] = {}


def _compiled(pattern: str) -> re.Pattern:
    pat = _PATTERN_CACHE.get(pattern)
    if pat is None:
        pat = _PATTERN_CACHE[pattern] = re.compile(pattern)
    return pat


def analyze(text: str, config: AnalyzerConfig | None = None) -> list[str]:
    """Split text into index terms: tokenize, lowercase, filter, stem.

    Duplicates are preserved; term frequency is the index's concern.
    Empty input yields an empty list.
    """
    config = config or AnalyzerConfig()
    tokens = _compiled(config.token_pattern).findall(text)
    if config.lowercase:
        tokens = [t.lower() for t in tokens]
    if config.stopwords:
        tokens = [t for t in tokens if t not in config.stopwords]
    if config.stemmer == "porter":
        tokens = [porter_stem(t) for t in tokens]
    return tokens


# ---------------------------------------------------------------------------
# Porter stemmer (classic 1980 algorithm).
#
# Letters are classified as consonants (c) or vowels (v); "y" is a vowel when
# preceded by a consonant. Every word then has the form [c*](v+c+){m}[v*] and
# m is the "measure" driving most rules below. Rules are applied in the
# fixed step order of the original algorithm, longest matching suffix first.
# ---------------------------------------------------------------------------

_VOWELS = "aeiou"


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Count vowel-consonant sequences in the stem."""
    m = 0
    prev_cons = True
    for i in range(len(stem)):
        cons = _is_consonant(stem, i)
        if cons and not prev_cons:
            m += 1
        prev_cons = cons
    return m


def _contains_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(word: str) -> bool:
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_consonant(word, len(word) - 1)
    )


def _ends_cvc(word: str) -> bool:
    """Consonant-vowel-consonant ending where the last letter is not w, x, y."""
    if len(word) < 3:
        return False
    return (
        _is_consonant(word, len(word) - 3)
        and not _is_consonant(word, len(word) - 2)
        and _is_consonant(word, len(word) - 1)
        and word[-1] not in "wxy"
    )


def _replace(word: str, suffix: str, replacement: str, min_measure: int) -> str | None:
    """Apply suffix rule if the remaining stem has measure > min_measure."""
    stem = word[: len(word) - len(suffix)]
    if _measure(stem) > min_measure:
        return stem + replacement
    return word  # matched but condition failed: stop scanning this step


_STEP2_RULES = (
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
)

_STEP3_RULES = (
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
)

_STEP4_SUFFIXES = (
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
)


def porter_stem(word: str) -> str:
    """Stem a single lowercase token with the classic Porter algorithm."""
    if len(word) <= 2:
        return word

    # Step 1a: plurals.
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies"):
        word = word[:-2]
    elif word.endswith("ss"):
        pass
    elif word.endswith("s"):
        word = word[:-1]

    # Step 1b: past tense / progressive.
    if word.endswith("eed"):
        if _measure(word[:-3]) > 0:
            word = word[:-1]
    else:
        fired = False
        if word.endswith("ed") and _contains_vowel(word[:-2]):
            word = word[:-2]
            fired = True
        elif word.endswith("ing") and _contains_vowel(word[:-3]):
            word = word[:-3]
            fired = True
        if fired:
            if word.endswith(("at", "bl", "iz")):
                word += "e"
            elif _ends_double_consonant(word) and word[-1] not in "lsz":
                word = word[:-1]
            elif _measure(word) == 1 and _ends_cvc(word):
                word += "e"

    # Step 1c: terminal y.
    if word.endswith("y") and _contains_vowel(word[:-1]):
        word = word[:-1] + "i"

    # Step 2: double suffixes, m > 0.
    for suffix, repl in _STEP2_RULES:
        if word.endswith(suffix):
            word = _replace(word, suffix, repl, 0)
            break

    # Step 3: -ic-, -full, -ness etc., m > 0.
    for suffix, repl in _STEP3_RULES:
        if word.endswith(suffix):
            word = _replace(word, suffix, repl, 0)
            break

    # Step 4: strip residual suffix when m > 1.
    for suffix in _STEP4_SUFFIXES:
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if suffix == "ion":
                if stem.endswith(("s", "t")) and _measure(stem) > 1:
                    word = stem
            elif _measure(stem) > 1:
                word = stem
            break

    # Step 5a: terminal e.
    if word.endswith("e"):
        stem = word[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            word = stem

    # Step 5b: -ll to -l for m > 1.
    if _measure(word) > 1 and _ends_double_consonant(word) and word.endswith("l"):
        word = word[:-1]

    return word
