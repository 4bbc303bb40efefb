"""Analyzer chain and stemmer tests.

The stemmer's expected values are the worked examples published with the
classic Porter algorithm, so they were produced independently of this
implementation.
"""

import pytest

from fullrank.analysis import AnalyzerConfig, analyze, porter_stem

# (word, stem) pairs from the algorithm's published step-by-step examples.
PORTER_REFERENCE = {
    "caresses": "caress", "ponies": "poni", "ties": "ti", "caress": "caress",
    "cats": "cat", "feed": "feed", "agreed": "agre", "plastered": "plaster",
    "bled": "bled", "motoring": "motor", "sing": "sing", "conflated": "conflat",
    "troubled": "troubl", "sized": "size", "hopping": "hop", "tanned": "tan",
    "falling": "fall", "hissing": "hiss", "fizzed": "fizz", "failing": "fail",
    "filing": "file", "happy": "happi", "sky": "sky", "relational": "relat",
    "conditional": "condit", "rational": "ration", "valenci": "valenc",
    "hesitanci": "hesit", "digitizer": "digit", "conformabli": "conform",
    "radicalli": "radic", "differentli": "differ", "vileli": "vile",
    "analogousli": "analog", "vietnamization": "vietnam",
    "predication": "predic", "operator": "oper", "feudalism": "feudal",
    "decisiveness": "decis", "hopefulness": "hope", "callousness": "callous",
    "formaliti": "formal", "sensitiviti": "sensit", "sensibiliti": "sensibl",
    "triplicate": "triplic", "formative": "form", "formalize": "formal",
    "electriciti": "electr", "electrical": "electr", "hopeful": "hope",
    "goodness": "good", "revival": "reviv", "allowance": "allow",
    "inference": "infer", "airliner": "airlin", "gyroscopic": "gyroscop",
    "adjustable": "adjust", "defensible": "defens", "irritant": "irrit",
    "replacement": "replac", "adjustment": "adjust", "dependent": "depend",
    "adoption": "adopt", "communism": "commun", "activate": "activ",
    "angulariti": "angular", "homologous": "homolog", "effective": "effect",
    "bowdlerize": "bowdler", "probate": "probat", "rate": "rate",
    "cease": "ceas", "controll": "control", "roll": "roll",
}


class TestPorterStemmer:
    def test_reference_vocabulary(self):
        mismatches = {
            w: (porter_stem(w), expected)
            for w, expected in PORTER_REFERENCE.items()
            if porter_stem(w) != expected
        }
        assert not mismatches

    def test_short_words_untouched(self):
        assert porter_stem("at") == "at"
        assert porter_stem("is") == "is"

    def test_double_l_reduction(self):
        assert porter_stem("install") == "instal"


class TestAnalyze:
    def test_empty_input(self):
        assert analyze("") == []

    def test_default_chain(self):
        assert analyze("The APT package") == ["apt", "packag"]

    def test_duplicates_preserved(self):
        assert analyze("install install") == ["instal", "instal"]

    def test_stopwords_removed(self):
        assert analyze("the of and") == []

    def test_deterministic(self):
        text = "Installing the Linux kernel on Ubuntu requires patience"
        assert analyze(text) == analyze(text)

    def test_idempotent_without_stemming(self):
        config = AnalyzerConfig(stemmer="none")
        tokens = analyze("Installing The Kernel packages quickly", config)
        rejoined = " ".join(tokens)
        assert analyze(rejoined, config) == tokens

    def test_no_lowercase_keeps_case(self):
        config = AnalyzerConfig(lowercase=False, stopwords=frozenset(), stemmer="none")
        assert analyze("The APT", config) == ["The", "APT"]

    def test_unknown_stemmer_rejected(self):
        with pytest.raises(ValueError):
            AnalyzerConfig(stemmer="snowball")
