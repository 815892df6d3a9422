import os

import pytest

from mmkp.stemming import porter_stem

FIXTURE = os.path.join(os.path.dirname(__file__), "fixtures", "porter_pairs.txt")


def test_reference_fixture_full_agreement():
    with open(FIXTURE, encoding="utf-8") as f:
        pairs = [line.split() for line in f if line.strip()]
    assert len(pairs) >= 100
    mismatches = [(w, e, porter_stem(w)) for w, e in pairs if porter_stem(w) != e]
    assert mismatches == []


@pytest.mark.parametrize("word,expected", [
    ("caresses", "caress"),
    ("ponies", "poni"),
    ("cats", "cat"),
    ("feed", "feed"),
    ("agreed", "agre"),
    ("plastered", "plaster"),
    ("motoring", "motor"),
    ("sing", "sing"),
    ("conflated", "conflat"),
    ("hopping", "hop"),
    ("falling", "fall"),
    ("filing", "file"),
    ("happy", "happi"),
    ("relational", "relat"),
    ("vietnamization", "vietnam"),
    ("triplicate", "triplic"),
    ("hopefulness", "hope"),
    ("formalize", "formal"),
    ("revival", "reviv"),
    ("adoption", "adopt"),
    ("probate", "probat"),
    ("rate", "rate"),
    ("controll", "control"),
    ("roll", "roll"),
])
def test_published_examples(word, expected):
    assert porter_stem(word) == expected


def test_short_and_nonalpha_unchanged():
    assert porter_stem("at") == "at"
    assert porter_stem("by") == "by"
    assert porter_stem("⟨url⟩") == "⟨url⟩"
    assert porter_stem("covid19") == "covid19"
