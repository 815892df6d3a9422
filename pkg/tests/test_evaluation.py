import json
import os
from fractions import Fraction

import numpy as np
import pytest

from mmkp import data as D
from mmkp import evaluation as E

from conftest import tiny_model

FIXTURE = os.path.join(os.path.dirname(__file__), "fixtures", "metrics_fixture.json")


def load_fixture():
    with open(FIXTURE, encoding="utf-8") as f:
        obj = json.load(f)
    posts = [D.Post(id=p["id"], text_tokens=p["text"], ocr_tokens=[],
                    attribute_tokens=[], visual_features=None,
                    keyphrases=p["golds"]) for p in obj["posts"]]
    predictions = [E.PredictionList(post_id=p["id"], keyphrases=p["preds"],
                                    scores=[-float(i) for i in range(len(p["preds"]))])
                   for p in obj["posts"]]
    expected = {k: float(Fraction(v)) for k, v in obj["expected"].items()}
    return posts, predictions, expected


def test_metric_fixture_exact():
    posts, predictions, expected = load_fixture()
    report = E.evaluate(posts, predictions)
    assert abs(report.f1_at_1 - expected["f1_at_1"]) < 1e-9
    assert abs(report.f1_at_3 - expected["f1_at_3"]) < 1e-9
    assert abs(report.map_at_5 - expected["map_at_5"]) < 1e-9
    assert abs(report.present_f1_at_1 - expected["present_f1_at_1"]) < 1e-9
    assert abs(report.absent_recall_at_5 - expected["absent_recall_at_5"]) < 1e-9


def test_stemmed_matching():
    assert E.match("cats", "cat")
    assert E.match("machine learning", "machines learning")
    assert not E.match("machine", "machine learning")
    assert not E.match("dog", "cat")


def test_one_to_one_matching_with_duplicate_golds():
    flags = E._greedy_match(["dog", "dogs", "dog"], ["dog"])
    assert flags == [True, False, False]


def test_f1_edge_cases():
    assert E.f1_single([], ["gold"], 1) == 0.0
    assert E.f1_single(["gold"], ["gold"], 3) == 1.0  # P uses min(K, |preds|)
    with pytest.raises(ValueError):
        E.f1_single(["x"], [], 1)


def test_ap_at_5_partial():
    # hit at ranks 1 and 3 with two golds: (1/1 + 2/3) / 2
    score = E.ap_at_5(["a", "x", "b"], ["a", "b"])
    assert abs(score - (1 + 2 / 3) / 2) < 1e-12


def test_present_absent_split_uses_text_not_ocr():
    post = D.Post(id="p", text_tokens=["running", "shoes"], ocr_tokens=["hidden"],
                  attribute_tokens=[], visual_features=None,
                  keyphrases=["run shoe", "hidden"])
    present, absent = E.split_present_absent(post)
    assert present == ["run shoe"]
    assert absent == ["hidden"]


def test_frequency_and_length_buckets():
    posts, predictions, _ = load_fixture()
    counts = {"cat": 5, "machine learning": 50, "alpha": 500, "beta": 500,
              "gamma": 5000}
    report = E.evaluate(posts, predictions, training_counts=counts)
    assert set(report.freq_buckets) == {"[0,10)", "[10,100)", "[100,1000)", "[1000,inf)"}
    assert set(report.length_buckets) == {"<15"}
    long_post = D.Post(id="L", text_tokens=["w"] * 40, ocr_tokens=[],
                       attribute_tokens=[], visual_features=None, keyphrases=["w"])
    report2 = E.evaluate([long_post],
                         [E.PredictionList(post_id="L", keyphrases=["w"], scores=[0.0])])
    assert report2.length_buckets == {">35": 1.0}


def test_beam_search_returns_ranked_deduped(float64):
    model, vocab, posts = tiny_model()
    enc = model.encode(posts[0])
    result = E.beam_search(model, enc, beam=5, max_len=3)
    assert result.post_id == posts[0].id
    assert len(result.keyphrases) == len(result.scores)
    assert result.scores == sorted(result.scores, reverse=True)
    stems = [E.stem_phrase(p) for p in result.keyphrases]
    assert len(stems) == len(set(stems))


def test_beam_matches_exhaustive_small(float64):
    model, vocab, posts = tiny_model(seed=11)
    enc = model.encode(posts[1])
    best_seq, best_score = E.exhaustive_best(model, enc, max_len=2)
    result = E.beam_search(model, enc, beam=enc.ext.size + 1, max_len=2)
    top_tokens = result.keyphrases[0].split()
    expected_tokens = [enc.ext.token_string(i, vocab) for i in best_seq]
    assert top_tokens == expected_tokens
    assert abs(result.scores[0] - best_score) < 1e-9
