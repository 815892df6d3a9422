import json

import pytest

from mmkp import data as D
from mmkp.errors import ParseError, ValidationError

from conftest import tiny_posts


def test_normalize_tokens():
    raw = ["Hello", "WORLD", "http://x.co", "https://y.io/z", "www.site.com",
           "@user", "42", "it's", "::", D.URL]
    out = D.normalize_tokens(raw)
    assert out == ["hello", "world", D.URL, D.URL, D.URL, D.MENTION,
                   D.NUMBER, D.URL]


def test_normalize_idempotent():
    once = D.normalize_tokens(["Foo", "@bar", "7", "http://a.b"])
    assert D.normalize_tokens(once) == once


def _mini_post(pid, text, keyphrases, ocr=(), attrs=()):
    return D.Post(id=pid, text_tokens=list(text), ocr_tokens=list(ocr),
                  attribute_tokens=list(attrs), visual_features=None,
                  keyphrases=list(keyphrases))


def test_build_vocab_reserved_cap_and_ties():
    posts = [
        _mini_post("a", ["b", "b", "a", "c"], ["kp one"]),
        _mini_post("b", ["a", "c", "d"], ["zkp"]),
    ]
    vocab = D.build_vocab(posts, gen_cap=3)
    assert vocab.gen_tokens[:len(D.RESERVED)] == D.RESERVED
    # counts: a=2 b=2 c=2 d=1 kp=1 one=1 zkp=1; cap 3 keeps a,b,c (tie -> lexicographic)
    assert vocab.gen_tokens[len(D.RESERVED):] == ["a", "b", "c"]
    assert vocab.cls_labels == [D.UNSEEN_LABEL, "kp one", "zkp"]


def test_replication_and_unseen_handling():
    posts = [_mini_post("a", ["x"], ["alpha", "beta gamma"])]
    vocab = D.build_vocab(posts)
    instances = D.replicate_instances(posts, vocab, training=True)
    assert [i.target_tokens for i in instances] == [["alpha"], ["beta", "gamma"]]
    novel = [_mini_post("b", ["x"], ["delta"])]
    with pytest.raises(ValidationError):
        D.replicate_instances(novel, vocab, training=True)
    evaluated = D.replicate_instances(novel, vocab, training=False)
    assert vocab.cls_labels[evaluated[0].label_id] == D.UNSEEN_LABEL


def test_append_ocr_filters_oov():
    posts = [_mini_post("a", ["seen", "seen"], ["seen"])]
    vocab = D.build_vocab(posts)
    assert D.append_ocr(["t"], ["seen", "unseen"], vocab) == ["t", D.SEP, "seen"]
    assert D.append_ocr(["t"], ["unseen"], vocab) == ["t"]
    assert D.append_ocr(["t"], [], vocab) == ["t"]


def test_vocab_roundtrip_and_hashes(tmp_path):
    vocab = D.build_vocab(tiny_posts())
    path = tmp_path / "vocab.json"
    vocab.save(path)
    loaded = D.Vocabulary.load(path)
    assert loaded.gen_tokens == vocab.gen_tokens
    assert loaded.cls_labels == vocab.cls_labels
    assert loaded.hashes() == vocab.hashes()
    other = D.build_vocab(tiny_posts(seed=1))
    assert other.hashes() != vocab.hashes()


def test_load_dataset_strict_fields(tmp_path):
    path = tmp_path / "data.jsonl"
    good = {"id": "1", "text": ["a"], "ocr": [], "attributes": [],
            "keyphrases": ["k"]}
    path.write_text(json.dumps(good) + "\n")
    posts = D.load_dataset(path)
    assert posts[0].id == "1"

    bad = dict(good, extra=1)
    path.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n")
    with pytest.raises(ParseError) as err:
        D.load_dataset(path)
    assert "line 2" in str(err.value)

    del bad["extra"]
    del bad["text"]
    path.write_text(json.dumps(bad) + "\n")
    with pytest.raises(ParseError):
        D.load_dataset(path)

    path.write_text("{not json\n")
    with pytest.raises(ParseError):
        D.load_dataset(path)


def test_post_validation():
    with pytest.raises(ValidationError):
        _mini_post("a", [], ["k"]).validate()
    with pytest.raises(ValidationError):
        _mini_post("a", ["x"], []).validate()
    with pytest.raises(ValidationError):
        _mini_post("a", ["x"], ["k"], attrs=["1", "2", "3", "4", "5", "6"]).validate()
    ragged = _mini_post("a", ["x"], ["k"])
    ragged.visual_features = [[1.0, 2.0], [3.0]]
    with pytest.raises(ValidationError):
        ragged.validate()


def test_features_binary_roundtrip(tmp_path):
    mats = [[[1.5, -2.0], [0.0, 3.25]], [[4.0, 5.0], [6.0, 7.0]]]
    path = tmp_path / "feats.bin"
    D.write_features(path, mats)
    assert path.read_bytes()[:4] == b"MMKP"
    assert D.read_features(path) == mats
    with pytest.raises(ParseError):
        broken = tmp_path / "bad.bin"
        broken.write_bytes(b"XXXX" + path.read_bytes()[4:])
        D.read_features(broken)


def test_features_sidecar_attach(tmp_path):
    mats = [[[0.5, 0.5]], [[1.0, -1.0]]]
    feats = tmp_path / "feats.bin"
    D.write_features(feats, mats)
    lines = [json.dumps({"id": str(i), "text": ["a"], "ocr": [],
                         "attributes": [], "keyphrases": ["k"]})
             for i in range(2)]
    data = tmp_path / "data.jsonl"
    data.write_text("\n".join(lines) + "\n")
    posts = D.load_dataset(data, features_path=feats)
    assert posts[1].visual_features == mats[1]


def test_synth_corpus_deterministic(tmp_path):
    p1 = tmp_path / "a.jsonl"
    p2 = tmp_path / "b.jsonl"
    D.synth_corpus(12, 20, seed=3, out_path=p1)
    D.synth_corpus(12, 20, seed=3, out_path=p2)
    assert p1.read_bytes() == p2.read_bytes()
    posts = D.load_dataset(p1)
    assert len(posts) == 12
    kinds = {pid % 3: posts[pid] for pid in range(3)}
    assert kinds[0].keyphrases[0].startswith("trig")
    assert kinds[1].keyphrases[0].startswith("topic")
    assert kinds[2].keyphrases[0].startswith("ocr")
