import json
import os

import pytest
import yaml

from mmkp import data as D
from mmkp.cli import load_config, main
from mmkp.errors import ValidationError

TINY_YAML = {
    "model": {"d": 8, "d_e": 4, "enc_layers": 1, "heads": 2, "d_head": 4,
              "l_text": 1, "l_vis": 1, "l_attr": 1, "d_v": 4, "expected_l_v": 3,
              "top_k": 3, "max_decode_len": 3},
    "train": {"epochs": 2, "batch_size": 8, "lr": 0.005, "warm_up_epochs": 1,
              "patience": 5, "seed": 0},
    "data": {"gen_cap": 30},
    "decode": {"beam": 4, "max_len": 3},
}


def _write_config(tmp_path, train_path):
    config = json.loads(json.dumps(TINY_YAML))
    config["data"]["train"] = str(train_path)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(config))
    return path


@pytest.fixture
def corpus(tmp_path):
    path = tmp_path / "train.jsonl"
    D.synth_corpus(15, 20, seed=2, out_path=path)
    return path


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"model": {"bogus": 1}}))
    with pytest.raises(ValidationError):
        load_config(path)
    path.write_text(yaml.safe_dump({"mystery": {}}))
    with pytest.raises(ValidationError):
        load_config(path)


def test_load_config_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"model": {"d": 8}}))
    config = load_config(path, ["model.d=16", "train.lr=0.5"])
    assert config["model"]["d"] == 16
    assert config["train"]["lr"] == 0.5
    with pytest.raises(ValidationError):
        load_config(path, ["model.nope=1"])
    with pytest.raises(ValidationError):
        load_config(path, ["garbage"])


def test_synth_command(tmp_path):
    out = tmp_path / "synth.jsonl"
    assert main(["synth", "--n-posts", "6", "--output", str(out)]) == 0
    assert len(D.load_dataset(out)) == 6


def test_train_eval_predict_roundtrip(tmp_path, corpus, capsys):
    config = _write_config(tmp_path, corpus)
    out = tmp_path / "run"
    code = main(["train", "--config", str(config), "--out", str(out), "--quiet"])
    assert code == 0
    for artifact in ("model.ckpt", "vocab.json", "train_log.jsonl", "config.json"):
        assert (out / artifact).exists()
    log_lines = (out / "train_log.jsonl").read_text().splitlines()
    assert len(log_lines) == 2

    eval_config = yaml.safe_load(config.read_text())
    eval_config["data"]["test"] = str(corpus)
    config.write_text(yaml.safe_dump(eval_config))
    report_dir = tmp_path / "report"
    code = main(["eval", "--config", str(config), "--model-dir", str(out),
                 "--out", str(report_dir)])
    assert code == 0
    report = json.loads((report_dir / "report.json").read_text())
    assert 0.0 <= report["f1_at_1"] <= 1.0
    assert (report_dir / "predictions.jsonl").exists()
    assert "F1@1" in capsys.readouterr().out

    preds_path = tmp_path / "preds.jsonl"
    code = main(["predict", "--config", str(config), "--model-dir", str(out),
                 "--input", str(corpus), "--output", str(preds_path)])
    assert code == 0
    lines = [json.loads(x) for x in preds_path.read_text().splitlines()]
    assert len(lines) == 15
    assert set(lines[0]) == {"id", "keyphrases", "scores"}

    attn_path = tmp_path / "attn.jsonl"
    code = main(["export-attn", "--config", str(config), "--model-dir", str(out),
                 "--input", str(corpus), "--output", str(attn_path)])
    assert code == 0
    first = json.loads(attn_path.read_text().splitlines()[0])
    assert {"id", "source", "attention"} == set(first)
    assert first["attention"], "expected at least one attention record"
    weights = first["attention"][0]["weights"]
    assert abs(sum(weights) - 1.0) < 1e-5


def test_error_exit_codes(tmp_path, corpus):
    config = _write_config(tmp_path, corpus)
    # unknown override -> error exit, not a traceback
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "x"),
                 "--set", "model.bogus=1", "--quiet"]) == 1
    # missing data file
    bad = yaml.safe_load(config.read_text())
    bad["data"]["train"] = str(tmp_path / "missing.jsonl")
    config.write_text(yaml.safe_dump(bad))
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "y"),
                 "--quiet"]) == 1


def test_checkpoint_vocab_mismatch_refused(tmp_path, corpus):
    config = _write_config(tmp_path, corpus)
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(out),
                 "--quiet"]) == 0
    # retrain vocab on different data, then point eval at the stale checkpoint
    other_corpus = tmp_path / "other.jsonl"
    D.synth_corpus(15, 20, seed=9, out_path=other_corpus)
    other_vocab = D.build_vocab(D.load_dataset(other_corpus), gen_cap=30)
    other_vocab.save(out / "vocab.json")
    eval_config = yaml.safe_load(config.read_text())
    eval_config["data"]["test"] = str(corpus)
    config.write_text(yaml.safe_dump(eval_config))
    assert main(["eval", "--config", str(config), "--model-dir", str(out),
                 "--out", str(tmp_path / "rep")]) == 1


def test_train_determinism(tmp_path, corpus):
    config = _write_config(tmp_path, corpus)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["train", "--config", str(config), "--out", str(out1), "--quiet"]) == 0
    assert main(["train", "--config", str(config), "--out", str(out2), "--quiet"]) == 0
    assert (out1 / "train_log.jsonl").read_bytes() == (out2 / "train_log.jsonl").read_bytes()
    assert (out1 / "model.ckpt").read_bytes() == (out2 / "model.ckpt").read_bytes()
