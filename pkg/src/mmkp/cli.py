"""Command-line entry point: train, eval, predict, export-attn, synth.

Configuration comes from a YAML file with optional `--set section.key=value`
overrides; unknown keys are rejected. Every artifact directory receives the
fully resolved configuration for reproducibility.
"""

import argparse
import json
import os
import sys

import yaml

from . import __version__
from . import data as D
from . import evaluation as E
from .errors import MmkpError, ValidationError
from .model import Model, ModelConfig
from .training import TrainConfig, fit, load_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


DATA_KEYS = {"train", "val", "test", "features", "gen_cap", "embeddings"}
DECODE_KEYS = {"beam", "max_len", "a", "b"}


def _section_fields(cls):
    return set(cls.__dataclass_fields__)


def load_config(path, overrides=()):
    """Parse YAML into {model, train, data, decode} dicts, strictly."""
    raw = {}
    if path:
        with open(path, encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
        if not isinstance(raw, dict):
            raise ValidationError(f"{path}: config must be a mapping")
    allowed = {
        "model": _section_fields(ModelConfig),
        "train": _section_fields(TrainConfig),
        "data": DATA_KEYS,
        "decode": DECODE_KEYS,
    }
    unknown_sections = raw.keys() - allowed.keys()
    if unknown_sections:
        raise ValidationError(f"unknown config sections {sorted(unknown_sections)}")
    config = {name: dict(raw.get(name) or {}) for name in allowed}
    for name, keys in allowed.items():
        bad = config[name].keys() - keys
        if bad:
            raise ValidationError(f"unknown keys in [{name}]: {sorted(bad)}")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ValidationError(f"override must look like section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in allowed or key not in allowed[section]:
            raise ValidationError(f"unknown override target {dotted!r}")
        config[section][key] = yaml.safe_load(value)
    return config


def _coerced(cls, values):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ValidationError(f"bad config for {cls.__name__}: {exc}")


def resolved_config(model_cfg, train_cfg, data_cfg, decode_cfg):
    return {
        "model": model_cfg.to_dict(),
        "train": train_cfg.to_dict() if train_cfg else None,
        "data": data_cfg,
        "decode": decode_cfg,
        "version": __version__,
    }


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, ensure_ascii=False, sort_keys=True)
        f.write("\n")


def _decode_params(decode_cfg):
    return {
        "beam": int(decode_cfg.get("beam", 10)),
        "max_len": int(decode_cfg.get("max_len", 6)),
        "a": float(decode_cfg.get("a", 0.5)),
        "b": float(decode_cfg.get("b", 0.5)),
    }


def _load_posts(data_cfg, split, model_cfg):
    path = data_cfg.get(split)
    if not path:
        raise ValidationError(f"config data.{split} is required for this command")
    return D.load_dataset(path, features_path=data_cfg.get("features"),
                          expected_l_v=model_cfg.expected_l_v,
                          expected_d_v=model_cfg.d_v)


def _predict_all(model, posts, decode):
    out = []
    for post in posts:
        enc = model.encode(post)
        out.append(E.beam_search(model, enc, beam=decode["beam"],
                                 max_len=decode["max_len"],
                                 a=decode["a"], b=decode["b"]))
    return out


def _write_predictions(path, predictions):
    with open(path, "w", encoding="utf-8") as f:
        for p in predictions:
            f.write(json.dumps({"id": p.post_id, "keyphrases": p.keyphrases,
                                "scores": p.scores}, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_train(args):
    config = load_config(args.config, args.set or ())
    model_cfg = _coerced(ModelConfig, config["model"])
    train_cfg = _coerced(TrainConfig, config["train"])
    data_cfg = config["data"]
    os.makedirs(args.out, exist_ok=True)

    train_posts = _load_posts(data_cfg, "train", model_cfg)
    val_path = data_cfg.get("val")
    if val_path:
        val_posts = _load_posts(data_cfg, "val", model_cfg)
    else:
        # deterministic 90/10 tail split when no validation file is given
        cut = max(1, len(train_posts) // 10)
        val_posts = train_posts[-cut:]
        train_posts = train_posts[:-cut] or val_posts

    vocab = D.build_vocab(train_posts, gen_cap=int(data_cfg.get("gen_cap", 45000)))
    train_instances = D.replicate_instances(train_posts, vocab, training=True)
    val_instances = D.replicate_instances(val_posts, vocab, training=False)

    embedding_init = None
    if data_cfg.get("embeddings"):
        from .encoders import load_word_vectors
        embedding_init = load_word_vectors(
            data_cfg["embeddings"], vocab, model_cfg.d_e)

    model = Model(model_cfg, vocab, seed=train_cfg.seed,
                  embedding_init=embedding_init)
    vocab.save(os.path.join(args.out, "vocab.json"))
    _write_json(os.path.join(args.out, "config.json"),
                resolved_config(model_cfg, train_cfg, data_cfg, config["decode"]))

    def progress(rec):
        print(f"epoch {rec.epoch}: train {rec.train_loss:.4f} "
              f"val {rec.val_loss:.4f} lr {rec.lr:.6f} a={rec.a} b={rec.b}")

    result = fit(model, train_instances, val_instances, train_cfg,
                 log_path=os.path.join(args.out, "train_log.jsonl"),
                 checkpoint_path=os.path.join(args.out, "model.ckpt"),
                 progress=progress if not args.quiet else None)
    if result.best_epoch < 0:
        save_checkpoint(os.path.join(args.out, "model.ckpt"), model)
    if not args.quiet:
        print(f"best val loss {result.best_val_loss:.4f} at epoch {result.best_epoch}")
    return EXIT_OK


def _restore(args, config):
    model_cfg = _coerced(ModelConfig, config["model"])
    vocab = D.Vocabulary.load(os.path.join(args.model_dir, "vocab.json"))
    model = Model(model_cfg, vocab, seed=0)
    load_checkpoint(os.path.join(args.model_dir, "model.ckpt"), model)
    return model, model_cfg


def cmd_eval(args):
    config = load_config(args.config, args.set or ())
    model, model_cfg = _restore(args, config)
    posts = _load_posts(config["data"], "test", model_cfg)
    decode = _decode_params(config["decode"])
    predictions = _predict_all(model, posts, decode)

    training_counts = None
    if config["data"].get("train"):
        counts = {}
        for post in _load_posts(config["data"], "train", model_cfg):
            for kp in post.keyphrases:
                key = D.canonical_keyphrase(kp)
                counts[key] = counts.get(key, 0) + 1
        training_counts = counts

    report = E.evaluate(posts, predictions, training_counts=training_counts)
    os.makedirs(args.out, exist_ok=True)
    _write_predictions(os.path.join(args.out, "predictions.jsonl"), predictions)
    _write_json(os.path.join(args.out, "report.json"), report.to_json())
    _write_json(os.path.join(args.out, "config.json"),
                resolved_config(model_cfg, None, config["data"], decode))
    print(report.render_table())
    return EXIT_OK


def cmd_predict(args):
    config = load_config(args.config, args.set or ())
    model, model_cfg = _restore(args, config)
    posts = D.load_dataset(args.input, features_path=config["data"].get("features"),
                           expected_l_v=model_cfg.expected_l_v,
                           expected_d_v=model_cfg.d_v)
    decode = _decode_params(config["decode"])
    predictions = _predict_all(model, posts, decode)
    _write_predictions(args.output, predictions)
    return EXIT_OK


def cmd_export_attn(args):
    config = load_config(args.config, args.set or ())
    model, model_cfg = _restore(args, config)
    posts = D.load_dataset(args.input, features_path=config["data"].get("features"),
                           expected_l_v=model_cfg.expected_l_v,
                           expected_d_v=model_cfg.d_v)
    with open(args.output, "w", encoding="utf-8") as f:
        for post in posts:
            enc = model.encode(post)
            records = [{"direction": r["direction"], "layer": r["layer"],
                        "head": r["head"],
                        "weights": [float(x) for x in r["weights"].data]}
                       for r in enc.fused.records]
            f.write(json.dumps({"id": post.id, "source": enc.src_tokens,
                                "attention": records}, ensure_ascii=False) + "\n")
    return EXIT_OK


def cmd_synth(args):
    D.synth_corpus(args.n_posts, args.vocab_size, args.seed, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmkp",
        description="Cross-media keyphrase prediction: train, evaluate, predict.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_model_dir=False):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        if needs_model_dir:
            p.add_argument("--model-dir", required=True,
                           help="directory with model.ckpt and vocab.json")

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--out", required=True, help="artifact output directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the metric suite on a test split")
    common(p, needs_model_dir=True)
    p.add_argument("--out", required=True, help="report output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write ranked keyphrases for a dataset")
    common(p, needs_model_dir=True)
    p.add_argument("--input", required=True, help="JSONL dataset")
    p.add_argument("--output", required=True, help="predictions JSONL")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-attn", help="dump co-attention weights per post")
    common(p, needs_model_dir=True)
    p.add_argument("--input", required=True, help="JSONL dataset")
    p.add_argument("--output", required=True, help="attention JSONL")
    p.set_defaults(func=cmd_export_attn)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--n-posts", type=int, required=True)
    p.add_argument("--vocab-size", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except MmkpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
