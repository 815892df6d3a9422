"""Beam-search inference and the keyphrase metric protocol: Porter-stemmed
matching, macro F1@K, MAP@5, present/absent splits, frequency and length
buckets."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import data as D
from .stemming import porter_stem


@dataclass
class PredictionList:
    post_id: str
    keyphrases: list   # ranked, best first, stem-deduplicated
    scores: list       # length-normalized log-probabilities, non-increasing


@dataclass
class EvalReport:
    f1_at_1: float
    f1_at_3: float
    map_at_5: float
    present_f1_at_1: float | None
    absent_recall_at_5: float | None
    freq_buckets: dict = field(default_factory=dict)
    length_buckets: dict = field(default_factory=dict)
    n_posts: int = 0

    def to_json(self):
        return {
            "f1_at_1": self.f1_at_1,
            "f1_at_3": self.f1_at_3,
            "map_at_5": self.map_at_5,
            "present_f1_at_1": self.present_f1_at_1,
            "absent_recall_at_5": self.absent_recall_at_5,
            "freq_buckets": self.freq_buckets,
            "length_buckets": self.length_buckets,
            "n_posts": self.n_posts,
        }

    def render_table(self):
        lines = [f"{'metric':24s} value",
                 f"{'F1@1':24s} {self.f1_at_1:.4f}",
                 f"{'F1@3':24s} {self.f1_at_3:.4f}",
                 f"{'MAP@5':24s} {self.map_at_5:.4f}"]
        if self.present_f1_at_1 is not None:
            lines.append(f"{'present F1@1':24s} {self.present_f1_at_1:.4f}")
        if self.absent_recall_at_5 is not None:
            lines.append(f"{'absent recall@5':24s} {self.absent_recall_at_5:.4f}")
        for name, table in (("freq", self.freq_buckets), ("len", self.length_buckets)):
            for bucket, value in table.items():
                lines.append(f"{name + ' ' + bucket:24s} {value:.4f}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Matching


def stem_phrase(phrase):
    if isinstance(phrase, str):
        phrase = phrase.split()
    return tuple(porter_stem(t) for t in phrase)


def match(pred, gold):
    """True iff the stemmed token sequences are identical."""
    return stem_phrase(pred) == stem_phrase(gold)


# ---------------------------------------------------------------------------
# Beam search


@dataclass
class _Hyp:
    ext_ids: tuple
    logp: float
    steps: int
    state: object
    finished: bool

    @property
    def mean_logp(self):
        return self.logp / max(self.steps, 1)


def beam_search(model, enc, beam=10, max_len=6, a=0.5, b=0.5):
    """Ranked keyphrase list for one encoded post.

    Standard beam over the unified distribution with mean-log-prob length
    normalization (applied to partial hypotheses as well, so the final ranking
    criterion also drives pruning). Finished hypotheses are retained; the
    output is stem-deduplicated keeping the best-scoring surface form.
    """
    eos = model.vocab.gen_index[D.EOS]
    bos = model.vocab.gen_index[D.BOS]
    init = model.init_decoder(enc)
    live = [_Hyp(ext_ids=(), logp=0.0, steps=0, state=init, finished=False)]
    finished = []
    for _ in range(max_len):
        candidates = []
        for hyp in live:
            prev = hyp.ext_ids[-1] if hyp.ext_ids else None
            prev_gen = bos if prev is None else _input_id(model, prev)
            state, p_unf = model.decode_step(enc, prev_gen, hyp.state, a, b)
            logp = np.log(np.maximum(p_unf.data, 1e-300))
            added = 0
            for ext_id in np.argsort(logp)[::-1]:
                # only the best `beam` continuations can survive pruning, but
                # the end token must always be scored
                if int(ext_id) != eos:
                    if added >= beam:
                        continue
                    added += 1
                new = _Hyp(ext_ids=hyp.ext_ids + (int(ext_id),),
                           logp=hyp.logp + float(logp[ext_id]),
                           steps=hyp.steps + 1, state=state,
                           finished=int(ext_id) == eos)
                if new.finished:
                    if len(new.ext_ids) > 1:  # an empty phrase is not a prediction
                        finished.append(new)
                else:
                    candidates.append(new)
        candidates.sort(key=lambda h: -h.mean_logp)
        live = candidates[:beam]
        if not live:
            break
    # hypotheses that hit max_len end without an eos factor
    finished.extend(live)
    finished.sort(key=lambda h: -h.mean_logp)

    post_id = enc.post.id
    seen = set()
    phrases, scores = [], []
    for hyp in finished:
        tokens = [enc.ext.token_string(i, model.vocab)
                  for i in hyp.ext_ids if i != eos]
        if not tokens:
            continue
        key = stem_phrase(tokens)
        if key in seen:
            continue
        seen.add(key)
        phrases.append(" ".join(tokens))
        scores.append(hyp.mean_logp)
        if len(phrases) >= beam:
            break
    return PredictionList(post_id=post_id, keyphrases=phrases, scores=scores)


def _input_id(model, ext_id):
    """Embedding id for the previously emitted token (unk for copy-only tokens)."""
    if ext_id < model.vocab.gen_size:
        return ext_id
    return model.vocab.gen_index[D.UNK]


def exhaustive_best(model, enc, max_len=3, a=0.5, b=0.5):
    """Brute-force argmax over every sequence up to max_len (oracle for tests)."""
    eos = model.vocab.gen_index[D.EOS]
    bos = model.vocab.gen_index[D.BOS]
    best = {"score": -math.inf, "seq": None}

    def recurse(prefix, logp, state):
        prev_gen = bos if not prefix else _input_id(model, prefix[-1])
        new_state, p_unf = model.decode_step(enc, prev_gen, state, a, b)
        lp = np.log(np.maximum(p_unf.data, 1e-300))
        for ext_id in range(len(lp)):
            if ext_id == eos and not prefix:
                continue  # empty sequence is not a candidate
            seq = prefix + (ext_id,)
            score = logp + float(lp[ext_id])
            if ext_id == eos or len(seq) == max_len:
                mean = score / len(seq)
                if mean > best["score"]:
                    best["score"] = mean
                    best["seq"] = seq if ext_id != eos else seq[:-1]
            if ext_id != eos and len(seq) < max_len:
                recurse(seq, score, new_state)

    recurse((), 0.0, model.init_decoder(enc))
    return best["seq"], best["score"]


# ---------------------------------------------------------------------------
# Metrics


def _greedy_match(preds, golds):
    """Each gold matches at most one prediction; returns matched flags per pred."""
    gold_stems = [stem_phrase(g) for g in golds]
    used = [False] * len(gold_stems)
    flags = []
    for p in preds:
        ps = stem_phrase(p)
        hit = False
        for gi, gs in enumerate(gold_stems):
            if not used[gi] and ps == gs:
                used[gi] = True
                hit = True
                break
        flags.append(hit)
    return flags


def f1_single(preds, golds, k):
    """Per-post F1 of the top-K predictions."""
    if not golds:
        raise ValueError("f1_single: empty gold set")
    top = preds[:k]
    if not top:
        return 0.0
    flags = _greedy_match(top, golds)
    matched = sum(flags)
    precision = matched / min(k, len(top))
    recall = matched / len(golds)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def f1_at_k(predictions, golds_per_post, k):
    """Corpus macro-average F1@K; posts with no golds are skipped."""
    scores = []
    for preds, golds in zip(predictions, golds_per_post):
        if not golds:
            continue
        scores.append(f1_single(preds, golds, k))
    return sum(scores) / len(scores) if scores else 0.0


def ap_at_5(preds, golds):
    """Average precision of the top five ranked predictions."""
    if not golds:
        return 0.0
    flags = _greedy_match(preds[:5], golds)
    hits = 0
    total = 0.0
    for rank, hit in enumerate(flags, start=1):
        if hit:
            hits += 1
            total += hits / rank
    return total / min(5, len(golds))


def map_at_5(predictions, golds_per_post):
    scores = [ap_at_5(p, g) for p, g in zip(predictions, golds_per_post) if g]
    return sum(scores) / len(scores) if scores else 0.0


def split_present_absent(post):
    """Present golds occur contiguously (stemmed) in the post text, OCR excluded."""
    text_stems = [porter_stem(t) for t in post.text_tokens]
    present, absent = [], []
    for gold in post.keyphrases:
        gs = list(stem_phrase(gold))
        n = len(gs)
        found = any(text_stems[i:i + n] == gs
                    for i in range(len(text_stems) - n + 1))
        (present if found else absent).append(gold)
    return present, absent


FREQ_EDGES = [(0, 10), (10, 100), (100, 1000), (1000, None)]
LEN_EDGES = [(None, 15), (15, 36), (36, None)]  # <15, 15-35, >35 tokens


def _freq_bucket(count):
    for lo, hi in FREQ_EDGES:
        if count >= lo and (hi is None or count < hi):
            return f"[{lo},{'inf' if hi is None else hi})"
    raise AssertionError


def _len_bucket(length):
    if length < 15:
        return "<15"
    if length <= 35:
        return "15-35"
    return ">35"


def evaluate(posts, predictions, training_counts=None):
    """Full metric suite. predictions: list of PredictionList aligned to posts;
    training_counts: keyphrase string -> training occurrence count."""
    preds = [p.keyphrases for p in predictions]
    golds = [list(p.keyphrases) for p in posts]

    report = EvalReport(
        f1_at_1=f1_at_k(preds, golds, 1),
        f1_at_3=f1_at_k(preds, golds, 3),
        map_at_5=map_at_5(preds, golds),
        present_f1_at_1=None,
        absent_recall_at_5=None,
        n_posts=len(posts),
    )

    present_scores = []
    absent_hits = absent_total = 0
    for post, plist in zip(posts, preds):
        present, absent = split_present_absent(post)
        if present:
            present_scores.append(f1_single(plist, present, 1))
        if absent:
            flags = _greedy_match(plist[:5], absent)
            absent_hits += sum(flags)
            absent_total += len(absent)
    if present_scores:
        report.present_f1_at_1 = sum(present_scores) / len(present_scores)
    if absent_total:
        report.absent_recall_at_5 = absent_hits / absent_total

    if training_counts is not None:
        by_bucket = {}
        for post, plist in zip(posts, preds):
            buckets = {_freq_bucket(training_counts.get(D.canonical_keyphrase(g), 0))
                       for g in post.keyphrases}
            for bucket in buckets:
                by_bucket.setdefault(bucket, []).append(f1_single(plist, post.keyphrases, 1))
        report.freq_buckets = {b: sum(v) / len(v) for b, v in sorted(by_bucket.items())}

    by_len = {}
    for post, plist in zip(posts, preds):
        bucket = _len_bucket(len(post.text_tokens))
        by_len.setdefault(bucket, []).append(f1_single(plist, post.keyphrases, 1))
    report.length_buckets = {b: sum(v) / len(v) for b, v in sorted(by_len.items())}
    return report
