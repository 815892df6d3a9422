"""Dataset loading, token normalization, vocabularies, and instance replication.

Wire format: one JSON object per line with fields exactly
{"id", "text", "ocr", "attributes", "visual_features"?, "keyphrases"}.
Visual features may alternatively live in a sidecar binary (magic "MMKP").
"""

import hashlib
import json
import math
import random
import struct
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

PAD = "⟨pad⟩"
BOS = "⟨bos⟩"
EOS = "⟨eos⟩"
UNK = "⟨unk⟩"
SEP = "⟨sep⟩"
URL = "⟨url⟩"
MENTION = "⟨mention⟩"
NUMBER = "⟨number⟩"
RESERVED = [PAD, BOS, EOS, UNK, SEP, URL, MENTION, NUMBER]

UNSEEN_LABEL = "⟨unseen⟩"

_PLACEHOLDERS = {URL, MENTION, NUMBER, SEP}


@dataclass
class Post:
    """One multimedia instance as loaded from the dataset."""

    id: str
    text_tokens: list
    ocr_tokens: list
    attribute_tokens: list
    visual_features: list | None  # l_v rows of d_v floats, or None
    keyphrases: list

    def validate(self, expected_l_v=None, expected_d_v=None):
        if len(self.text_tokens) < 1:
            raise ValidationError(f"post {self.id}: text must have >= 1 token")
        if len(self.attribute_tokens) > 5:
            raise ValidationError(f"post {self.id}: at most 5 attributes, got {len(self.attribute_tokens)}")
        if len(self.keyphrases) < 1:
            raise ValidationError(f"post {self.id}: needs >= 1 keyphrase")
        for kp in self.keyphrases:
            if not kp.split():
                raise ValidationError(f"post {self.id}: empty keyphrase")
        if self.visual_features is not None:
            rows = self.visual_features
            if not rows:
                raise ValidationError(f"post {self.id}: visual_features must be nonempty when present")
            width = len(rows[0])
            for r in rows:
                if len(r) != width:
                    raise ValidationError(f"post {self.id}: ragged visual_features")
                for v in r:
                    if not math.isfinite(v):
                        raise ValidationError(f"post {self.id}: non-finite visual feature")
            if expected_l_v is not None and len(rows) != expected_l_v:
                raise ValidationError(
                    f"post {self.id}: visual_features has {len(rows)} rows, config expects {expected_l_v}")
            if expected_d_v is not None and width != expected_d_v:
                raise ValidationError(
                    f"post {self.id}: visual_features width {width}, config expects {expected_d_v}")


@dataclass
class TrainingInstance:
    """One (post, keyphrase) pair after replication."""

    post: Post
    target_tokens: list
    label_id: int


@dataclass
class Vocabulary:
    gen_tokens: list = field(default_factory=list)
    gen_index: dict = field(default_factory=dict)
    cls_labels: list = field(default_factory=list)
    cls_index: dict = field(default_factory=dict)

    @property
    def gen_size(self):
        return len(self.gen_tokens)

    @property
    def cls_size(self):
        return len(self.cls_labels)

    def gen_id(self, token):
        return self.gen_index.get(token, self.gen_index[UNK])

    def encode(self, tokens):
        return [self.gen_id(t) for t in tokens]

    def decode(self, ids):
        return [self.gen_tokens[i] for i in ids]

    def label_id(self, keyphrase):
        return self.cls_index.get(keyphrase, self.cls_index[UNSEEN_LABEL])

    def to_json(self):
        return {"gen": self.gen_tokens, "cls": self.cls_labels}

    @classmethod
    def from_json(cls, obj):
        v = cls(gen_tokens=list(obj["gen"]), cls_labels=list(obj["cls"]))
        v.gen_index = {t: i for i, t in enumerate(v.gen_tokens)}
        v.cls_index = {t: i for i, t in enumerate(v.cls_labels)}
        return v

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, ensure_ascii=False)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))

    def hashes(self):
        """(gen, cls) content hashes used to pair checkpoints with vocabularies."""
        def h(items):
            digest = hashlib.sha256("\x00".join(items).encode("utf-8")).digest()
            return struct.unpack("<Q", digest[:8])[0]
        return h(self.gen_tokens), h(self.cls_labels)


def normalize_tokens(raw_tokens):
    """Lowercase, map URLs/mentions/digits to placeholders, drop non-alphabetic."""
    out = []
    for tok in raw_tokens:
        if tok in _PLACEHOLDERS:
            out.append(tok)
            continue
        low = tok.lower()
        if low.startswith(("http://", "https://", "www.")):
            out.append(URL)
        elif low.startswith("@") and len(low) > 1:
            out.append(MENTION)
        elif low.isdigit():
            out.append(NUMBER)
        elif low.isalpha():
            out.append(low)
        # anything else is noise and dropped
    return out


def build_vocab(posts, gen_cap=45000, min_count=1):
    """Frequency-ranked generation vocabulary plus the classification label set.

    gen_cap bounds the number of non-reserved tokens; reserved tokens are
    always present on top of it. Frequency ties break lexicographically so the
    result is deterministic.
    """
    if not posts:
        raise ValidationError("build_vocab: empty corpus")
    counts = {}
    labels = set()
    for post in posts:
        for tok in post.text_tokens + post.ocr_tokens + post.attribute_tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for kp in post.keyphrases:
            labels.add(canonical_keyphrase(kp))
            for tok in kp.split():
                counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(
        (t for t, c in counts.items() if c >= min_count and t not in RESERVED),
        key=lambda t: (-counts[t], t),
    )
    gen_tokens = RESERVED + ranked[:gen_cap]
    vocab = Vocabulary(gen_tokens=gen_tokens, cls_labels=[UNSEEN_LABEL] + sorted(labels))
    vocab.gen_index = {t: i for i, t in enumerate(vocab.gen_tokens)}
    vocab.cls_index = {t: i for i, t in enumerate(vocab.cls_labels)}
    return vocab


def canonical_keyphrase(kp):
    """Single-space-joined token form used as the classification label key."""
    return " ".join(kp.split())


def replicate_instances(posts, vocab, training=True):
    """One TrainingInstance per (post, keyphrase) pair.

    At training time a keyphrase missing from the label vocabulary is an
    error; at validation/test time it maps to the reserved unseen label so
    the classification loss can be masked.
    """
    instances = []
    for post in posts:
        for kp in post.keyphrases:
            key = canonical_keyphrase(kp)
            if key not in vocab.cls_index:
                if training:
                    raise ValidationError(f"post {post.id}: keyphrase {key!r} not in label vocabulary")
                label = vocab.cls_index[UNSEEN_LABEL]
            else:
                label = vocab.cls_index[key]
            instances.append(TrainingInstance(post=post, target_tokens=key.split(), label_id=label))
    return instances


def append_ocr(text_tokens, ocr_tokens, vocab=None):
    """text ++ [sep] ++ ocr, dropping OCR tokens absent from the generation vocab."""
    if vocab is not None:
        ocr_tokens = [t for t in ocr_tokens if t in vocab.gen_index]
    if not ocr_tokens:
        return list(text_tokens)
    return list(text_tokens) + [SEP] + list(ocr_tokens)


_FIELDS = {"id", "text", "ocr", "attributes", "visual_features", "keyphrases"}
_REQUIRED = {"id", "text", "ocr", "attributes", "keyphrases"}


def load_dataset(path, features_path=None, expected_l_v=None, expected_d_v=None):
    """Parse a JSONL dataset into validated Posts, order preserved."""
    sidecar = read_features(features_path) if features_path else None
    posts = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", line_no=line_no)
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line_no=line_no)
            missing = _REQUIRED - obj.keys()
            if missing:
                raise ParseError(f"missing fields {sorted(missing)}", line_no=line_no)
            unknown = obj.keys() - _FIELDS
            if unknown:
                raise ParseError(f"unknown fields {sorted(unknown)}", line_no=line_no)
            post = Post(
                id=str(obj["id"]),
                text_tokens=list(obj["text"]),
                ocr_tokens=list(obj["ocr"]),
                attribute_tokens=list(obj["attributes"]),
                visual_features=obj.get("visual_features"),
                keyphrases=list(obj["keyphrases"]),
            )
            if sidecar is not None and post.visual_features is None:
                idx = len(posts)
                if idx < len(sidecar):
                    post.visual_features = sidecar[idx]
            post.validate(expected_l_v=expected_l_v, expected_d_v=expected_d_v)
            posts.append(post)
    return posts


FEATURES_MAGIC = b"MMKP"


def write_features(path, matrices):
    """Sidecar visual-feature binary: magic, version, count, l_v, d_v, f32 LE data."""
    count = len(matrices)
    l_v = len(matrices[0]) if count else 0
    d_v = len(matrices[0][0]) if l_v else 0
    with open(path, "wb") as f:
        f.write(FEATURES_MAGIC)
        f.write(struct.pack("<IIII", 1, count, l_v, d_v))
        for mat in matrices:
            if len(mat) != l_v or any(len(r) != d_v for r in mat):
                raise ValidationError("write_features: all matrices must share l_v x d_v")
            for rw in mat:
                f.write(struct.pack(f"<{d_v}f", *rw))


def read_features(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != FEATURES_MAGIC:
            raise ParseError(f"bad magic {magic!r}, expected {FEATURES_MAGIC!r}")
        version, count, l_v, d_v = struct.unpack("<IIII", f.read(16))
        if version != 1:
            raise ParseError(f"unsupported feature file version {version}")
        out = []
        row_fmt = f"<{d_v}f"
        row_size = 4 * d_v
        for _ in range(count):
            mat = []
            for _ in range(l_v):
                raw = f.read(row_size)
                if len(raw) != row_size:
                    raise ParseError("truncated feature file")
                mat.append(list(struct.unpack(row_fmt, raw)))
            out.append(mat)
    return out


def synth_corpus(n_posts, vocab_size, seed, out_path,
                 l_v=3, d_v=4, n_topics=4, text_len=(5, 9)):
    """Write a deterministic synthetic corpus with three planted sub-populations.

    Posts cycle through: a trigger token in the text that is itself the
    keyphrase (unique per post, so it falls out of a capped vocabulary and
    must be copied); an attribute that maps to an absent "topic" keyphrase;
    and an OCR token that is the keyphrase. Identical seeds give
    byte-identical files.
    """
    if n_posts < 1:
        raise ValidationError("synth_corpus: n_posts must be >= 1")
    rng = random.Random(seed)
    fillers = [f"w{i}" for i in range(vocab_size)]
    lines = []
    for i in range(n_posts):
        kind = ("text", "attr", "ocr")[i % 3]
        n_text = rng.randint(*text_len)
        text = [rng.choice(fillers) for _ in range(n_text)]
        ocr = []
        attributes = [rng.choice(fillers) for _ in range(rng.randint(1, 2))]
        if kind == "text":
            trigger = f"trig{i}"
            text[rng.randrange(len(text))] = trigger
            keyphrase = trigger
        elif kind == "attr":
            k = rng.randrange(n_topics)
            attributes.append(f"attr{k}")
            keyphrase = f"topic{k}"
        else:
            k = rng.randrange(n_topics)
            ocr = [f"ocr{k}"]
            keyphrase = f"ocr{k}"
        feats = [[round(rng.uniform(-1.0, 1.0), 6) for _ in range(d_v)] for _ in range(l_v)]
        lines.append(json.dumps({
            "id": f"synth-{i}",
            "text": text,
            "ocr": ocr,
            "attributes": attributes,
            "visual_features": feats,
            "keyphrases": [keyphrase],
        }, ensure_ascii=False))
    with open(out_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return out_path
