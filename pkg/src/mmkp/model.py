"""The unified predictor: keyphrase classifier over the fused context,
attention-equipped GRU decoder with a copy mechanism, and the aggregation that
mixes generation, source-copy, and classifier-output probabilities."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import data as D
from .attention import AttentionConfig, FusionModule
from .encoders import AttributeEncoder, TextEncoder, VisualProjection
from .errors import ContractError
from .params import ParamStore


@dataclass
class ModelConfig:
    d: int = 300            # model / hidden dimension
    d_e: int = 200          # embedding dimension
    enc_layers: int = 2
    heads: int = 4
    d_head: int = 64
    l_text: int = 4
    l_vis: int = 1
    l_attr: int = 1
    ffn_inner: int | None = None
    d_v: int = 512          # raw visual feature width
    expected_l_v: int | None = None
    top_k: int = 5          # classifier predictions aggregated into the copy path
    max_decode_len: int = 6

    def attention(self):
        return AttentionConfig(self.heads, self.d_head, self.l_text,
                               self.l_vis, self.l_attr, self.ffn_inner)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class ClassifierOutput:
    logits: object          # Tensor over cls vocab
    p_cls: object           # softmax of logits
    topk_ids: list          # label ids, best first (reserved unseen excluded)
    w_tokens: list          # flattened token sequences of the top-K labels
    beta: object            # Tensor (l_w,) word-level copy distribution, or None


@dataclass
class ExtendedVocab:
    """Per-instance extended vocabulary: generation vocab plus slots for
    out-of-vocabulary tokens seen in the source or the classifier output."""

    gen_size: int
    oov_tokens: list
    oov_index: dict
    src_ext_ids: np.ndarray
    w_ext_ids: np.ndarray

    @property
    def src_slot_set(self):
        return set(int(i) for i in self.src_ext_ids)

    @property
    def w_slot_set(self):
        return set(int(i) for i in self.w_ext_ids)

    @property
    def size(self):
        return self.gen_size + len(self.oov_tokens)

    def token_string(self, ext_id, vocab):
        if ext_id < self.gen_size:
            return vocab.gen_tokens[ext_id]
        return self.oov_tokens[ext_id - self.gen_size]


@dataclass
class EncodedPost:
    post: object
    src_tokens: list
    bank: object            # Tensor l_x x d
    last_state: object      # Tensor (d,)
    fused: object           # FusedContext
    cls: ClassifierOutput
    ext: ExtendedVocab


@dataclass
class DecoderState:
    s: object               # Tensor (d,)
    alpha: object = None    # Tensor (l_x,)
    lam: object = None      # Tensor (1,)
    p_gen: object = None    # Tensor over the generation vocab


class Model:
    def __init__(self, config: ModelConfig, vocab, seed=0, embedding_init=None,
                 init_scale=0.1):
        self.config = config
        self.vocab = vocab
        d, d_e = config.d, config.d_e
        c_dim = d_e + d + d
        self.store = ParamStore(seed=seed, init_scale=init_scale)
        self.emb = self.store.add("emb", (vocab.gen_size, d_e))
        if embedding_init is not None:
            self.emb.data = np.asarray(embedding_init, dtype=ad.get_default_dtype())
        self.text_encoder = TextEncoder(self.store, d, d_e, config.enc_layers)
        self.visual_projection = VisualProjection(self.store, config.d_v, d)
        self.attribute_encoder = AttributeEncoder(self.store, d_e, d)
        self.fusion = FusionModule(self.store, d, config.attention())
        # two-layer MLP classifier on c_fuse
        self.cls_w1 = self.store.add("cls.w1", (d, d))
        self.cls_b1 = self.store.add("cls.b1", (d,), zero=True)
        self.cls_w2 = self.store.add("cls.w2", (d, vocab.cls_size))
        self.cls_b2 = self.store.add("cls.b2", (vocab.cls_size,), zero=True)
        # decoder GRU and its text attention
        self.dec_wx = self.store.add("dec.wx", (d_e, 3 * d))
        self.dec_wh = self.store.add("dec.wh", (d, 3 * d))
        self.dec_b = self.store.add("dec.b", (3 * d,), zero=True)
        self.att_w = self.store.add("att.w", (2 * d, d))
        self.att_b = self.store.add("att.b", (d,), zero=True)
        self.att_v = self.store.add("att.v", (d,))
        # generation MLP and the copy switch
        self.gen_w1 = self.store.add("gen.w1", (c_dim, d))
        self.gen_b1 = self.store.add("gen.b1", (d,), zero=True)
        self.gen_w2 = self.store.add("gen.w2", (d, vocab.gen_size))
        self.gen_b2 = self.store.add("gen.b2", (vocab.gen_size,), zero=True)
        self.sw_w = self.store.add("sw.w", (c_dim, 1))
        self.sw_b = self.store.add("sw.b", (1,), zero=True)

        self._bos = vocab.gen_index[D.BOS]
        self._eos = vocab.gen_index[D.EOS]
        self._unk = vocab.gen_index[D.UNK]

    # ------------------------------------------------------------------ encode

    def encode(self, post, cls_logit_offset=None):
        """Run encoders, fusion, and the classifier for one post."""
        src_tokens = D.append_ocr(post.text_tokens, post.ocr_tokens, self.vocab)
        ids = self.vocab.encode(src_tokens)
        embedded = ad.embed(self.emb, ids)
        bank, last = self.text_encoder(embedded)
        vis_bank = None
        if post.visual_features is not None:
            vis_bank = self.visual_projection(post.visual_features)
        attr_bank = None
        if post.attribute_tokens:
            attr_bank = self.attribute_encoder(
                self.emb, self.vocab.encode(post.attribute_tokens))
        fused = self.fusion(bank, vis_bank, attr_bank)
        cls = self.classify(fused.c_fuse, logit_offset=cls_logit_offset)
        ext = self._build_ext(src_tokens, cls.w_tokens)
        return EncodedPost(post=post, src_tokens=src_tokens, bank=bank.matrix,
                           last_state=last, fused=fused, cls=cls, ext=ext)

    def classify(self, c_fuse, logit_offset=None):
        logits = ad.affine(ad.tanh(ad.affine(c_fuse, self.cls_w1, self.cls_b1)),
                           self.cls_w2, self.cls_b2)
        if logit_offset is not None:
            logits = ad.add(logits, ad.constant(logit_offset))
        p_cls = ad.softmax(logits)
        # rank by logit, ties to the lower label id; the reserved unseen
        # label never participates in aggregation
        raw = logits.data
        candidates = [i for i in range(len(raw)) if self.vocab.cls_labels[i] != D.UNSEEN_LABEL]
        candidates.sort(key=lambda i: (-raw[i], i))
        topk = candidates[: self.config.top_k]
        w_tokens = []
        parents = []
        for rank, label_id in enumerate(topk):
            toks = self.vocab.cls_labels[label_id].split()
            w_tokens.extend(toks)
            parents.extend([rank] * len(toks))
        beta = None
        if w_tokens:
            p_top = ad.softmax(ad.gather_vec(logits, topk))
            pre = ad.gather_vec(p_top, parents)
            beta = ad.div(pre, ad.sum_all(pre))
        return ClassifierOutput(logits=logits, p_cls=p_cls, topk_ids=topk,
                                w_tokens=w_tokens, beta=beta)

    def _build_ext(self, src_tokens, w_tokens):
        oov_tokens = []
        oov_index = {}
        def ext_id(tok):
            gid = self.vocab.gen_index.get(tok)
            if gid is not None:
                return gid
            if tok not in oov_index:
                oov_index[tok] = self.vocab.gen_size + len(oov_tokens)
                oov_tokens.append(tok)
            return oov_index[tok]
        src_ext = np.array([ext_id(t) for t in src_tokens], dtype=np.intp)
        w_ext = np.array([ext_id(t) for t in w_tokens], dtype=np.intp)
        return ExtendedVocab(gen_size=self.vocab.gen_size, oov_tokens=oov_tokens,
                             oov_index=oov_index, src_ext_ids=src_ext, w_ext_ids=w_ext)

    # ------------------------------------------------------------------ decode

    def init_decoder(self, enc):
        """s_0 is the encoder's last hidden state, no projection."""
        return DecoderState(s=enc.last_state)

    def decode_step(self, enc, prev_token_id, state, a, b):
        """One teacher-forced or search step; returns (new state, P_unf)."""
        if state is None:
            raise ContractError("decoder not initialized; call init_decoder first")
        u_mat = ad.embed(self.emb, [prev_token_id])
        hs = ad.gru_seq(u_mat, state.s, self.dec_wx, self.dec_wh, self.dec_b)
        s_t = ad.row(hs, 0)
        u = ad.row(u_mat, 0)
        l_x = enc.bank.data.shape[0]
        cat = ad.concat([ad.tile_rows(s_t, l_x), enc.bank], axis=1)
        scores = ad.matvec(ad.tanh(ad.linear_rows(cat, self.att_w, self.att_b)),
                           self.att_v)
        alpha = ad.softmax(scores)
        c_text = ad.vecmat(alpha, enc.bank)
        c_t = ad.concat([u, s_t, ad.add(c_text, enc.fused.c_fuse)])
        hidden = ad.tanh(ad.affine(c_t, self.gen_w1, self.gen_b1))
        p_gen = ad.softmax(ad.affine(hidden, self.gen_w2, self.gen_b2))
        lam = ad.sigmoid(ad.affine(c_t, self.sw_w, self.sw_b))
        p_unf = self.unify(p_gen, lam, alpha, enc, a, b)
        return DecoderState(s=s_t, alpha=alpha, lam=lam, p_gen=p_gen), p_unf

    def unify(self, p_gen, lam, alpha, enc, a, b):
        """P_unf = lam * P_gen + (1-lam) * (a * copy(source) + b * copy(classifier)).

        With b=0 the classifier term is skipped entirely, which makes the
        reduction to the plain pointer-generator form exact. If the classifier
        produced no tokens, its share folds into the source-copy path so the
        distribution still sums to one.
        """
        if abs(a + b - 1.0) > 1e-9 or a < 0 or b < 0:
            raise ContractError(f"aggregation coefficients must satisfy a+b=1, a,b>=0; got a={a}, b={b}")
        n = enc.ext.size
        if b != 0.0 and enc.cls.beta is None:
            a, b = 1.0, 0.0
        copy_term = ad.scatter_sum(alpha, enc.ext.src_ext_ids, n)
        if a != 1.0:
            copy_term = ad.smul(copy_term, a)
        if b != 0.0:
            cls_term = ad.smul(ad.scatter_sum(enc.cls.beta, enc.ext.w_ext_ids, n), b)
            copy_term = ad.add(copy_term, cls_term)
        one_minus = ad.add(1.0, ad.smul(lam, -1.0))
        return ad.add(ad.mul(lam, ad.pad_to(p_gen, n)), ad.mul(one_minus, copy_term))

    def target_ext_id(self, enc, token, b=1.0):
        """Where the loss reads the target's probability: generation slot,
        copy slot, or unk when the extended vocabulary misses it entirely.

        A slot that is only reachable through the classifier copy path carries
        zero probability while b=0, so such targets also fall back to unk."""
        gid = self.vocab.gen_index.get(token)
        if gid is not None:
            return gid
        eid = enc.ext.oov_index.get(token)
        if eid is not None:
            if eid in enc.ext.src_slot_set:
                return eid
            if b != 0.0 and eid in enc.ext.w_slot_set:
                return eid
        return self._unk

    def sequence_loss(self, enc, target_tokens, a, b):
        """Teacher-forced negative log-likelihood of target ++ <eos>."""
        targets = list(target_tokens) + [D.EOS]
        inputs = [self._bos] + [self.vocab.gen_id(t) for t in target_tokens]
        state = self.init_decoder(enc)
        total = None
        step_dists = []
        for prev_id, tgt in zip(inputs, targets):
            state, p_unf = self.decode_step(enc, prev_id, state, a, b)
            step_dists.append(p_unf)
            term = ad.log(ad.gather(p_unf, self.target_ext_id(enc, tgt, b)))
            total = term if total is None else ad.add(total, term)
        return ad.smul(total, -1.0), step_dists

    def classification_loss(self, enc, label_id):
        """-log P_cls(label); None for the reserved unseen label (masked)."""
        if self.vocab.cls_labels[label_id] == D.UNSEEN_LABEL:
            return None
        return ad.smul(ad.log(ad.gather(enc.cls.p_cls, label_id)), -1.0)

    def instance_loss(self, instance, gamma, a, b, cls_logit_offset=None):
        enc = self.encode(instance.post, cls_logit_offset=cls_logit_offset)
        seq, _ = self.sequence_loss(enc, instance.target_tokens, a, b)
        cls = self.classification_loss(enc, instance.label_id)
        if gamma != 1.0:
            seq = ad.smul(seq, gamma)
        return seq if cls is None else ad.add(cls, seq)
