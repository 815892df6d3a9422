"""Cross-modality multi-head attention: pairwise co-attention stacks between a
pooled modality query and another modality's memory bank, fused into one
context vector."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, EmptyBankError


@dataclass
class AttentionConfig:
    heads: int = 4
    d_head: int = 64
    l_text: int = 4     # layers for text-query stacks
    l_vis: int = 1      # layers for the vision-query stack
    l_attr: int = 1     # layers for the attribute-query stack
    ffn_inner: int | None = None  # defaults to 2d


@dataclass
class FusedContext:
    c_fuse: object  # Tensor (d,)
    records: list = field(default_factory=list)  # attention-weight export


def scaled_dot_attention(q, k, v):
    """softmax(Q K^T / sqrt(d_K)) V; returns (output, weights)."""
    if k.data.shape[0] == 0:
        raise EmptyBankError("scaled_dot_attention: empty key/value bank")
    if q.data.shape[1] != k.data.shape[1]:
        raise DimensionError(
            f"scaled_dot_attention: query width {q.data.shape} vs key {k.data.shape}")
    scores = ad.smul(ad.matmul(q, _transpose(k)), 1.0 / math.sqrt(k.data.shape[1]))
    weights = ad.softmax(scores, axis=-1)
    return ad.matmul(weights, v), weights


def _transpose(x):
    """Matrix transpose as a primitive (backward is transpose again)."""
    data = x.data.T.copy()

    def build(out):
        def backward(g):
            x.accumulate(g.T)
        return backward

    return ad._emit(data, (x,), build)


class MultiHeadAttention:
    """Per-head d -> d_head projections, scaled-dot per head, concat, output
    projection back to d. Query here is a single pooled vector."""

    def __init__(self, store, d, heads, d_head, prefix):
        self.heads = heads
        self.proj = []
        for h in range(heads):
            self.proj.append((
                store.add(f"{prefix}.h{h}.wq", (d, d_head)),
                store.add(f"{prefix}.h{h}.wk", (d, d_head)),
                store.add(f"{prefix}.h{h}.wv", (d, d_head)),
            ))
        self.wo = store.add(f"{prefix}.wo", (heads * d_head, d))

    def __call__(self, query_vec, bank):
        """query_vec (d,), bank (L x d) -> (output (d,), per-head weight tensors)."""
        if bank.data.shape[0] == 0:
            raise EmptyBankError("multi_head: empty memory bank")
        head_outs = []
        head_weights = []
        d_head = self.proj[0][0].data.shape[1]
        scale = 1.0 / math.sqrt(d_head)
        for wq, wk, wv in self.proj:
            qh = ad.affine(query_vec, wq, _zero_like(wq))
            kh = ad.matmul(bank, wk)
            vh = ad.matmul(bank, wv)
            scores = ad.smul(ad.matvec(kh, qh), scale)
            alpha = ad.softmax(scores)
            head_outs.append(ad.vecmat(alpha, vh))
            head_weights.append(alpha)
        out = ad.vecmat(ad.concat(head_outs), self.wo)
        return out, head_weights


def _zero_like(w):
    return ad.constant(np.zeros(w.data.shape[1], dtype=w.data.dtype))


class CoAttentionStack:
    """L layers refining a pooled query against a fixed key/value bank.

    Per layer: q <- LN(q + MultiHead(q, M, M)); q <- LN(q + FFN(q)), with a
    two-layer position-wise feedforward (ReLU, inner width ffn_inner)."""

    def __init__(self, store, d, heads, d_head, layers, ffn_inner, pool_mode, prefix):
        self.pool_mode = pool_mode
        self.layers = []
        self.prefix = prefix
        for i in range(layers):
            p = f"{prefix}.l{i}"
            self.layers.append({
                "mh": MultiHeadAttention(store, d, heads, d_head, f"{p}.mh"),
                "ln1_g": store.add(f"{p}.ln1.g", (d,), zero=True),
                "ln1_b": store.add(f"{p}.ln1.b", (d,), zero=True),
                "ffn_w1": store.add(f"{p}.ffn.w1", (d, ffn_inner)),
                "ffn_b1": store.add(f"{p}.ffn.b1", (ffn_inner,), zero=True),
                "ffn_w2": store.add(f"{p}.ffn.w2", (ffn_inner, d)),
                "ffn_b2": store.add(f"{p}.ffn.b2", (d,), zero=True),
                "ln2_g": store.add(f"{p}.ln2.g", (d,), zero=True),
                "ln2_b": store.add(f"{p}.ln2.b", (d,), zero=True),
            })
        # layer-norm gains start at 1 (stored zero + 1 offset keeps uniform init elsewhere)
        for layer in self.layers:
            layer["ln1_g"].data += 1.0
            layer["ln2_g"].data += 1.0

    def __call__(self, query_bank, kv_bank):
        """Returns (refined query vector (d,), weight records)."""
        q = ad.pool(query_bank.matrix, self.pool_mode)
        records = []
        for i, layer in enumerate(self.layers):
            mh_out, head_weights = layer["mh"](q, kv_bank.matrix)
            q = ad.layer_norm(ad.add(q, mh_out), layer["ln1_g"], layer["ln1_b"])
            inner = ad.relu(ad.affine(q, layer["ffn_w1"], layer["ffn_b1"]))
            f = ad.affine(inner, layer["ffn_w2"], layer["ffn_b2"])
            q = ad.layer_norm(ad.add(q, f), layer["ln2_g"], layer["ln2_b"])
            for h, alpha in enumerate(head_weights):
                records.append({"direction": self.prefix.rsplit(".", 1)[-1],
                                "layer": i, "head": h,
                                "weights": alpha})
        return q, records


class FusionModule:
    """Four direction stacks (text->vis, text->attr, vis->text, attr->text)
    summed through one linear fusion layer into c_fuse."""

    DIRECTIONS = ("text2vis", "text2attr", "vis2text", "attr2text")

    def __init__(self, store, d, config: AttentionConfig, prefix="m3h"):
        ffn_inner = config.ffn_inner or 2 * d
        mk = lambda layers, pool_mode, name: CoAttentionStack(
            store, d, config.heads, config.d_head, layers, ffn_inner, pool_mode,
            f"{prefix}.{name}")
        # layer count is indexed by the query modality; text queries pool with
        # max, vision/attribute queries with average
        self.stacks = {
            "text2vis": mk(config.l_text, "max", "text2vis"),
            "text2attr": mk(config.l_text, "max", "text2attr"),
            "vis2text": mk(config.l_vis, "avg", "vis2text"),
            "attr2text": mk(config.l_attr, "avg", "attr2text"),
        }
        self.wf = store.add(f"{prefix}.fuse.w", (d, d))
        self.bf = store.add(f"{prefix}.fuse.b", (d,), zero=True)

    def __call__(self, text_bank, vis_bank, attr_bank):
        outs = []
        records = []
        pairs = {
            "text2vis": (text_bank, vis_bank),
            "text2attr": (text_bank, attr_bank),
            "vis2text": (vis_bank, text_bank),
            "attr2text": (attr_bank, text_bank),
        }
        for name in self.DIRECTIONS:
            query_bank, kv_bank = pairs[name]
            if query_bank is None or kv_bank is None:
                continue  # absent modality: stack skipped, contributes zero
            vec, recs = self.stacks[name](query_bank, kv_bank)
            outs.append(vec)
            records.extend(recs)
        if not outs:
            # text-only post: the pooled text vector substitutes
            outs = [ad.pool(text_bank.matrix, "max")]
        total = outs[0]
        for v in outs[1:]:
            total = ad.add(total, v)
        return FusedContext(c_fuse=ad.affine(total, self.wf, self.bf), records=records)
