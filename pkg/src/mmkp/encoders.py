"""Modality encoders: stacked Bi-GRU over tokens, linear maps for vision and
attributes. Each produces an L x d memory bank; absent modalities yield None."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError


@dataclass
class MemoryBank:
    modality: str  # text | vision | attribute
    matrix: object  # Tensor, L x d

    @property
    def rows(self):
        return self.matrix.data.shape[0]


class TextEncoder:
    """Stacked bidirectional GRU over embedded tokens.

    Per-direction hidden size is d/2 so the concatenated state h_i lives in
    R^d; layer 2 consumes layer 1's concatenated outputs.
    """

    def __init__(self, store, d, d_e, layers=2, prefix="enc"):
        if d % 2:
            raise ContractError("text encoder needs an even model dimension")
        self.d = d
        self.layers = layers
        h = d // 2
        self.weights = []
        for layer in range(layers):
            din = d_e if layer == 0 else d
            per_dir = {}
            for direction in ("fwd", "bwd"):
                per_dir[direction] = (
                    store.add(f"{prefix}.l{layer}.{direction}.wx", (din, 3 * h)),
                    store.add(f"{prefix}.l{layer}.{direction}.wh", (h, 3 * h)),
                    store.add(f"{prefix}.l{layer}.{direction}.b", (3 * h,), zero=True),
                )
            self.weights.append(per_dir)
        self._h0 = ad.constant(np.zeros(h))

    def __call__(self, embedded):
        """embedded: Tensor (l_x x d_e) -> (bank Tensor l_x x d, last_state (d,))."""
        if embedded.data.shape[0] < 1:
            raise ContractError("encode_text: empty sequence")
        h0 = ad.constant(np.zeros(self.d // 2, dtype=embedded.data.dtype))
        x = embedded
        for per_dir in self.weights:
            wx, wh, b = per_dir["fwd"]
            fwd = ad.gru_seq(x, h0, wx, wh, b)
            wx, wh, b = per_dir["bwd"]
            bwd = ad.flip_rows(ad.gru_seq(ad.flip_rows(x), h0, wx, wh, b))
            x = ad.concat([fwd, bwd], axis=1)
        last = ad.row(x, x.data.shape[0] - 1)
        return MemoryBank("text", x), last


class VisualProjection:
    """Row-wise affine map from raw region features (l_v x d_v) to the bank."""

    def __init__(self, store, d_v, d, prefix="vis"):
        self.d_v = d_v
        self.w = store.add(f"{prefix}.w", (d_v, d))
        self.b = store.add(f"{prefix}.b", (d,), zero=True)

    def __call__(self, features):
        feats = np.asarray(features, dtype=ad.get_default_dtype())
        if feats.ndim != 2 or feats.shape[1] != self.d_v:
            raise DimensionError(
                f"visual features shape {feats.shape}, expected (l_v, {self.d_v})")
        return MemoryBank("vision", ad.linear_rows(ad.constant(feats), self.w, self.b))


class AttributeEncoder:
    """Embeds attribute tokens (shared table) and maps them to the bank."""

    def __init__(self, store, d_e, d, prefix="attr"):
        self.w = store.add(f"{prefix}.w", (d_e, d))
        self.b = store.add(f"{prefix}.b", (d,), zero=True)

    def __call__(self, embedding_table, attribute_ids):
        if not attribute_ids:
            return None
        emb = ad.embed(embedding_table, attribute_ids)
        return MemoryBank("attribute", ad.linear_rows(emb, self.w, self.b))


def load_word_vectors(path, vocab, d_e, rng=None):
    """Optional plain-text word-vector initialization: `word v1 .. v_{d_e}` per
    line. Tokens missing from the file keep their random rows."""
    if rng is None:
        rng = np.random.default_rng(0)
    table = rng.uniform(-0.1, 0.1, size=(vocab.gen_size, d_e))
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if len(parts) != d_e + 1:
                continue
            token = parts[0]
            if token in vocab.gen_index:
                table[vocab.gen_index[token]] = [float(v) for v in parts[1:]]
    return table
