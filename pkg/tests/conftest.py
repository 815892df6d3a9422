import numpy as np
import pytest

from mmkp import autodiff as ad
from mmkp import data as D
from mmkp.model import Model, ModelConfig


def tiny_posts(seed=0, n=6):
    """Small deterministic corpus touching every modality."""
    import random
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(12)]
    posts = []
    for i in range(n):
        text = [rng.choice(words) for _ in range(rng.randint(2, 5))]
        ocr = [rng.choice(words)] if i % 2 == 0 else []
        attrs = [rng.choice(words) for _ in range(2)]
        feats = [[round(rng.uniform(-1, 1), 4) for _ in range(4)] for _ in range(3)]
        posts.append(D.Post(
            id=f"p{i}", text_tokens=text, ocr_tokens=ocr,
            attribute_tokens=attrs, visual_features=feats,
            keyphrases=[rng.choice(words), " ".join([rng.choice(words), rng.choice(words)])][: rng.randint(1, 2)],
        ))
    return posts


def tiny_config(**overrides):
    base = dict(d=8, d_e=4, enc_layers=2, heads=2, d_head=4,
                l_text=2, l_vis=1, l_attr=1, d_v=4, expected_l_v=3, top_k=3,
                max_decode_len=4)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_model(seed=0, init_scale=0.1, posts=None, config=None, gen_cap=20):
    posts = posts or tiny_posts()
    vocab = D.build_vocab(posts, gen_cap=gen_cap)
    model = Model(config or tiny_config(), vocab, seed=seed, init_scale=init_scale)
    return model, vocab, posts


@pytest.fixture
def float64():
    """Run a test under 64-bit default parameters."""
    previous = ad.get_default_dtype()
    ad.set_default_dtype(np.float64)
    yield
    ad.set_default_dtype(previous)
