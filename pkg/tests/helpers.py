"""Tiny corpora and configs shared by the slower tests."""
import numpy as np

from gradcheck import numeric_grad, rel_error
from listreader import tensor as T
from listreader.model import ListReader, ModelConfig, collate
from listreader.synthetic import GenConfig, generate_synthetic
from listreader.text import build_vocab
from listreader.training import TrainConfig

SMALL_GEN = GenConfig(vocab_size=40, topic_size=10, link_size=8, min_sentences=4, max_sentences=5,
                      min_answers=2, max_answers=3, min_clause=2, max_clause=3)


def tiny_corpus(n, seed=0, mode="keyword"):
    gen = GenConfig(**{**SMALL_GEN.__dict__, "mode": mode})
    return generate_synthetic(gen, seed, n)


def tiny_model_config(**kw):
    base = dict(d=16, encoder_layers=1, heads=2, ffn_dim=32, max_length=48, interaction_layers=2)
    base.update(kw)
    return ModelConfig(**base)


def tiny_train_config(**kw):
    model = kw.pop("model", None) or tiny_model_config()
    base = dict(batch_size=4, learning_rate=1e-3, max_epochs=2, seed=0, model=model)
    base.update(kw)
    return TrainConfig(**base)


def model_gradcheck(d=16, layers=2, n_examples=2, seed=0, h=1e-5):
    """Max relative error per parameter of the full joint loss on a toy batch."""
    exs = tiny_corpus(n_examples, seed=seed)
    vocab = build_vocab(exs)
    cfg = ModelConfig(d=d, encoder_layers=1, heads=2, ffn_dim=2 * d, max_length=max(e.m + e.n + 2 for e in exs),
                      interaction_layers=layers)
    model = ListReader(cfg, len(vocab), seed=seed)
    # non-zero biases so no parameter sits at a symmetric point
    rng = np.random.default_rng(seed + 100)
    for name, p in model.params.items():
        if not name.endswith((".g",)) and not p.data.any():
            p.data[:] = rng.normal(scale=0.1, size=p.shape)
    batch = collate(exs, vocab, cfg)

    def f():
        with T.no_grad():
            return model.loss(batch).total.item()

    model.params.zero_grad()
    model.loss(batch).total.backward()
    errors = {}
    for name, p in model.params.items():
        errors[name] = rel_error(p.grad, numeric_grad(f, p, h))
    return errors
