"""Hierarchical encoder: packed input, a small transformer, and SentExt pooling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError
from .text import CLS_ID, SEP_ID, Example, Span

NEG_INF = -1e30


@dataclass
class PackedSequence:
    """``[CLS] q_1..q_m [SEP] p_1..p_n`` with sentence bookkeeping.

    ``q_sentences`` / ``p_sentences`` hold (start, length) pairs in packed
    coordinates and tile the question and passage regions exactly.
    """

    ids: list
    segments: list
    positions: list
    q_sentences: list
    p_sentences: list
    m: int
    n: int
    example: Example
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.ids)

    @property
    def q_positions(self):
        return list(range(1, self.m + 1))

    @property
    def p_positions(self):
        return list(range(self.m + 2, self.m + 2 + self.n))


def truncate_passage(example, max_tokens):
    """Keep the first ``max_tokens`` passage tokens; spans are clipped or dropped."""
    sents, texts, offsets, kept = [], [], [], 0
    for k, s in enumerate(example.sentences):
        if kept >= max_tokens:
            break
        take = min(len(s), max_tokens - kept)
        sents.append(s[:take])
        if example.sentence_texts:
            texts.append(example.sentence_texts[k])
            offsets.append(example.offsets[k][:take])
        kept += take
    answers = []
    for a in example.answers:
        if a.sent < len(sents) and a.start < len(sents[a.sent]):
            answers.append(Span(a.sent, a.start, min(a.end, len(sents[a.sent]) - 1)))
    return Example(example.id, example.question, sents, answers,
                   example.question_text, texts, offsets)


def pack_input(example, vocab, max_length=512, truncate=False):
    m, n = example.m, example.n
    warnings = []
    if m + n + 2 > max_length:
        budget = max_length - m - 2
        if not truncate or budget < 1:
            raise ContractError(
                f"example {example.id!r}: packed length {m + n + 2} exceeds max_length {max_length}")
        warnings.append(f"example {example.id!r}: passage truncated from {n} to {budget} tokens")
        example = truncate_passage(example, budget)
        n = example.n
    ids = [CLS_ID] + vocab.ids(example.question) + [SEP_ID] + vocab.ids(example.flat_tokens())
    segments = [0] * (m + 2) + [1] * n
    q_sents, pos = [], 1
    for qs in example.question_sentences():
        q_sents.append((pos, len(qs)))
        pos += len(qs)
    p_sents = [(m + 2 + st, ln) for st, ln in example.boundaries()]
    return PackedSequence(ids, segments, list(range(len(ids))), q_sents, p_sents, m, n,
                          example, warnings)


# ---------------------------------------------------------------------------
# transformer stand-in for the pretrained contextual encoder

def init_encoder(store, vocab_size, d, layers, heads, ffn_dim, max_length):
    if d % heads:
        raise ContractError(f"hidden size {d} not divisible by {heads} heads")
    store.weight("enc.tok_emb", (vocab_size, d))
    store.weight("enc.pos_emb", (max_length, d))
    store.weight("enc.seg_emb", (2, d))
    store.ones("enc.emb_ln.g", (d,))
    store.bias("enc.emb_ln.b", (d,))
    for i in range(layers):
        p = f"enc.{i}."
        for w in ("q", "k", "v", "o"):
            store.weight(p + f"attn.w{w}", (d, d))
            if w != "k":  # a key bias shifts each score row uniformly, so softmax ignores it
                store.bias(p + f"attn.b{w}", (d,))
        store.ones(p + "ln1.g", (d,))
        store.bias(p + "ln1.b", (d,))
        store.weight(p + "ffn.w1", (d, ffn_dim))
        store.bias(p + "ffn.b1", (ffn_dim,))
        store.weight(p + "ffn.w2", (ffn_dim, d))
        store.bias(p + "ffn.b2", (d,))
        store.ones(p + "ln2.g", (d,))
        store.bias(p + "ln2.b", (d,))


def _self_attention(x, store, p, heads, key_bias):
    B, L, d = x.shape
    dh = d // heads

    def split(t):
        return T.transpose(T.reshape(t, (B, L, heads, dh)), (0, 2, 1, 3))

    q = split(x @ store[p + "attn.wq"] + store[p + "attn.bq"])
    k = split(x @ store[p + "attn.wk"])
    v = split(x @ store[p + "attn.wv"] + store[p + "attn.bv"])
    scores = (q @ T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh))
    attn = T.softmax(scores, key_bias)
    ctx = T.reshape(T.transpose(attn @ v, (0, 2, 1, 3)), (B, L, d))
    return ctx @ store[p + "attn.wo"] + store[p + "attn.bo"]


def transformer_encode(ids, segments, positions, key_mask, store, layers, heads):
    """Contextual states [B, L, d] for padded id arrays [B, L].

    ``key_mask`` marks real (non-padding) positions; padding keys get no
    attention weight.
    """
    ids = np.asarray(ids)
    vocab_size = store["enc.tok_emb"].shape[0]
    if ids.min() < 0 or ids.max() >= vocab_size:
        raise ContractError(f"token id out of range [0, {vocab_size})")
    x = (T.embedding(store["enc.tok_emb"], ids)
         + T.embedding(store["enc.pos_emb"], positions)
         + T.embedding(store["enc.seg_emb"], segments))
    x = T.layer_norm(x, store["enc.emb_ln.g"], store["enc.emb_ln.b"])
    key_bias = np.where(np.asarray(key_mask, bool), 0.0, NEG_INF)[:, None, None, :]
    for i in range(layers):
        p = f"enc.{i}."
        x = T.layer_norm(x + _self_attention(x, store, p, heads, key_bias),
                         store[p + "ln1.g"], store[p + "ln1.b"])
        h = T.gelu(x @ store[p + "ffn.w1"] + store[p + "ffn.b1"]) @ store[p + "ffn.w2"] + store[p + "ffn.b2"]
        x = T.layer_norm(x + h, store[p + "ln2.g"], store[p + "ln2.b"])
    return x


# ---------------------------------------------------------------------------
# SentExt

def init_sent_ext(store, d, prefix="sentext."):
    store.weight(prefix + "W1", (d, d))
    store.bias(prefix + "b1", (d,))
    store.weight(prefix + "W2", (d, 1))
    store.bias(prefix + "b2", (1,))


def sent_ext(states, W1, b1, W2, b2, members=None, return_weights=False):
    """Self-attentive pooling of token states into sentence vectors.

    With ``members=None`` ``states`` is one sentence [c, d] and the result
    is a [d] vector. Otherwise ``states`` is [B, T, d] and ``members`` a
    0/1 array [B, S, T] selecting each sentence's tokens; the result is
    [B, S, d].
    """
    if members is None:
        if states.ndim != 2 or states.shape[0] < 1:
            raise ContractError("sent_ext needs a non-empty [c, d] sentence")
        scores = T.reshape(T.tanh(states @ W1 + b1) @ W2 + b2, (1, states.shape[0]))
        alpha = T.softmax(scores)
        out = T.reshape(alpha @ states, (states.shape[1],))
        return (out, T.reshape(alpha, (states.shape[0],))) if return_weights else out
    members = np.asarray(members, dtype=bool)
    B, S, L = members.shape
    scores = T.reshape(T.tanh(states @ W1 + b1) @ W2 + b2, (B, 1, L))
    bias = np.where(members, 0.0, NEG_INF)
    alpha = T.softmax(scores + np.zeros((B, S, L)), bias)
    out = alpha @ states
    return (out, alpha) if return_weights else out
