"""Question-passage alignment and the sentence/word graph encoder.

All tensor ops accept either one example ([rows, d]) or a padded batch
([B, rows, d]); masks are optional 0/1 arrays over the row axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import NEG_INF
from .errors import ConfigError, ShapeError
from .text import compute_tfidf


def _bias(mask, shape_axis):
    """Additive softmax mask broadcasting over the row axis."""
    if mask is None:
        return None
    b = np.where(np.asarray(mask, bool), 0.0, NEG_INF)
    return np.expand_dims(b, shape_axis)


# ---------------------------------------------------------------------------
# alignment

def similarity(HQ, HP, W3, b3):
    """Pairwise relevance u[i, j] between question row i and passage row j.

    u = W3 . [hq; hp; |hq - hp|; hq * hp] + b3, computed blockwise so the
    [m, n, 4d] feature tensor is never materialized except for the
    absolute-difference block.
    """
    d = HQ.shape[-1]
    if HP.shape[-1] != d or W3.shape != (4 * d,):
        raise ShapeError(f"similarity: HQ {HQ.shape}, HP {HP.shape}, W3 {W3.shape}")
    m, n = HQ.shape[-2], HP.shape[-2]
    lead = HQ.shape[:-2]
    w_q = T.reshape(W3[0:d], (d, 1))
    w_p = T.reshape(W3[d:2 * d], (d, 1))
    w_a = T.reshape(W3[2 * d:3 * d], (d, 1))
    w_m = W3[3 * d:4 * d]
    u_q = HQ @ w_q
    u_p = T.swapaxes(HP @ w_p, -1, -2)
    diff = T.reshape(HQ, lead + (m, 1, d)) - T.reshape(HP, lead + (1, n, d))
    u_a = T.reshape(T.tabs(diff) @ w_a, lead + (m, n))
    u_m = (HQ * w_m) @ T.swapaxes(HP, -1, -2)
    return u_q + u_p + u_a + u_m + b3


@dataclass
class Alignment:
    HQ: T.Tensor
    HP: T.Tensor
    row_norm: T.Tensor     # [m, n], rows sum to 1 (over the passage)
    col_norm: T.Tensor     # [m, n], columns sum to 1 (over the question)
    p_context: T.Tensor    # [n, d], passage-to-question context
    q_context: T.Tensor    # [m, d], question-to-passage context


def fuse(x, ctx, W, b, ln_g, ln_b):
    """LayerNorm(x + [x; ctx; x * ctx] W + b): back to width d, residual kept."""
    return T.layer_norm(x + T.concat([x, ctx, x * ctx], axis=-1) @ W + b, ln_g, ln_b)


def align(HQ, HP, U, store, prefix, q_mask=None, p_mask=None):
    """Attend each side over the other and fuse the result back to width d."""
    if U.shape[-2:] != (HQ.shape[-2], HP.shape[-2]):
        raise ShapeError(f"align: U {U.shape} vs HQ {HQ.shape}, HP {HP.shape}")
    row = T.softmax(U, _bias(p_mask, -2))
    col_t = T.softmax(T.swapaxes(U, -1, -2), _bias(q_mask, -2))
    p_ctx = col_t @ HQ
    q_ctx = row @ HP
    HP_new = fuse(HP, p_ctx, store[prefix + "Wfp"], store[prefix + "bfp"],
                  store[prefix + "lnp.g"], store[prefix + "lnp.b"])
    HQ_new = fuse(HQ, q_ctx, store[prefix + "Wfq"], store[prefix + "bfq"],
                  store[prefix + "lnq.g"], store[prefix + "lnq.b"])
    return Alignment(HQ_new, HP_new, row, T.swapaxes(col_t, -1, -2), p_ctx, q_ctx)


def align_sentences(SQ, SP, store, prefix, q_mask=None, p_mask=None):
    U = similarity(SQ, SP, store[prefix + "W3"], store[prefix + "b3"])
    return align(SQ, SP, U, store, prefix, q_mask, p_mask)


def init_align(store, d, prefix):
    store.weight(prefix + "W3", (4 * d,))
    store.bias(prefix + "b3", (1,))
    store.weight(prefix + "Wfp", (3 * d, d))
    store.bias(prefix + "bfp", (d,))
    store.weight(prefix + "Wfq", (3 * d, d))
    store.bias(prefix + "bfq", (d,))
    for side in ("p", "q"):
        store.ones(prefix + f"ln{side}.g", (d,))
        store.bias(prefix + f"ln{side}.b", (d,))


# ---------------------------------------------------------------------------
# graph

@dataclass
class HeteroGraph:
    """Sentence nodes first, then one node per passage token occurrence."""

    n_sent: int
    n_word: int
    adjacency: np.ndarray   # with unit self-loops
    normalized: np.ndarray  # D^-1/2 A D^-1/2
    features: T.Tensor | None = None


def passage_adjacency(sentences, word_links="type", tfidf=None):
    """Symmetric sentence/word adjacency with unit self-loops.

    ``word_links="type"`` links the occurrence node of word w to every
    sentence containing w; ``"occurrence"`` links it only to its own
    sentence. Edge weights are the sentence/word TF-IDF values.
    """
    if word_links not in ("type", "occurrence"):
        raise ConfigError(f"unknown word_links {word_links!r}")
    weights, words = tfidf if tfidf is not None else compute_tfidf(sentences)
    col = {w: i for i, w in enumerate(words)}
    l_p = len(sentences)
    n = sum(len(s) for s in sentences)
    A = np.eye(l_p + n)
    j = l_p
    for k, sent in enumerate(sentences):
        for tok in sent:
            c = col[tok]
            targets = np.nonzero(weights[:, c])[0] if word_links == "type" else (k,)
            for s in targets:
                A[s, j] = A[j, s] = weights[s, c]
            j += 1
    return A


def normalize_adjacency(A):
    deg = A.sum(axis=-1)
    inv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    return A * inv[..., :, None] * inv[..., None, :]


def build_graph(passage, tfidf=None, HP=None, SP=None, word_links="type"):
    A = passage_adjacency(passage, word_links, tfidf)
    feats = None
    if HP is not None and SP is not None:
        feats = T.concat([SP, HP], axis=-2)
    return HeteroGraph(len(passage), sum(len(s) for s in passage), A, normalize_adjacency(A), feats)


def init_gcn(store, d, prefix):
    store.weight(prefix + "W4", (d, d))
    store.bias(prefix + "b4", (d,))
    store.weight(prefix + "W5", (d, d))
    store.bias(prefix + "b5", (d,))
    store.ones(prefix + "ln.g", (d,))
    store.bias(prefix + "ln.b", (d,))


def gcn_block(G, A_norm, W4, b4, W5, b5, ln_g, ln_b):
    """Two-layer GCN, residual connection, LayerNorm."""
    if A_norm.shape[-1] != G.shape[-2] or W4.shape != (G.shape[-1], G.shape[-1]):
        raise ShapeError(f"gcn_block: G {G.shape}, A {A_norm.shape}, W4 {W4.shape}")
    A = T.as_tensor(A_norm)
    h = T.relu(A @ G @ W4 + b4)
    g_new = T.relu(A @ h @ W5 + b5)
    return T.layer_norm(G + g_new, ln_g, ln_b)


# ---------------------------------------------------------------------------
# stacking

@dataclass
class InteractionState:
    HQ: T.Tensor
    HP: T.Tensor
    SQ: T.Tensor
    SP: T.Tensor


def init_interaction(store, d, layers, use_align=True, use_graph=True):
    if layers < 1:
        raise ConfigError("interaction_layers must be >= 1")
    for i in range(layers):
        if use_align:
            init_align(store, d, f"int.{i}.word.")
            init_align(store, d, f"int.{i}.sent.")
        if use_graph:
            init_gcn(store, d, f"int.{i}.gcn.")


def interaction_stack(state, store, layers, A_norm, masks=None, use_align=True,
                      use_graph=True, trace=None):
    """Run ``layers`` rounds of (token align, sentence align, graph).

    ``masks`` is a dict with optional q_tok / p_tok / q_sent / p_sent
    arrays for padded batches. If ``trace`` is a list, the passage
    sentence states after each alignment and each graph sublayer are
    appended to it.
    """
    if layers < 1:
        raise ConfigError("interaction_layers must be >= 1")
    masks = masks or {}
    HQ, HP, SQ, SP = state.HQ, state.HP, state.SQ, state.SP
    l_p = SP.shape[-2]
    for i in range(layers):
        if use_align:
            p = f"int.{i}.word."
            U = similarity(HQ, HP, store[p + "W3"], store[p + "b3"])
            a = align(HQ, HP, U, store, p, masks.get("q_tok"), masks.get("p_tok"))
            HQ, HP = a.HQ, a.HP
            s = align_sentences(SQ, SP, store, f"int.{i}.sent.", masks.get("q_sent"), masks.get("p_sent"))
            SQ, SP = s.HQ, s.HP
        if trace is not None:
            trace.append((f"A{i + 1}", SP))
        if use_graph:
            p = f"int.{i}.gcn."
            G = gcn_block(T.concat([SP, HP], axis=-2), A_norm, store[p + "W4"], store[p + "b4"],
                          store[p + "W5"], store[p + "b5"], store[p + "ln.g"], store[p + "ln.b"])
            SP = G[(Ellipsis, slice(0, l_p), slice(None))]
            HP = G[(Ellipsis, slice(l_p, None), slice(None))]
        if trace is not None:
            trace.append((f"G{i + 1}", SP))
    return InteractionState(HQ, HP, SQ, SP)
