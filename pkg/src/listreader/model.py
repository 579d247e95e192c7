"""ListReader model: batching, parameter layout and the forward pass."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .encoder import init_encoder, init_sent_ext, pack_input, sent_ext, transformer_encode
from .errors import ConfigError
from .extractor import AnswerList, decode_bio, joint_loss, predicted_sentences, sentence_head, span_head
from .interaction import (InteractionState, init_interaction, interaction_stack, normalize_adjacency,
                          passage_adjacency)
from .params import ParamStore
from .text import PAD_ID, TAG_ID, spans_to_bio


@dataclass
class ModelConfig:
    d: int = 64
    encoder_layers: int = 2
    heads: int = 4
    ffn_dim: int = 0  # 0 -> 4 * d
    max_length: int = 256
    interaction_layers: int = 3
    no_graph: bool = False
    no_align: bool = False
    word_links: str = "type"
    truncate: bool = False

    def __post_init__(self):
        if self.ffn_dim == 0:
            self.ffn_dim = 4 * self.d
        for key in ("d", "encoder_layers", "heads", "ffn_dim", "max_length"):
            if getattr(self, key) < 1:
                raise ConfigError(f"model.{key} must be positive")
        if self.interaction_layers < 1:
            raise ConfigError("interaction_layers must be >= 1")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} not divisible by heads={self.heads}")
        if self.word_links not in ("type", "occurrence"):
            raise ConfigError(f"unknown word_links {self.word_links!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class Batch:
    examples: list
    packed: list
    ids: np.ndarray
    segments: np.ndarray
    positions: np.ndarray
    key_mask: np.ndarray
    q_idx: np.ndarray
    q_mask: np.ndarray
    p_idx: np.ndarray
    p_mask: np.ndarray
    q_members: np.ndarray
    q_sent_mask: np.ndarray
    p_members: np.ndarray
    p_sent_mask: np.ndarray
    adj: np.ndarray
    gold_tags: np.ndarray
    gold_sents: np.ndarray
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.examples)


def collate(examples, vocab, config, graph_cache=None):
    """Pad a list of examples into one Batch.

    ``graph_cache`` (dict keyed by example id) avoids rebuilding the
    normalized adjacency every epoch.
    """
    packed = [pack_input(ex, vocab, config.max_length, config.truncate) for ex in examples]
    exs = [p.example for p in packed]
    B = len(packed)
    L = max(len(p) for p in packed)
    M = max(p.m for p in packed)
    N = max(p.n for p in packed)
    SQ = max(len(p.q_sentences) for p in packed)
    SP = max(len(p.p_sentences) for p in packed)

    ids = np.full((B, L), PAD_ID, dtype=np.int64)
    seg = np.zeros((B, L), dtype=np.int64)
    pos = np.zeros((B, L), dtype=np.int64)
    key = np.zeros((B, L), dtype=bool)
    q_idx = np.zeros((B, M), dtype=np.int64)
    q_mask = np.zeros((B, M), dtype=bool)
    p_idx = np.zeros((B, N), dtype=np.int64)
    p_mask = np.zeros((B, N), dtype=bool)
    q_mem = np.zeros((B, SQ, M), dtype=bool)
    q_smask = np.zeros((B, SQ), dtype=bool)
    p_mem = np.zeros((B, SP, N), dtype=bool)
    p_smask = np.zeros((B, SP), dtype=bool)
    adj = np.zeros((B, SP + N, SP + N))
    tags = np.full((B, N), TAG_ID["O"], dtype=np.int64)
    sents = np.zeros((B, SP), dtype=np.int64)
    warnings = []

    for b, (p, ex) in enumerate(zip(packed, exs)):
        ln = len(p)
        ids[b, :ln] = p.ids
        seg[b, :ln] = p.segments
        pos[b, :ln] = p.positions
        key[b, :ln] = True
        q_idx[b, :p.m] = p.q_positions
        q_mask[b, :p.m] = True
        p_idx[b, :p.n] = p.p_positions
        p_mask[b, :p.n] = True
        for k, (st, c) in enumerate(p.q_sentences):
            q_mem[b, k, st - 1:st - 1 + c] = True
            q_smask[b, k] = True
        for k, (st, c) in enumerate(p.p_sentences):
            off = st - p.m - 2
            p_mem[b, k, off:off + c] = True
            p_smask[b, k] = True
        a = None if graph_cache is None else graph_cache.get(ex.id)
        if a is None:
            a = normalize_adjacency(passage_adjacency(ex.sentences, config.word_links))
            if graph_cache is not None:
                graph_cache[ex.id] = a
        ls = len(ex.sentences)
        # sentence block and word block land at their padded offsets
        adj[b, :ls, :ls] = a[:ls, :ls]
        adj[b, :ls, SP:SP + p.n] = a[:ls, ls:]
        adj[b, SP:SP + p.n, :ls] = a[ls:, :ls]
        adj[b, SP:SP + p.n, SP:SP + p.n] = a[ls:, ls:]
        labels = spans_to_bio(ex)
        tags[b, :p.n] = labels.tag_ids()
        sents[b, :ls] = labels.sentence_labels
        warnings.extend(p.warnings)
    # padded graph nodes keep a self-loop so every row stays well defined
    for b, p in enumerate(packed):
        ls = len(p.p_sentences)
        for i in list(range(ls, SP)) + list(range(SP + p.n, SP + N)):
            adj[b, i, i] = 1.0
    return Batch(exs, packed, ids, seg, pos, key, q_idx, q_mask, p_idx, p_mask, q_mem, q_smask,
                 p_mem, p_smask, adj, tags, sents, warnings)


@dataclass
class ModelOutput:
    tag_probs: T.Tensor
    sent_probs: T.Tensor
    state: InteractionState
    trace: list | None = None


class ListReader:
    def __init__(self, config, vocab_size, seed=0):
        self.config = config
        self.vocab_size = vocab_size
        self.params = ParamStore(seed)
        c = config
        init_encoder(self.params, vocab_size, c.d, c.encoder_layers, c.heads, c.ffn_dim, c.max_length)
        init_sent_ext(self.params, c.d)
        init_interaction(self.params, c.d, c.interaction_layers,
                         use_align=not c.no_align, use_graph=not c.no_graph)
        self.params.weight("head.W6", (c.d, 3))
        self.params.bias("head.b6", (3,))
        self.params.weight("head.W7", (c.d, 2))
        self.params.bias("head.b7", (2,))

    def encode(self, batch):
        p = self.params
        H = transformer_encode(batch.ids, batch.segments, batch.positions, batch.key_mask, p,
                               self.config.encoder_layers, self.config.heads)
        HQ = T.gather_rows(H, batch.q_idx)
        HP = T.gather_rows(H, batch.p_idx)
        ext = (p["sentext.W1"], p["sentext.b1"], p["sentext.W2"], p["sentext.b2"])
        SQ = sent_ext(HQ, *ext, members=batch.q_members)
        SP = sent_ext(HP, *ext, members=batch.p_members)
        return InteractionState(HQ, HP, SQ, SP)

    def forward(self, batch, trace=False):
        c = self.config
        trace_list = [] if trace else None
        enc = self.encode(batch)
        masks = {"q_tok": batch.q_mask, "p_tok": batch.p_mask,
                 "q_sent": batch.q_sent_mask, "p_sent": batch.p_sent_mask}
        state = interaction_stack(enc, self.params, c.interaction_layers, batch.adj, masks,
                                  use_align=not c.no_align, use_graph=not c.no_graph,
                                  trace=trace_list)
        tags = span_head(state.HP, self.params["head.W6"], self.params["head.b6"])
        sents = self.sentence_probs(state.SP)
        return ModelOutput(tags, sents, state, trace_list)

    def sentence_probs(self, SP):
        return sentence_head(SP, self.params["head.W7"], self.params["head.b7"])

    def loss(self, batch, lam=2.0, out=None):
        out = out or self.forward(batch)
        return joint_loss(out.tag_probs, out.sent_probs, (batch.gold_tags, batch.gold_sents), lam,
                          batch.p_mask, batch.p_sent_mask)


def decode_batch(batch, tag_probs, sent_probs, threshold=0.5):
    """AnswerList per example from [B, N, 3] tag and [B, S, 2] sentence probabilities."""
    results = []
    for b, ex in enumerate(batch.examples):
        n, ls = ex.n, len(ex.sentences)
        ans = decode_bio(tag_probs[b, :n], ex.boundaries(), ex)
        scores = sent_probs[b, :ls, 1]
        results.append((ans, scores))
        ans.sentences = predicted_sentences(scores, threshold)
    return results

