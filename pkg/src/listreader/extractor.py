"""Co-extraction heads, the joint loss, BIO decoding and F1 metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .text import TAG_ID, BIOLabels, Span

LOG_FLOOR = 1e-12
B, I, O = TAG_ID["B"], TAG_ID["I"], TAG_ID["O"]


def span_head(HP, W6, b6):
    """Per-token distribution over (B, I, O)."""
    if W6.shape != (HP.shape[-1], 3) or b6.shape != (3,):
        raise ShapeError(f"span_head: HP {HP.shape}, W6 {W6.shape}, b6 {b6.shape}")
    return T.softmax(HP @ W6 + b6)


def sentence_head(SP, W7, b7):
    """Per-sentence (not-answer, answer) distribution; column 1 is the score."""
    if W7.shape != (SP.shape[-1], 2) or b7.shape != (2,):
        raise ShapeError(f"sentence_head: SP {SP.shape}, W7 {W7.shape}, b7 {b7.shape}")
    return T.softmax(SP @ W7 + b7)


def _masked_nll(probs, gold, mask):
    """Mean over valid rows of -log p(gold), then mean over the batch."""
    onehot = np.eye(probs.shape[-1])[gold]
    p_gold = T.tsum(probs * onehot, axis=-1)
    nll = T.log(p_gold, LOG_FLOOR) * -1.0
    mask = np.asarray(mask, dtype=np.float64)
    counts = np.maximum(mask.sum(axis=-1, keepdims=True), 1.0)
    per_row = nll * (mask / counts)
    if per_row.ndim == 1:
        return T.tsum(per_row)
    return T.mean(T.tsum(per_row, axis=-1))


@dataclass
class LossParts:
    total: T.Tensor
    span: T.Tensor
    sent: T.Tensor


def joint_loss(tag_probs, sent_probs, gold, lam=2.0, token_mask=None, sent_mask=None):
    """L = L_span + lam * L_sent with per-example mean cross-entropies.

    ``gold`` is a BIOLabels (single example) or a pair of integer arrays
    (tags [B, n], sentence labels [B, l]) for a padded batch. ``sent_probs``
    may be the 2-way distribution [..., l, 2] or answer scores [..., l].
    """
    if isinstance(gold, BIOLabels):
        tags = np.asarray(gold.tag_ids())
        sents = np.asarray(gold.sentence_labels)
    else:
        tags, sents = (np.asarray(g) for g in gold)
    if sent_probs.shape == sents.shape:
        sent_probs = T.concat([T.reshape(1.0 - sent_probs, sents.shape + (1,)),
                               T.reshape(sent_probs, sents.shape + (1,))], axis=-1)
    if tag_probs.shape[:-1] != tags.shape or sent_probs.shape[:-1] != sents.shape:
        raise ContractError(
            f"joint_loss length mismatch: tags {tag_probs.shape} vs gold {tags.shape}, "
            f"sentences {sent_probs.shape} vs gold {sents.shape}")
    token_mask = np.ones(tags.shape) if token_mask is None else token_mask
    sent_mask = np.ones(sents.shape) if sent_mask is None else sent_mask
    l_w = _masked_nll(tag_probs, tags, token_mask)
    l_s = _masked_nll(sent_probs, sents, sent_mask)
    return LossParts(l_w + l_s * float(lam), l_w, l_s)


# ---------------------------------------------------------------------------
# decoding

@dataclass
class AnswerList:
    spans: list = field(default_factory=list)
    texts: list = field(default_factory=list)
    sentences: list = field(default_factory=list)

    def token_positions(self, boundaries):
        starts = [s for s, _ in boundaries]
        return {starts[sp.sent] + i for sp in self.spans for i in range(sp.start, sp.end + 1)}


def argmax_tags(tag_probs):
    """Argmax with ties broken B > I > O (column order)."""
    return np.argmax(np.asarray(tag_probs), axis=-1)


def decode_tag_ids(tag_ids):
    """Flat (start, end) spans from tag ids with lenient I handling."""
    spans, start = [], None
    for i, t in enumerate(tag_ids):
        if t == B:
            if start is not None:
                spans.append((start, i - 1))
            start = i
        elif t == I:
            if start is None:
                start = i
        else:
            if start is not None:
                spans.append((start, i - 1))
            start = None
    if start is not None:
        spans.append((start, len(tag_ids) - 1))
    return spans


def decode_bio(tags, boundaries, example=None):
    """Decode tags into sentence-local spans.

    ``tags`` is a [n, 3] probability array, or a sequence of tag ids / tag
    letters. Spans crossing a sentence boundary are split there.
    """
    arr = np.asarray(tags)
    if arr.ndim == 2:
        ids = argmax_tags(arr)
    elif arr.dtype.kind in "US":
        ids = [TAG_ID[t] for t in arr]
    else:
        ids = arr
    sent_of, local = [], []
    for k, (start, length) in enumerate(boundaries):
        sent_of.extend([k] * length)
        local.extend(range(length))
    out = AnswerList()
    for s, e in decode_tag_ids(list(ids)):
        cur = s
        while cur <= e:
            k = sent_of[cur]
            end = min(e, boundaries[k][0] + boundaries[k][1] - 1)
            span = Span(k, local[cur], local[end])
            out.spans.append(span)
            if example is not None:
                out.texts.append(example.span_text(span))
            cur = end + 1
    return out


# ---------------------------------------------------------------------------
# metrics

def set_f1(pred, gold):
    pred, gold = set(pred), set(gold)
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    hit = len(pred & gold)
    if hit == 0:
        return 0.0
    p, r = hit / len(pred), hit / len(gold)
    return 2 * p * r / (p + r)


def span_f1(pred, gold):
    """Token-overlap F1 between predicted and gold answer tokens."""
    bounds = gold.boundaries()
    pred_tokens = pred.token_positions(bounds) if isinstance(pred, AnswerList) else set(pred)
    gold_tokens = {i for a in gold.answers for i in range(*_closed(gold.flat_span(a)))}
    return set_f1(pred_tokens, gold_tokens)


def _closed(se):
    return se[0], se[1] + 1


def sentence_f1(pred, gold):
    return set_f1(pred, gold)


def predicted_sentences(scores, threshold=0.5):
    return [k for k, s in enumerate(np.asarray(scores)) if s > threshold]

