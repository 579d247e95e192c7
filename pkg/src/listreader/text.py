"""Tokenization, vocabulary, examples, TF-IDF weights, BIO labels and JSONL I/O."""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError, ValidationError

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
RESERVED = (PAD, UNK, CLS, SEP)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = range(4)

TAGS = ("B", "I", "O")
TAG_ID = {t: i for i, t in enumerate(TAGS)}

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_SENT_END_RE = re.compile(r"[^.!?]*(?:[.!?]+|$)")


def tokenize_with_offsets(text):
    """Lowercased tokens with their character offsets into ``text``."""
    return [(m.group().lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def tokenize(text):
    return [tok for tok, _, _ in tokenize_with_offsets(text)]


def split_sentences(text):
    """Split raw text after terminal punctuation; drops blank pieces."""
    pieces = [m.group().strip() for m in _SENT_END_RE.finditer(text)]
    return [p for p in pieces if p and tokenize(p)]


class Span(NamedTuple):
    sent: int
    start: int
    end: int  # inclusive


@dataclass
class Example:
    id: str
    question: list
    sentences: list
    answers: list
    question_text: str = ""
    sentence_texts: list = field(default_factory=list)
    offsets: list = field(default_factory=list)

    @classmethod
    def from_text(cls, id, question, sentences, answers=()):
        toks = [tokenize_with_offsets(s) for s in sentences]
        return cls(
            id=str(id),
            question=tokenize(question),
            sentences=[[t for t, _, _ in ts] for ts in toks],
            answers=[Span(*a) for a in answers],
            question_text=question,
            sentence_texts=list(sentences),
            offsets=[[(a, b) for _, a, b in ts] for ts in toks],
        )

    @property
    def n(self):
        return sum(len(s) for s in self.sentences)

    @property
    def m(self):
        return len(self.question)

    def sentence_starts(self):
        starts, pos = [], 0
        for s in self.sentences:
            starts.append(pos)
            pos += len(s)
        return starts

    def boundaries(self):
        """(flat start, length) per passage sentence."""
        return [(st, len(s)) for st, s in zip(self.sentence_starts(), self.sentences)]

    def flat_tokens(self):
        return [t for s in self.sentences for t in s]

    def flat_span(self, span):
        st = self.sentence_starts()[span.sent]
        return st + span.start, st + span.end

    def span_text(self, span):
        if self.offsets and self.sentence_texts:
            offs = self.offsets[span.sent]
            return self.sentence_texts[span.sent][offs[span.start][0]:offs[span.end][1]]
        return " ".join(self.sentences[span.sent][span.start:span.end + 1])

    def answer_sentences(self):
        return sorted({a.sent for a in self.answers})

    def question_sentences(self):
        """Question split into sentences at terminal punctuation tokens."""
        out, cur = [], []
        for tok in self.question:
            cur.append(tok)
            if tok in ".?!":
                out.append(cur)
                cur = []
        if cur:
            out.append(cur)
        return out

    def validate(self, min_answers=0, line=None):
        if not self.question:
            raise ValidationError(f"example {self.id!r}: empty question", line)
        if not self.sentences:
            raise ValidationError(f"example {self.id!r}: empty passage", line)
        for k, s in enumerate(self.sentences):
            if not s:
                raise ValidationError(f"example {self.id!r}: sentence {k} has no tokens", line)
        for a in self.answers:
            if not 0 <= a.sent < len(self.sentences):
                raise ValidationError(f"example {self.id!r}: span sentence {a.sent} out of range", line)
            c = len(self.sentences[a.sent])
            if not 0 <= a.start <= a.end < c:
                raise ValidationError(
                    f"example {self.id!r}: span ({a.start}, {a.end}) outside sentence {a.sent} of length {c}", line)
        flat = sorted(self.flat_span(a) for a in self.answers)
        for (s0, e0), (s1, e1) in zip(flat, flat[1:]):
            if s1 <= e0:
                raise ValidationError(f"example {self.id!r}: overlapping spans at token {s1}", line)
            if s1 == e0 + 1:
                raise ValidationError(f"example {self.id!r}: contiguous spans at token {s1}", line)
        if len(self.answers) < min_answers:
            raise ValidationError(
                f"example {self.id!r}: {len(self.answers)} answers, strict mode needs >= {min_answers}", line)
        return self


# ---------------------------------------------------------------------------
# vocabulary

class Vocab:
    def __init__(self, tokens=()):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def __contains__(self, tok):
        return tok in self.stoi

    def id(self, tok):
        return self.stoi.get(tok, UNK_ID)

    def ids(self, toks):
        return [self.stoi.get(t, UNK_ID) for t in toks]

    def to_list(self):
        return self.itos[len(RESERVED):]


def build_vocab(corpus, min_count=1):
    if min_count < 1:
        raise ContractError("min_count must be >= 1")
    counts = Counter()
    for ex in corpus:
        counts.update(ex.question)
        for s in ex.sentences:
            counts.update(s)
    kept = [t for t, c in counts.items() if c >= min_count and t not in RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocab(kept)


# ---------------------------------------------------------------------------
# TF-IDF

def compute_tfidf(passage):
    """Sentence-by-word TF-IDF weights for one passage.

    Returns ``(weights, words)``; ``words`` are the passage's distinct tokens
    in first-occurrence order and ``weights[k, w]`` is zero exactly when
    sentence ``k`` does not contain ``words[w]``.
    """
    if not passage:
        raise ContractError("compute_tfidf needs at least one sentence")
    words, index = [], {}
    for k, sent in enumerate(passage):
        if not sent:
            raise ContractError(f"sentence {k} is empty")
        for tok in sent:
            if tok not in index:
                index[tok] = len(words)
                words.append(tok)
    n_sent = len(passage)
    counts = np.zeros((n_sent, len(words)))
    for k, sent in enumerate(passage):
        for tok in sent:
            counts[k, index[tok]] += 1
    df = (counts > 0).sum(axis=0)
    idf = np.log((1.0 + n_sent) / (1.0 + df)) + 1.0
    lengths = np.array([len(s) for s in passage], dtype=np.float64)[:, None]
    return counts / lengths * idf, words


# ---------------------------------------------------------------------------
# labels

@dataclass
class BIOLabels:
    tags: list
    sentence_labels: list

    def tag_ids(self):
        return [TAG_ID[t] for t in self.tags]


def spans_to_bio(example):
    tags = ["O"] * example.n
    for a in sorted(example.answers):
        s, e = example.flat_span(a)
        if any(t != "O" for t in tags[s:e + 1]):
            raise ValidationError(f"example {example.id!r}: overlapping spans at token {s}")
        tags[s] = "B"
        for i in range(s + 1, e + 1):
            tags[i] = "I"
    answer_sents = set(example.answer_sentences())
    labels = [1 if k in answer_sents else 0 for k in range(len(example.sentences))]
    return BIOLabels(tags, labels)


# ---------------------------------------------------------------------------
# JSONL

def example_from_json(obj, line=None, min_answers=0):
    if not isinstance(obj, dict):
        raise ValidationError("expected a JSON object", line)
    try:
        ident = obj["id"]
        question = obj["question"]
        sents = obj["passage_sentences"]
        answers = obj.get("answers", [])
    except KeyError as exc:
        raise ValidationError(f"missing key {exc.args[0]!r}", line) from None
    if not isinstance(question, str) or not isinstance(sents, list) or not all(isinstance(s, str) for s in sents):
        raise ValidationError("question must be a string and passage_sentences a list of strings", line)
    try:
        spans = [(int(a["sent"]), int(a["start"]), int(a["end"])) for a in answers]
    except (KeyError, TypeError, ValueError):
        raise ValidationError("answers must be objects with integer sent/start/end", line) from None
    ex = Example.from_text(ident, question, sents, spans)
    return ex.validate(min_answers=min_answers, line=line)


def example_to_json(ex):
    return {
        "id": ex.id,
        "question": ex.question_text or " ".join(ex.question),
        "passage_sentences": ex.sentence_texts or [" ".join(s) for s in ex.sentences],
        "answers": [{"sent": a.sent, "start": a.start, "end": a.end} for a in ex.answers],
    }


def dumps_example(ex):
    return json.dumps(example_to_json(ex), ensure_ascii=False, separators=(", ", ": "))


def load_jsonl(path, min_answers=0):
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"malformed JSON: {exc.msg}", lineno) from None
            examples.append(example_from_json(obj, lineno, min_answers))
    return examples


def write_jsonl(path, examples):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(dumps_example(ex) + "\n")


def corpus_stats(examples):
    """Counts analogous to a dataset statistics table."""
    n = len(examples)
    if n == 0:
        return {"examples": 0}
    spans = [len(e.answers) for e in examples]
    return {
        "examples": n,
        "mean_sentences": float(np.mean([len(e.sentences) for e in examples])),
        "mean_passage_tokens": float(np.mean([e.n for e in examples])),
        "mean_question_tokens": float(np.mean([e.m for e in examples])),
        "mean_answer_spans": float(np.mean(spans)),
        "mean_answer_sentences": float(np.mean([len(e.answer_sentences()) for e in examples])),
        "min_answer_spans": int(min(spans)),
        "max_answer_spans": int(max(spans)),
    }

