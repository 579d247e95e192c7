"""Deterministic synthetic list-answer corpora.

Every passage sentence is ``[prefix fillers] clause [suffix fillers] .``;
an answer span is the clause of an answer sentence. Clauses are built from
three disjoint word pools: a small topic pool (question keywords and
distractor topics), a small link pool (bridge and decoy words), and a
large pool of plain content words. Words are drawn without replacement
within a passage, so two sentences share a word only where the generator
puts it on purpose.

``keyword`` mode: each answer clause contains a question keyword.
Distractor clauses are plain words, or, with ``decoy_topics``, carry some
other topic word so that "has a topic word" stops being a shortcut.
``relational`` mode: "direct" answers contain a question keyword and a
bridge word; "bridged" answers share no token with the question and are
linked to a direct answer only through its bridge word. Distractors come
in pairs sharing a decoy link word. With ``decoy_topics``, topic words not
in the question are also sprinkled over distractors and bridged answers.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .text import Example

PREFIX_FILLERS = ("then", "also", "you", "should", "first", "next", "simply", "carefully")
SUFFIX_FILLERS = ("again", "for", "a", "while", "if", "needed", "now", "gently")
QUESTION_HEAD = ("how", "to")

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def content_words(size):
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
    reserved = set(PREFIX_FILLERS) | set(SUFFIX_FILLERS) | set(QUESTION_HEAD)
    words = [a + b for a, b in itertools.product(syllables, syllables) if a + b not in reserved]
    order = np.random.default_rng(20200101).permutation(len(words))
    if size > len(words):
        raise ConfigError(f"vocabulary of {size} exceeds the {len(words)} available pseudo-words")
    return [words[i] for i in order[:size]]


def word_pools(config):
    words = content_words(config.topic_size + config.link_size + config.vocab_size)
    t, k = config.topic_size, config.topic_size + config.link_size
    return words[:t], words[t:k], words[k:]


@dataclass
class GenConfig:
    mode: str = "keyword"
    vocab_size: int = 300
    topic_size: int = 16
    link_size: int = 16
    min_sentences: int = 5
    max_sentences: int = 8
    min_answers: int = 2
    max_answers: int = 4
    min_clause: int = 3
    max_clause: int = 5
    max_fillers: int = 2
    decoy_topics: bool = False

    def validate(self):
        if self.mode not in ("keyword", "relational"):
            raise ConfigError(f"unknown mode {self.mode!r}; expected keyword or relational")
        if self.min_answers < 2:
            raise ConfigError("min_answers must be >= 2")
        if self.min_answers > self.max_answers or self.min_sentences > self.max_sentences:
            raise ConfigError("min > max in a range")
        if self.max_answers > self.min_sentences:
            raise ConfigError(
                f"infeasible: up to {self.max_answers} answers but passages may have only {self.min_sentences} sentences")
        if self.min_clause < 2:
            raise ConfigError("min_clause must be >= 2")
        need = self.max_sentences * self.max_clause
        if self.vocab_size < need:
            raise ConfigError(f"vocab_size {self.vocab_size} too small; need >= {need}")
        if self.topic_size < self.max_sentences + 2:
            raise ConfigError(f"topic_size must be >= max_sentences + 2 = {self.max_sentences + 2}")
        if self.link_size < self.max_sentences:
            raise ConfigError(f"link_size must be >= max_sentences = {self.max_sentences}")
        return self


def _sentence(rng, clause):
    pre = list(rng.choice(PREFIX_FILLERS, size=rng.integers(0, 3), replace=False))
    post = list(rng.choice(SUFFIX_FILLERS, size=rng.integers(0, 3), replace=False))
    text = " ".join(pre + clause + post) + "."
    return text, len(pre), len(pre) + len(clause) - 1


def _one(config, rng, pools, ident):
    n_sent = int(rng.integers(config.min_sentences, config.max_sentences + 1))
    n_ans = int(rng.integers(config.min_answers, config.max_answers + 1))
    topics, links, plain = ([str(w) for w in rng.permutation(p)] for p in pools)

    def clause(*special):
        """Plain words with the given special words inserted at random positions."""
        n = int(rng.integers(config.min_clause, config.max_clause + 1))
        c = [plain.pop() for _ in range(max(n - len(special), 1))]
        for w in special:
            c.insert(int(rng.integers(0, len(c) + 1)), w)
        return c

    keywords = [topics.pop(), topics.pop()]
    clauses, is_answer = [], []

    def add(c, answer):
        clauses.append(c)
        is_answer.append(answer)

    if config.mode == "keyword":
        for _ in range(n_ans):
            add(clause(keywords[int(rng.integers(0, 2))]), True)
        for _ in range(n_sent - n_ans):
            add(clause(topics.pop()) if config.decoy_topics else clause(), False)
    else:
        n_bridged = int(rng.integers(1, n_ans))
        n_direct = n_ans - n_bridged
        bridges = [links.pop() for _ in range(n_direct)]
        for b in bridges:
            add(clause(keywords[int(rng.integers(0, 2))], b), True)
        for i in range(n_bridged):
            extra = [topics.pop()] if config.decoy_topics and rng.random() < 0.5 else []
            add(clause(bridges[i % n_direct], *extra), True)
        n_dis = n_sent - n_ans
        decoys = [links.pop() for _ in range(n_dis // 2)]
        for j in range(n_dis):
            special = [decoys[j // 2]] if j // 2 < len(decoys) else []
            if config.decoy_topics and rng.random() < 0.5:
                special.append(topics.pop())
            add(clause(*special), False)

    order = rng.permutation(len(clauses))
    texts, spans = [], []
    for k, idx in enumerate(order):
        text, start, end = _sentence(rng, clauses[idx])
        texts.append(text)
        if is_answer[idx]:
            spans.append((k, start, end))
    question = " ".join(QUESTION_HEAD + tuple(keywords)) + "?"
    return Example.from_text(ident, question, texts, spans).validate(min_answers=2)


def generate_synthetic(config, seed, n):
    """``n`` examples, identical for identical (config, seed)."""
    config.validate()
    rng = np.random.default_rng(seed)
    pools = word_pools(config)
    return [_one(config, rng, pools, f"{config.mode}-{seed}-{i}") for i in range(n)]


def bridged_answer_sentences(example):
    """Gold answer sentences sharing no token with the question."""
    q = set(example.question)
    return [k for k in example.answer_sentences() if not q.intersection(example.sentences[k])]
