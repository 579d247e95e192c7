"""Independent reference implementations used as test oracles.

Each is written the slow, obvious way and shares no code with the package.
"""
import itertools
import math


def tfidf_reference(passage):
    """{(k, word): weight} by direct counting."""
    l = len(passage)
    out = {}
    vocab = sorted({w for s in passage for w in s})
    for w in vocab:
        df = 0
        for s in passage:
            if w in s:
                df += 1
        idf = math.log((1 + l) / (1 + df)) + 1
        for k, s in enumerate(passage):
            tf = s.count(w) / len(s)
            out[(k, w)] = tf * idf
    return out


def decode_reference(tags):
    """Flat inclusive spans from a B/I/O letter sequence.

    A span is a maximal run of non-O tags in which only the first tag may
    be anything; every later B starts a new run.
    """
    spans = []
    i, n = 0, len(tags)
    while i < n:
        if tags[i] == "O":
            i += 1
            continue
        j = i + 1
        while j < n and tags[j] == "I":
            j += 1
        spans.append((i, j - 1))
        i = j
    return spans


def split_reference(spans, lengths):
    """Split flat spans at sentence boundaries into (sent, start, end)."""
    owner = []
    for k, c in enumerate(lengths):
        owner += [(k, i) for i in range(c)]
    out = []
    for s, e in spans:
        pieces = itertools.groupby(range(s, e + 1), key=lambda t: owner[t][0])
        for k, grp in pieces:
            grp = list(grp)
            out.append((k, owner[grp[0]][1], owner[grp[-1]][1]))
    return out


def f1_reference(pred, gold):
    pred, gold = set(pred), set(gold)
    if not pred and not gold:
        return 1.0
    tp = len([t for t in pred if t in gold])
    if tp == 0:
        return 0.0
    precision = tp / len(pred)
    recall = tp / len(gold)
    return 2 * precision * recall / (precision + recall)
