"""End-to-end acceptance checks AC1-AC8.

Each test records one PASS/FAIL line through the ``verdict`` fixture; the
lines are repeated at the end of the pytest run. AC5-AC7 train full-size
models and dominate the runtime.
"""
import csv
import itertools
import json
import time

import numpy as np
import pytest

from helpers import model_gradcheck
from oracles import decode_reference, f1_reference, split_reference, tfidf_reference
from listreader import tensor as T
from listreader.cli import main
from listreader.encoder import init_sent_ext, sent_ext
from listreader.extractor import decode_bio, span_f1
from listreader.interaction import align, build_graph, gcn_block, init_align, init_gcn, similarity
from listreader.model import ModelConfig
from listreader.params import ParamStore
from listreader.synthetic import GenConfig, bridged_answer_sentences, generate_synthetic
from listreader.text import TAGS, Example, compute_tfidf, write_jsonl
from listreader.training import Reader, TrainConfig, evaluate, train

SEEDS = (0, 1, 2)
CORPUS_SEED = 13
AC5_EPOCHS = 40
AC6_EPOCHS = 60


def corpus(mode):
    """500 train / 100 validation / 100 test examples from one generator stream."""
    data = generate_synthetic(GenConfig(mode=mode), CORPUS_SEED, 700)
    return data[:500], data[500:600], data[600:]


def cpu_clock():
    return time.process_time()


# ---------------------------------------------------------------------------
# AC1

def test_ac1_gradient_integrity(verdict):
    t0 = cpu_clock()
    errors = model_gradcheck(d=16, layers=2, n_examples=2)
    worst = max(errors, key=errors.get)
    took = cpu_clock() - t0
    ok = errors[worst] <= 1e-4 and took <= 120
    verdict("AC1", ok, f"{len(errors)} parameters, max rel err {errors[worst]:.2e} ({worst}), {took:.0f}s cpu")
    assert errors[worst] <= 1e-4, worst
    assert took <= 120


# ---------------------------------------------------------------------------
# AC2

def _random_passage(rng, alphabet="abcdefgh"):
    return [list(rng.choice(list(alphabet), size=rng.integers(1, 6))) for _ in range(rng.integers(1, 6))]


def test_ac2_normalization_suite(verdict):
    t0 = cpu_clock()
    rng = np.random.default_rng(2024)
    d = 6
    store = ParamStore(seed=3)
    init_align(store, d, "a.")
    init_gcn(store, d, "g.")
    init_sent_ext(store, d)
    W3, b3 = T.Tensor(rng.normal(size=4 * d)), T.Tensor(rng.normal(size=1))
    zero = {k: T.Tensor(np.zeros(store[f"g.{k}"].shape)) for k in ("W4", "b4", "W5", "b5")}
    failures = {"softmax": 0, "adjacency": 0, "gcn": 0, "hull": 0}
    for _ in range(1000):
        m, n = rng.integers(1, 6), rng.integers(1, 9)
        HQ = T.Tensor(rng.normal(scale=3, size=(m, d)))
        HP = T.Tensor(rng.normal(scale=3, size=(n, d)))
        a = align(HQ, HP, similarity(HQ, HP, W3, b3), store, "a.")
        if (np.abs(a.row_norm.data.sum(axis=1) - 1).max() > 1e-9
                or np.abs(a.col_norm.data.sum(axis=0) - 1).max() > 1e-9):
            failures["softmax"] += 1

        passage = _random_passage(rng)
        g = build_graph(passage, word_links=str(rng.choice(["type", "occurrence"])))
        A, s = g.normalized, g.n_sent
        off = A - np.diag(np.diag(A))
        if (not np.allclose(A, A.T, rtol=0, atol=1e-15) or off[:s, :s].any() or off[s:, s:].any()
                or not off[:s, s:].any()):
            failures["adjacency"] += 1

        G = T.Tensor(rng.normal(scale=2, size=(s + g.n_word, d)))
        out = gcn_block(G, A, zero["W4"], zero["b4"], zero["W5"], zero["b5"], store["g.ln.g"], store["g.ln.b"])
        if np.abs(out.data - T.layer_norm(G, store["g.ln.g"], store["g.ln.b"]).data).max() > 1e-12:
            failures["gcn"] += 1

        states = rng.normal(scale=5, size=(rng.integers(1, 8), d))
        pooled, alpha = sent_ext(T.Tensor(states), store["sentext.W1"], store["sentext.b1"],
                                 store["sentext.W2"], store["sentext.b2"], return_weights=True)
        w = alpha.data
        inside = (np.all(w >= 0) and abs(w.sum() - 1) <= 1e-9
                  and np.allclose(pooled.data, w @ states, rtol=0, atol=1e-9)
                  and np.all(pooled.data >= states.min(0) - 1e-9) and np.all(pooled.data <= states.max(0) + 1e-9))
        if not inside:
            failures["hull"] += 1
    took = cpu_clock() - t0
    ok = not any(failures.values()) and took <= 60
    verdict("AC2", ok, f"1000 trials per check, failures {failures}, {took:.0f}s cpu")
    assert not any(failures.values()), failures
    assert took <= 60


# ---------------------------------------------------------------------------
# AC3

def test_ac3_decode_and_metric_oracles(verdict):
    t0 = cpu_clock()
    decode_bad = 0
    for tags in itertools.product(TAGS, repeat=6):
        got = [tuple(s) for s in decode_bio(list(tags), [(0, 6)]).spans]
        decode_bad += got != split_reference(decode_reference(tags), [6])

    rng = np.random.default_rng(3)
    f1_bad = 0
    for _ in range(1000):
        pred = set(rng.choice(10, size=rng.integers(0, 8), replace=False).tolist())
        gold_tokens = sorted(rng.choice(10, size=rng.integers(0, 8), replace=False).tolist())
        gold = Example.from_text("g", "q", [" ".join("abcdefghij")], [(0, i, i) for i in gold_tokens])
        f1_bad += abs(span_f1(pred, gold) - f1_reference(pred, gold_tokens)) > 1e-12

    # every sentence-length profile up to 5 sentences x 6 tokens, random words over 4 letters
    tfidf_bad, profiles = 0, 0
    for l in range(1, 6):
        for lengths in itertools.product(range(1, 7), repeat=l):
            passage = [list(rng.choice(list("abcd"), size=c)) for c in lengths]
            w, words = compute_tfidf(passage)
            ref = tfidf_reference(passage)
            profiles += 1
            tfidf_bad += any(abs(w[k, words.index(t)] - v) > 1e-12 * max(v, 1.0) for (k, t), v in ref.items())
    took = cpu_clock() - t0
    ok = decode_bad == f1_bad == tfidf_bad == 0 and took <= 60
    verdict("AC3", ok, f"decode {decode_bad}/{3 ** 6} mismatches, span_f1 {f1_bad}/1000, "
                       f"tfidf {tfidf_bad}/{profiles} passages, {took:.0f}s cpu")
    assert (decode_bad, f1_bad, tfidf_bad) == (0, 0, 0)
    assert took <= 60


# ---------------------------------------------------------------------------
# AC4

def test_ac4_overfit(verdict):
    t0 = cpu_clock()
    data = generate_synthetic(GenConfig(mode="keyword"), 4, 8)
    cfg = TrainConfig(model=ModelConfig(d=32, interaction_layers=2), learning_rate=1e-3, batch_size=8,
                      max_epochs=500, max_steps=500, early_stop_patience=500, seed=0)
    report, reader = train(cfg, data, data)
    below = [i for i, v in enumerate(report.step_losses) if v < 0.05]
    ev = evaluate(reader, data)
    took = cpu_clock() - t0
    ok = bool(below) and ev.span_f1 == 1.0 and took <= 300
    first = below[0] + 1 if below else None
    verdict("AC4", ok, f"loss < 0.05 first at step {first} of {report.steps}, train span F1 {ev.span_f1:.3f}, "
                       f"{took:.0f}s cpu")
    assert below and ev.span_f1 == 1.0
    assert took <= 300


# ---------------------------------------------------------------------------
# AC5

def test_ac5_learnability(verdict):
    t0 = cpu_clock()
    tr, va, te = corpus("keyword")
    scores = []
    for seed in SEEDS:
        cfg = TrainConfig(model=ModelConfig(d=64), max_epochs=AC5_EPOCHS, seed=seed)
        _, reader = train(cfg, tr, va)
        ev = evaluate(reader, te)
        scores.append((ev.span_f1, ev.sent_f1))
    took = cpu_clock() - t0
    good = sum(s >= 0.85 and t >= 0.90 for s, t in scores)
    ok = good >= 2 and took <= 1800
    detail = ", ".join(f"seed {k}: span {s:.3f} sent {t:.3f}" for k, (s, t) in zip(SEEDS, scores))
    verdict("AC5", ok, f"{detail}; {good}/3 seeds meet 0.85/0.90, {took:.0f}s cpu")
    assert good >= 2, scores
    assert took <= 1800


# ---------------------------------------------------------------------------
# AC6 / AC7: relational runs shared between the two criteria

def _bridged_recall(reader, data):
    hits = total = 0
    for ex, (ans, _) in zip(data, reader.predict(data)):
        bridged = bridged_answer_sentences(ex)
        hits += len(set(bridged) & set(ans.sentences))
        total += len(bridged)
    return hits / total


@pytest.fixture(scope="module")
def relational_runs():
    tr, va, te = corpus("relational")
    cache = {}

    def get(variant, layers=3):
        key = (variant, layers)
        if key not in cache:
            t0 = cpu_clock()
            runs = []
            for seed in SEEDS:
                cfg = TrainConfig(model=ModelConfig(d=64, interaction_layers=layers), max_epochs=AC6_EPOCHS,
                                  seed=seed, ablation=variant)
                _, reader = train(cfg, tr, va)
                ev = evaluate(reader, te)
                runs.append({"span_f1": ev.span_f1, "sent_f1": ev.sent_f1,
                             "bridged_recall": _bridged_recall(reader, te)})
            cache[key] = {"runs": runs, "cpu": cpu_clock() - t0,
                          **{k: float(np.mean([r[k] for r in runs])) for k in runs[0]}}
        return cache[key]

    return get


def test_ac6_inter_answer_reasoning(verdict, relational_runs):
    full, ablated = relational_runs("none"), relational_runs("no_graph")
    took = full["cpu"] + ablated["cpu"]
    ok = (full["span_f1"] > ablated["span_f1"] and full["bridged_recall"] > ablated["bridged_recall"]
          and took <= 3600)
    verdict("AC6", ok, f"span F1 full {full['span_f1']:.3f} vs no_graph {ablated['span_f1']:.3f}; "
                       f"bridged recall {full['bridged_recall']:.3f} vs {ablated['bridged_recall']:.3f}; "
                       f"{took:.0f}s cpu")
    assert full["span_f1"] > ablated["span_f1"]
    assert full["bridged_recall"] > ablated["bridged_recall"]
    assert took <= 3600


def test_ac7_depth_trend(verdict, relational_runs):
    deep, shallow = relational_runs("none", 3), relational_runs("none", 1)
    ok = deep["span_f1"] >= shallow["span_f1"]
    verdict("AC7", ok, f"mean span F1 N=3 {deep['span_f1']:.3f} vs N=1 {shallow['span_f1']:.3f}")
    assert deep["span_f1"] >= shallow["span_f1"]


# ---------------------------------------------------------------------------
# AC8

def test_ac8_reproducibility_and_persistence(verdict, tmp_path):
    data = generate_synthetic(GenConfig(mode="relational"), 8, 24)
    tr, va = data[:16], data[16:]
    cfg = TrainConfig(model=ModelConfig(d=16, heads=2, interaction_layers=2), learning_rate=1e-3,
                      batch_size=4, max_epochs=3, seed=7)
    rep_a, ra = train(cfg, tr, va, out_dir=tmp_path / "a")
    rep_b, rb = train(cfg, tr, va, out_dir=tmp_path / "b")
    identical = rep_a.step_losses == rep_b.step_losses and all(
        np.array_equal(p.data, q.data) and p.data.tobytes() == q.data.tobytes()
        for p, q in zip(ra.named_params().values(), rb.named_params().values()))

    before = evaluate(ra, va)
    after = evaluate(tmp_path / "a" / "best.ckpt", va)
    persisted = (before.span_f1, before.sent_f1, before.per_example) == (after.span_f1, after.sent_f1,
                                                                        after.per_example)

    write_jsonl(tmp_path / "va.jsonl", va)
    ckpt = str(tmp_path / "a" / "best.ckpt")
    agree = 0
    for ex in va:
        out = tmp_path / f"trace-{ex.id}.csv"
        assert main(["trace", "--checkpoint", ckpt, "--example-id", ex.id, "--data",
                     str(tmp_path / "va.jsonl"), "--out", str(out)]) == 0
        final = [float(x) for x in list(csv.reader(open(out)))[-1][1:]]
        assert main(["eval", "--checkpoint", ckpt, "--data", str(tmp_path / "va.jsonl"),
                     "--out", str(tmp_path / "ev.json")]) == 0
        recs = {json.loads(line)["id"]: json.loads(line) for line in open(tmp_path / "ev.predictions.jsonl")}
        agree += [k for k, p in enumerate(final) if p > 0.5] == recs[ex.id]["answer_sentences"]
    ok = identical and persisted and agree == len(va)
    verdict("AC8", ok, f"bitwise-identical reruns {identical}, checkpoint F1 preserved {persisted}, "
                       f"trace/eval agreement {agree}/{len(va)}")
    assert identical and persisted and agree == len(va)
