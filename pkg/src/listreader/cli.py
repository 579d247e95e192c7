"""``listreader`` command line: gen | stats | train | eval | predict | trace | ablate.

Exit codes: 0 success, 1 usage, 2 validation, 3 runtime. Failures print a
single JSON line ``{"error": ..., "message": ..., "exit_code": ...}`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import SEED_ENV, load_config, resolved
from .errors import CheckpointError, ConfigError, ListReaderError, ValidationError
from .synthetic import GenConfig, generate_synthetic
from .text import Example, corpus_stats, load_jsonl, split_sentences, write_jsonl
from .training import (ABLATIONS, Reader, evaluate, format_ablation_table, prediction_record,
                       run_ablation_suite, train)

log = logging.getLogger("listreader")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3

PREDICTION_SCHEMA = {
    "type": "object",
    "required": ["id", "spans", "answer_sentences", "sentence_scores"],
    "properties": {
        "id": {"type": "string"},
        "spans": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["sent", "start", "end", "text"],
                "properties": {
                    "sent": {"type": "integer", "minimum": 0},
                    "start": {"type": "integer", "minimum": 0},
                    "end": {"type": "integer", "minimum": 0},
                    "text": {"type": "string"},
                },
            },
        },
        "answer_sentences": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "sentence_scores": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "span_f1": {"type": ["number", "null"]},
        "sent_f1": {"type": ["number", "null"]},
    },
}


class UsageError(ListReaderError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 by default; usage problems are 1 here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _load_data(path, min_answers=0, what="data"):
    if not path:
        raise UsageError(f"no {what} file given (flag or config data section)")
    try:
        return load_jsonl(path, min_answers)
    except OSError as exc:
        raise ValidationError(f"cannot read {what} file {path}: {exc.strerror}") from None
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def _load_reader(path):
    if not Path(path).is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return Reader.load(path)


# ---------------------------------------------------------------------------
# commands

def cmd_gen(args):
    cfg = GenConfig(mode=args.mode, vocab_size=args.vocab_size)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    examples = generate_synthetic(cfg, args.seed, args.n)
    try:
        write_jsonl(args.out, examples)
    except OSError as exc:
        raise OSError(f"cannot write {args.out}: {exc.strerror}") from None
    print(json.dumps(corpus_stats(examples), indent=2))
    return EXIT_OK


def cmd_stats(args):
    examples = _load_data(args.data, args.min_answers)
    print(json.dumps(corpus_stats(examples), indent=2))
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(args.config)
    data = _load_data(args.data or cfg.data.train, cfg.data.min_answers, "training")
    val = _load_data(args.val or cfg.data.val, cfg.data.min_answers, "validation")
    tcfg = cfg.train_config(args.ablation)
    echo = resolved(cfg)
    echo["ablation"]["name"] = tcfg.ablation
    log.info("resolved config: %s", json.dumps(echo, sort_keys=True))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.resolved.json", echo)
    report, _ = train(tcfg, data, val, out)
    print(json.dumps({"best_checkpoint": report.best_checkpoint, "best_epoch": report.best_epoch,
                      "best_val_loss": report.best_val_loss, "best_val_span_f1": report.best_val_span_f1,
                      "best_val_sent_f1": report.best_val_sent_f1, "ablation": report.ablation,
                      "steps": report.steps, "report": str(out / "report.json")}))
    return EXIT_OK


def cmd_eval(args):
    reader = _load_reader(args.checkpoint)
    data = _load_data(args.data)
    ev = evaluate(reader, data)
    summary = ev.to_dict()
    _write_json(args.out, summary)
    pred_path = Path(args.predictions) if args.predictions else Path(args.out).with_suffix(".predictions.jsonl")
    with open(pred_path, "w", encoding="utf-8") as fh:
        for rec in ev.per_example:
            fh.write(json.dumps(rec) + "\n")
    print(json.dumps({**summary, "predictions": str(pred_path)}))
    return EXIT_OK


def _read_passage(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read passage file {path}: {exc.strerror}") from None
    sents = split_sentences(text)
    if not sents:
        raise UsageError(f"passage file {path} is empty")
    return sents


def cmd_predict(args):
    if not args.question.strip():
        raise UsageError("--question is empty")
    sents = _read_passage(args.passage)
    reader = _load_reader(args.checkpoint)
    ex = Example.from_text("input", args.question, sents)
    (ans, scores), = reader.predict([ex])
    rec = prediction_record(ex, ans, scores, with_gold=False)
    if args.json:
        print(json.dumps(rec))
        return EXIT_OK
    if not ans.spans:
        print("no answers found")
    for k, (span, text) in enumerate(zip(ans.spans, ans.texts), 1):
        print(f"{k}. {text}")
        print(f"   sentence {span.sent} (p={scores[span.sent]:.3f}): {sents[span.sent]}")
    if ans.sentences:
        print("answer sentences: " + ", ".join(f"{s} (p={scores[s]:.3f})" for s in ans.sentences))
    return EXIT_OK


def cmd_trace(args):
    reader = _load_reader(args.checkpoint)
    data = _load_data(args.data)
    found = [ex for ex in data if ex.id == args.example_id]
    if not found:
        raise ValidationError(f"example id {args.example_id!r} not found in {args.data}")
    rows = reader.trace(found[0])
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer"] + [f"s{k}" for k in range(len(rows[0][1]))])
        for name, probs in rows:
            w.writerow([name] + [repr(float(p)) for p in probs])
    print(json.dumps({"rows": len(rows), "sentences": len(rows[0][1]), "out": args.out}))
    return EXIT_OK


def cmd_ablate(args):
    cfg = load_config(args.config)
    m = cfg.data.min_answers
    data = _load_data(args.data or cfg.data.train, m, "training")
    val = _load_data(args.val or cfg.data.val, m, "validation")
    test = _load_data(args.test or cfg.data.test, m, "test")
    seeds = args.seeds or cfg.ablation.seeds
    log.info("resolved config: %s", json.dumps(resolved(cfg), sort_keys=True))
    rows = run_ablation_suite(cfg.train_config("none"), data, val, test, seeds,
                              variants=tuple(cfg.ablation.variants), out_dir=args.out)
    table = format_ablation_table(rows)
    print(table)
    if args.out:
        _write_json(Path(args.out) / "ablation.json", [r.summary() for r in rows])
        (Path(args.out) / "ablation.txt").write_text(table + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="listreader", description="List-form extractive QA: train, evaluate and inspect.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic JSONL corpus")
    g.add_argument("--mode", choices=["keyword", "relational"], required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--vocab-size", type=int, default=GenConfig.vocab_size)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("stats", help="validate a JSONL corpus and print its statistics")
    s.add_argument("--data", required=True)
    s.add_argument("--min-answers", type=int, default=0)
    s.set_defaults(func=cmd_stats)

    t = sub.add_parser("train", help="train a model from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--data")
    t.add_argument("--val")
    t.add_argument("--out", required=True)
    t.add_argument("--ablation", choices=ABLATIONS)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--predictions", help="per-example JSONL (default: next to --out)")
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="answer one question over a plain-text passage")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--question", required=True)
    pr.add_argument("--passage", required=True)
    pr.add_argument("--json", action="store_true")
    pr.set_defaults(func=cmd_predict)

    tr = sub.add_parser("trace", help="per-sublayer sentence probabilities as CSV")
    tr.add_argument("--checkpoint", required=True)
    tr.add_argument("--example-id", required=True)
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_trace)

    a = sub.add_parser("ablate", help="train all ablation variants over several seeds")
    a.add_argument("--config", required=True)
    a.add_argument("--data")
    a.add_argument("--val")
    a.add_argument("--test")
    a.add_argument("--out")
    a.add_argument("--seeds", type=int, nargs="+")
    a.set_defaults(func=cmd_ablate)
    return p


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": " ".join(str(message).split()), "exit_code": code}),
          file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("UsageError", exc, EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail("UsageError", exc, EXIT_USAGE)
    except (ValidationError, ConfigError, CheckpointError) as exc:
        return _fail(type(exc).__name__, exc, EXIT_VALIDATION)
    except (ListReaderError, OSError, ValueError, ArithmeticError, MemoryError) as exc:
        return _fail(type(exc).__name__, exc, EXIT_RUNTIME)


__all__ = ["main", "build_parser", "PREDICTION_SCHEMA", "SEED_ENV"]
