"""Training loop, evaluation, persistence and ablation orchestration."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import CheckpointError, ConfigError, DivergenceError
from .extractor import decode_bio, predicted_sentences, sentence_f1, span_f1
from .model import ListReader, ModelConfig, collate
from .params import AdamState, adam_step, load_params, read_checkpoint, save_checkpoint
from .text import Vocab, build_vocab

log = logging.getLogger(__name__)

ABLATIONS = ("none", "no_graph", "no_align", "separate_train")


@dataclass
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 1e-4
    lam: float = 2.0
    max_epochs: int = 100
    max_steps: int = 0  # 0 = unlimited
    early_stop_patience: int = 10
    seed: int = 0
    ablation: str = "none"
    min_count: int = 1
    eval_batch_size: int = 32
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; expected one of {', '.join(ABLATIONS)}")
        for key in ("batch_size", "max_epochs", "early_stop_patience", "min_count", "eval_batch_size"):
            if getattr(self, key) < 1:
                raise ConfigError(f"training.{key} must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("training.learning_rate must be positive")
        if self.lam < 0 or self.max_steps < 0:
            raise ConfigError("training.lam and training.max_steps must be non-negative")

    def model_config(self):
        """Model dims with the ablation flags applied."""
        d = asdict(self.model)
        d["no_graph"] = self.model.no_graph or self.ablation == "no_graph"
        d["no_align"] = self.model.no_align or self.ablation == "no_align"
        return ModelConfig(**d)

    def to_dict(self):
        out = asdict(self)
        out["model"] = asdict(self.model)
        return out


# ---------------------------------------------------------------------------
# a trained system: vocabulary plus one joint model or a span/sentence pair

class Reader:
    def __init__(self, vocab, model_config, ablation="none", lam=2.0, seed=0):
        self.vocab = vocab
        self.model_config = model_config
        self.ablation = ablation
        self.lam = lam
        self.seed = seed
        if ablation == "separate_train":
            self.models = {"span": ListReader(model_config, len(vocab), seed),
                           "sent": ListReader(model_config, len(vocab), seed + 1)}
        else:
            self.models = {"joint": ListReader(model_config, len(vocab), seed)}
        self._graphs = {}

    @property
    def span_model(self):
        return self.models.get("span") or self.models["joint"]

    @property
    def sent_model(self):
        return self.models.get("sent") or self.models["joint"]

    def batch(self, examples):
        return collate(examples, self.vocab, self.model_config, self._graphs)

    def losses(self, batch):
        """Per-role training losses for one batch (Tensors with graphs attached)."""
        if "joint" in self.models:
            return {"joint": self.models["joint"].loss(batch, self.lam).total}
        return {"span": self.models["span"].loss(batch, 0.0).span,
                "sent": self.models["sent"].loss(batch, 1.0).sent}

    def forward(self, batch, trace=False):
        """(tag probs [B, N, 3], sentence probs [B, S, 2], trace) as numpy."""
        with T.no_grad():
            span_out = self.span_model.forward(batch, trace=trace)
            if self.sent_model is self.span_model:
                sent_out = span_out
            else:
                sent_out = self.sent_model.forward(batch, trace=trace)
            trace_rows = None
            if trace:
                trace_rows = [(name, self.sent_model.sentence_probs(sp).data[..., 1])
                              for name, sp in sent_out.trace]
        return span_out.tag_probs.data, sent_out.sent_probs.data, trace_rows

    def val_loss(self, examples, batch_size=32):
        """Mean per-example joint loss (L_w + lam * L_s) over ``examples``."""
        total = 0.0
        for i in range(0, len(examples), batch_size):
            chunk = examples[i:i + batch_size]
            b = self.batch(chunk)
            with T.no_grad():
                lw = self.span_model.loss(b, self.lam).span.item()
                ls = self.sent_model.loss(b, self.lam).sent.item()
            total += (lw + self.lam * ls) * len(chunk)
        return total / max(len(examples), 1)

    def predict(self, examples, batch_size=32, threshold=0.5):
        """List of (AnswerList, sentence scores) per example."""
        out = []
        for i in range(0, len(examples), batch_size):
            b = self.batch(examples[i:i + batch_size])
            tags, sents, _ = self.forward(b)
            for j, ex in enumerate(b.examples):
                ans = decode_bio(tags[j, :ex.n], ex.boundaries(), ex)
                scores = sents[j, :len(ex.sentences), 1]
                ans.sentences = predicted_sentences(scores, threshold)
                out.append((ans, scores))
        return out

    def trace(self, example):
        """Sentence probabilities after every interaction sublayer: [(name, [l_P])]."""
        b = self.batch([example])
        _, _, rows = self.forward(b, trace=True)
        return [(name, probs[0, :len(example.sentences)]) for name, probs in rows]

    # persistence

    def named_params(self):
        return {f"{role}/{name}": p for role, m in self.models.items() for name, p in m.params.items()}

    def meta(self):
        return {"model_config": self.model_config.to_dict(), "vocab": self.vocab.to_list(),
                "ablation": self.ablation, "lam": self.lam, "seed": self.seed,
                "roles": list(self.models)}

    def save(self, path, adam_states=None):
        adam = None
        if adam_states:
            first = next(iter(adam_states.values()))
            adam = AdamState(first.learning_rate, first.beta1, first.beta2, first.epsilon, first.t)
            for role, st in adam_states.items():
                adam.m.update({f"{role}/{k}": v for k, v in st.m.items()})
                adam.v.update({f"{role}/{k}": v for k, v in st.v.items()})
        save_checkpoint(path, self.named_params(), self.meta(), adam)

    @classmethod
    def load(cls, path):
        meta, arrays, _ = read_checkpoint(path)
        try:
            cfg = ModelConfig(**meta["model_config"])
            reader = cls(Vocab(meta["vocab"]), cfg, meta["ablation"], meta["lam"], meta["seed"])
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"checkpoint metadata incomplete: {exc}") from exc
        if sorted(meta.get("roles", [])) != sorted(reader.models):
            raise CheckpointError(f"checkpoint roles {meta.get('roles')} do not match ablation")
        for role, m in reader.models.items():
            prefix = role + "/"
            load_params(m.params, {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)})
        stray = [k for k in arrays if k.split("/", 1)[0] not in reader.models]
        if stray:
            raise CheckpointError(f"unknown parameter(s) in checkpoint: {', '.join(stray[:5])}")
        return reader

    def snapshot(self):
        return {role: m.params.snapshot() for role, m in self.models.items()}

    def restore(self, snap):
        for role, m in self.models.items():
            m.params.restore(snap[role])


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class EvalResult:
    span_f1: float
    sent_f1: float
    per_example: list

    def to_dict(self):
        return {"span_f1": self.span_f1, "sent_f1": self.sent_f1, "examples": len(self.per_example)}


def prediction_record(ex, ans, scores, with_gold=True):
    rec = {
        "id": ex.id,
        "spans": [{"sent": s.sent, "start": s.start, "end": s.end, "text": t}
                  for s, t in zip(ans.spans, ans.texts)],
        "answer_sentences": list(ans.sentences),
        "sentence_scores": [float(x) for x in scores],
        "span_f1": None,
        "sent_f1": None,
    }
    if with_gold:
        rec["span_f1"] = span_f1(ans, ex)
        rec["sent_f1"] = sentence_f1(ans.sentences, ex.answer_sentences())
    return rec


def evaluate(reader, dataset, batch_size=32):
    """Corpus-mean span/sentence F1 plus a per-example prediction record."""
    if isinstance(reader, (str, Path)):
        reader = Reader.load(reader)
    preds = reader.predict(dataset, batch_size)
    records = [prediction_record(ex, ans, scores) for ex, (ans, scores) in zip(dataset, preds)]
    if not records:
        return EvalResult(0.0, 0.0, [])
    return EvalResult(float(np.mean([r["span_f1"] for r in records])),
                      float(np.mean([r["sent_f1"] for r in records])), records)


# ---------------------------------------------------------------------------
# training

class EarlyStopper:
    """Stop once the monitored loss has not improved for ``patience`` evaluations."""

    def __init__(self, patience):
        self.patience = patience
        self.best = math.inf
        self.best_index = -1
        self.bad = 0
        self.count = 0

    def update(self, value):
        """Record one evaluation; True if it is the new best."""
        self.count += 1
        if value < self.best:
            self.best, self.best_index, self.bad = value, self.count, 0
            return True
        self.bad += 1
        return False

    @property
    def should_stop(self):
        return self.bad >= self.patience


@dataclass
class RunReport:
    seed: int
    ablation: str
    config: dict
    history: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    best_val_span_f1: float = 0.0
    best_val_sent_f1: float = 0.0
    best_checkpoint: str | None = None
    stopped_early: bool = False
    steps: int = 0
    wall_clock: float = 0.0

    def to_dict(self):
        return asdict(self)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2))
        with open(out / "loss_curve.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "steps", "train_loss", "val_loss", "val_span_f1", "val_sent_f1"])
            for h in self.history:
                w.writerow([h["epoch"], h["steps"], h["train_loss"], h["val_loss"],
                            h["val_span_f1"], h["val_sent_f1"]])


def make_batches(n_items, lengths, batch_size, rng):
    """Shuffled index batches, length-bucketed within pools of 8 batches."""
    order = rng.permutation(n_items)
    pool = batch_size * 8
    batches = []
    for i in range(0, n_items, pool):
        chunk = sorted(order[i:i + pool], key=lambda j: (lengths[j], j))
        batches.extend(chunk[k:k + batch_size] for k in range(0, len(chunk), batch_size))
    return [batches[i] for i in rng.permutation(len(batches))]


def _check_finite(loss_value, reader):
    if math.isfinite(loss_value):
        return
    params = reader.named_params()
    # bad values upstream poison every gradient, so look at values first
    for name, p in params.items():
        if not np.all(np.isfinite(p.data)):
            raise DivergenceError(f"non-finite values in parameter {name}")
    for name, p in params.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise DivergenceError(f"non-finite gradient in parameter {name}")
    raise DivergenceError(f"training loss became non-finite ({loss_value})")


def train(config, train_set, val_set, out_dir=None, vocab=None, progress=None):
    """Train a Reader; returns (RunReport, Reader restored to the best epoch)."""
    if not train_set or not val_set:
        raise ConfigError("train and validation sets must be non-empty")
    t0 = time.perf_counter()
    vocab = vocab or build_vocab(train_set, config.min_count)
    reader = Reader(vocab, config.model_config(), config.ablation, config.lam, config.seed)
    adam = {role: AdamState(learning_rate=config.learning_rate) for role in reader.models}
    rng = np.random.default_rng(config.seed)
    lengths = [ex.m + ex.n for ex in train_set]
    report = RunReport(config.seed, config.ablation,
                       {**config.to_dict(), "model": reader.model_config.to_dict()})
    stopper = EarlyStopper(config.early_stop_patience)
    best = reader.snapshot()
    ckpt = Path(out_dir) / "best.ckpt" if out_dir else None
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)

    steps = 0
    for epoch in range(1, config.max_epochs + 1):
        epoch_losses = []
        for idx in make_batches(len(train_set), lengths, config.batch_size, rng):
            batch = reader.batch([train_set[i] for i in idx])
            losses = reader.losses(batch)
            step_loss = 0.0
            for role, loss in losses.items():
                reader.models[role].params.zero_grad()
                loss.backward()
                step_loss += loss.item() * (config.lam if role == "sent" else 1.0)
                _check_finite(loss.item(), reader)
                adam_step(adam[role], reader.models[role].params)
            steps += 1
            epoch_losses.append(step_loss)
            report.step_losses.append(step_loss)
            if config.max_steps and steps >= config.max_steps:
                break
        val_loss = reader.val_loss(val_set, config.eval_batch_size)
        ev = evaluate(reader, val_set, config.eval_batch_size)
        rec = {"epoch": epoch, "steps": steps, "train_loss": float(np.mean(epoch_losses)),
               "val_loss": val_loss, "val_span_f1": ev.span_f1, "val_sent_f1": ev.sent_f1}
        report.history.append(rec)
        if progress:
            progress(rec)
        log.info("epoch %d loss %.4f val %.4f span %.3f sent %.3f", epoch, rec["train_loss"],
                 val_loss, ev.span_f1, ev.sent_f1)
        if stopper.update(val_loss):
            best = reader.snapshot()
            report.best_epoch, report.best_val_loss = epoch, val_loss
            report.best_val_span_f1, report.best_val_sent_f1 = ev.span_f1, ev.sent_f1
            if ckpt:
                reader.save(ckpt, adam)
        if stopper.should_stop:
            report.stopped_early = True
            break
        if config.max_steps and steps >= config.max_steps:
            break
    reader.restore(best)
    report.steps = steps
    report.best_checkpoint = str(ckpt) if ckpt else None
    report.wall_clock = time.perf_counter() - t0
    if out_dir:
        report.write(out_dir)
    return report, reader


# ---------------------------------------------------------------------------
# ablations

@dataclass
class AblationRow:
    variant: str
    seeds: list
    span_f1: list
    sent_f1: list
    results: list = field(default_factory=list, repr=False)

    def summary(self):
        def stats(xs):
            return {"mean": float(np.mean(xs)), "min": float(np.min(xs)), "max": float(np.max(xs))}
        return {"variant": self.variant, "seeds": self.seeds,
                "span_f1": stats(self.span_f1), "sent_f1": stats(self.sent_f1)}


def run_ablation_suite(base_config, train_set, val_set, test_set, seeds,
                       variants=ABLATIONS, out_dir=None):
    """Train every variant under identical seeds/data and score it on ``test_set``."""
    if not seeds:
        raise ConfigError("run_ablation_suite needs at least one seed")
    vocab = build_vocab(train_set, base_config.min_count)
    rows = []
    for variant in variants:
        row = AblationRow(variant, list(seeds), [], [])
        for seed in seeds:
            cfg = TrainConfig(**{**base_config.to_dict(), "ablation": variant, "seed": seed})
            run_dir = Path(out_dir) / f"{variant}-seed{seed}" if out_dir else None
            _, reader = train(cfg, train_set, val_set, run_dir, vocab=vocab)
            ev = evaluate(reader, test_set)
            row.span_f1.append(ev.span_f1)
            row.sent_f1.append(ev.sent_f1)
            row.results.append(ev)
        rows.append(row)
    return rows


def format_ablation_table(rows):
    lines = [f"{'variant':<16}{'span F1 mean [min, max]':>30}{'sent F1 mean [min, max]':>30}"]
    for r in rows:
        s = r.summary()
        sp, se = s["span_f1"], s["sent_f1"]
        lines.append(f"{r.variant:<16}{sp['mean']:>12.4f} [{sp['min']:.4f}, {sp['max']:.4f}]"
                     f"{se['mean']:>12.4f} [{se['min']:.4f}, {se['max']:.4f}]")
    return "\n".join(lines)
