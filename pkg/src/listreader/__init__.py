"""Extractive reader for list-form answers, on a small numpy autodiff core."""
from .extractor import AnswerList, decode_bio, joint_loss, sentence_f1, span_f1
from .model import ListReader, ModelConfig
from .synthetic import GenConfig, generate_synthetic
from .text import Example, Span, Vocab, build_vocab, compute_tfidf, load_jsonl, write_jsonl
from .training import Reader, TrainConfig, evaluate, run_ablation_suite, train

__version__ = "0.1.0"
