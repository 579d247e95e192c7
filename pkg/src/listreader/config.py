"""JSON run configuration: schema, defaults and conversion to TrainConfig."""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError

from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig

SEED_ENV = "LISTREADER_SEED"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    d: PositiveInt = 64
    encoder_layers: PositiveInt = 2
    heads: PositiveInt = 4
    ffn_dim: int = Field(0, ge=0, description="0 means 4 * d")
    max_length: PositiveInt = 256
    interaction_layers: PositiveInt = 3
    word_links: Literal["type", "occurrence"] = "type"
    truncate: bool = False


class TrainingSection(_Section):
    max_epochs: PositiveInt
    batch_size: PositiveInt = 16
    learning_rate: PositiveFloat = 1e-4
    lam: float = Field(2.0, ge=0)
    max_steps: int = Field(0, ge=0)
    early_stop_patience: PositiveInt = 10
    seed: int = 0
    min_count: PositiveInt = 1
    eval_batch_size: PositiveInt = 32


class DataSection(_Section):
    train: Optional[str] = None
    val: Optional[str] = None
    test: Optional[str] = None
    min_answers: int = Field(0, ge=0, description="reject examples with fewer answers (2 = strict)")


class AblationSection(_Section):
    name: Literal["none", "no_graph", "no_align", "separate_train"] = "none"
    variants: list[Literal["none", "no_graph", "no_align", "separate_train"]] = \
        ["none", "no_graph", "no_align", "separate_train"]
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)


class ConfigFile(_Section):
    training: TrainingSection
    model: ModelSection = Field(default_factory=ModelSection)
    data: DataSection = Field(default_factory=DataSection)
    ablation: AblationSection = Field(default_factory=AblationSection)

    def train_config(self, ablation=None):
        m = self.model
        mc = ModelConfig(d=m.d, encoder_layers=m.encoder_layers, heads=m.heads, ffn_dim=m.ffn_dim,
                         max_length=m.max_length, interaction_layers=m.interaction_layers,
                         word_links=m.word_links, truncate=m.truncate)
        return TrainConfig(**self.training.model_dump(), ablation=ablation or self.ablation.name, model=mc)


def _format_errors(exc):
    parts = []
    for err in exc.errors():
        key = ".".join(str(p) for p in err["loc"])
        if err["type"] == "missing":
            parts.append(f"missing required key '{key}'")
        elif err["type"] == "extra_forbidden":
            parts.append(f"unknown key '{key}'")
        else:
            parts.append(f"'{key}': {err['msg']}")
    return "; ".join(parts)


def parse_config(obj, env=None):
    """Validate a config mapping; ``LISTREADER_SEED`` in ``env`` overrides training.seed."""
    env = os.environ if env is None else env
    try:
        cfg = ConfigFile.model_validate(obj)
    except ValidationError as exc:
        raise ConfigError(f"config schema error: {_format_errors(exc)}") from None
    if env.get(SEED_ENV):
        try:
            cfg.training.seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    # the model-level checks (e.g. d divisible by heads) run here too
    cfg.train_config()
    return cfg


def load_config(path, env=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(obj, env)


def resolved(cfg):
    """Full config with defaults filled in, for echoing into run logs."""
    return cfg.model_dump()
