"""Flat key=value run configuration.

One file drives a whole run: dataset paths, mining parameters, model
architecture, and training hyperparameters. Lines are `key = value`, `#`
starts a comment, unknown keys are errors so typos cannot silently fall
back to defaults. Defaults mirror the shipped FB15k-237 link-prediction
configuration.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, fields

from .errors import UsageError
from .model import ModelConfig
from .training import TrainConfig

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


@dataclass
class RunConfig:
    # data
    train: str = ""
    valid: str = ""
    test: str = ""
    corpus: str = ""
    out_dir: str = "runs/latest"
    # path mining
    num_paths: int = 8
    max_len: int = 20
    # model
    embedding_dim: int = 64
    paths_per_entity: int = 4
    encoder_layers: int = 1
    encoder_heads: int = 2
    encoder_ff_dim: int = 256
    dropout: float = 0.1
    aggregator: str = "transformer"
    aggregator_layers: int = 1
    positional: str = "entity_focused"
    projector_hidden: int = 0
    log1p_contexts: bool = False
    # training
    task: str = "lp"
    loss: str = "ce"
    label_smoothing: float = 0.01
    negatives: int = 99
    valid_negatives: int = 99
    lr: float = 0.001
    batch_size: int = 4096
    accum_batches: int = 8
    max_epochs: int = 500
    patience: int = 10
    min_delta: float = 0.0
    # run control
    seed: int = 42
    workers: int = 1
    # ablations
    no_aggregator: bool = False
    single_path: bool = False
    standard_positionals: bool = False

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            embedding_dim=self.embedding_dim,
            paths_per_entity=self.paths_per_entity,
            max_len=self.max_len,
            encoder_layers=self.encoder_layers,
            encoder_heads=self.encoder_heads,
            encoder_ff_dim=self.encoder_ff_dim,
            dropout=self.dropout,
            aggregator=self.aggregator,
            aggregator_layers=self.aggregator_layers,
            positional=self.positional,
            projector_hidden=self.projector_hidden,
            log1p_contexts=self.log1p_contexts,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            task=self.task,
            loss=self.loss,
            label_smoothing=self.label_smoothing,
            negatives=self.negatives,
            valid_negatives=self.valid_negatives,
            lr=self.lr,
            batch_size=self.batch_size,
            accum_batches=self.accum_batches,
            max_epochs=self.max_epochs,
            patience=self.patience,
            min_delta=self.min_delta,
            seed=self.seed,
            no_aggregator=self.no_aggregator,
            single_path=self.single_path,
            standard_positionals=self.standard_positionals,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, raw: str, where: str = "") -> object:
    """Convert a raw string to the declared type of a RunConfig field."""
    if key not in _FIELD_TYPES:
        raise UsageError(f"unknown configuration key '{key}'{where}")
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if ftype == "bool" or ftype is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if ftype == "int" or ftype is int:
            return int(raw)
        if ftype == "float" or ftype is float:
            return float(raw)
        return raw
    except ValueError:
        raise UsageError(f"bad value {raw!r} for key '{key}'{where}") from None


def set_key(cfg: RunConfig, key: str, raw: str, where: str = "") -> None:
    setattr(cfg, key, coerce(key, raw, where))


def parse_config_text(text: str, origin: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UsageError(f"{origin}:{lineno}: expected 'key = value', "
                             f"got {line.strip()!r}")
        key, raw = stripped.split("=", 1)
        set_key(cfg, key.strip(), raw, where=f" ({origin}:{lineno})")
    return cfg


def parse_config(path) -> RunConfig:
    with io.open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read(), origin=str(path))


def config_text(cfg: RunConfig) -> str:
    """Echo of the effective configuration, parseable by parse_config."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
