"""Mini-batch fine-tuning with per-epoch validation and patience stopping."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tape, backward, cross_entropy
from .data import Example
from .encoder import PrecomputedEmbeddings, preset
from .errors import ConfigurationError, TrainingDivergedError
from .heads import HeadConfig
from .model import (Model, PreparedDataset, build_model, build_precomputed_model,
                    forward_batch, prepare_dataset)
from .optim import Adam, clip_global_norm
from .tokenizer import Vocab

EARLY_STOP_METRICS = ("val_accuracy", "val_macro_f1", "val_loss")


@dataclass
class TrainConfig:
    """The fixed fine-tuning regimen; defaults follow the reference recipe."""

    lr: float = 2e-5
    batch_size: int = 16
    epochs: int = 20
    dropout: float = 0.1
    patience: int = 5
    seed: int = 0
    encoder_preset: str = "tiny"
    head_kind: str = "fcn"
    metric: str = "val_accuracy"
    clip_norm: float = 1.0
    restore_best: bool = True
    max_len: int | None = None
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> "TrainConfig":
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ConfigurationError(f"train config fields must be positive: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.patience > self.epochs:
            raise ConfigurationError(
                f"patience {self.patience} exceeds epoch budget {self.epochs}")
        if self.metric not in EARLY_STOP_METRICS:
            raise ConfigurationError(
                f"unknown early-stop metric {self.metric!r}; use one of {EARLY_STOP_METRICS}")
        return self


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    val_macro_f1: float
    timestamp: float


@dataclass
class TrainHistory:
    """Per-epoch metrics plus where and why training stopped.

    ``canonical_json`` drops wall-clock timestamps so that two identically
    seeded runs serialize to identical bytes.
    """

    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0  # 1-based; 0 means "no epoch recorded yet"
    stop_reason: str = "completed"
    metric: str = "val_accuracy"

    def metric_values(self) -> list[float]:
        return [getattr(rec, self.metric) for rec in self.epochs]

    def to_dict(self, include_timestamps: bool = True) -> dict:
        doc = {
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
            "metric": self.metric,
            "epochs": [asdict(rec) for rec in self.epochs],
        }
        if not include_timestamps:
            for rec in doc["epochs"]:
                rec.pop("timestamp")
        return doc

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(include_timestamps=False), sort_keys=True, indent=2)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Seed streams


@dataclass
class RngStreams:
    """Independent named generators spawned from one master seed.

    Children are spawned from ``SeedSequence(seed)`` in the fixed order
    init, shuffle, dropout, so consuming one stream never shifts another.
    """

    init: np.random.Generator
    shuffle: np.random.Generator
    dropout: np.random.Generator


def rng_streams(seed: int) -> RngStreams:
    children = np.random.SeedSequence(seed).spawn(3)
    return RngStreams(
        init=np.random.default_rng(children[0]),
        shuffle=np.random.default_rng(children[1]),
        dropout=np.random.default_rng(children[2]),
    )


def set_seed(seed: int) -> RngStreams:
    return rng_streams(seed)


# ---------------------------------------------------------------------------
# Early stopping


def best_epoch_index(values: list[float], mode: str = "max") -> int:
    """1-based index of the best value; ties resolve to the earliest epoch."""
    if not values:
        return 0
    arr = np.asarray(values, dtype=np.float64)
    if mode == "min":
        arr = -arr
    return int(np.argmax(arr)) + 1  # argmax takes the first maximum


def early_stop_check(values: list[float], patience: int, mode: str = "max") -> str:
    """"stop" once the last ``patience`` epochs all failed to beat the best.

    Improvement means strictly better; ties do not reset the counter.
    """
    if not values:
        raise ConfigurationError("early_stop_check needs at least one recorded epoch")
    best = best_epoch_index(values, mode)
    return "stop" if len(values) - best >= patience else "continue"


def iter_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches covering every example exactly once."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


# ---------------------------------------------------------------------------
# Evaluation during training (metric plumbing lives in evaluation.py)


def _validation_metrics(model: Model, ds: PreparedDataset, batch_size: int) -> tuple[float, float, float]:
    from .evaluation import accuracy, confusion_matrix, macro_f1

    n = len(ds)
    predictions = np.empty(n, dtype=np.int64)
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        index = np.arange(start, min(start + batch_size, n))
        logits = forward_batch(model, ds, index)
        predictions[index] = logits.values.argmax(axis=1)
        loss_sum = loss_sum + float(cross_entropy(logits, ds.labels[index]).values) * len(index)
    cm = confusion_matrix(ds.labels, predictions)
    return loss_sum / n, accuracy(cm), macro_f1(cm)


# ---------------------------------------------------------------------------
# The training loop


def train_model(model: Model, cfg: TrainConfig, train_ds: PreparedDataset,
                val_ds: PreparedDataset, streams: RngStreams,
                log=None) -> TrainHistory:
    """Run the regimen on a built model; the model ends at its best epoch."""
    cfg.validate()
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ConfigurationError("training needs non-empty train and validation splits")
    optimizer = Adam(model.params, lr=cfg.lr, beta1=cfg.adam_beta1,
                     beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    history = TrainHistory(metric=cfg.metric)
    mode = "min" if cfg.metric == "val_loss" else "max"
    best_snapshot: dict[str, np.ndarray] | None = None
    best_value: float | None = None

    for epoch in range(1, cfg.epochs + 1):
        loss_sum = 0.0
        for batch_no, index in enumerate(iter_batches(len(train_ds), cfg.batch_size,
                                                      streams.shuffle)):
            with Tape() as tape:
                logits = forward_batch(model, train_ds, index, training=True,
                                       rng=streams.dropout, dropout_p=cfg.dropout)
                loss = cross_entropy(logits, train_ds.labels[index])
                loss_value = float(loss.values)
                if not np.isfinite(loss_value):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch {batch_no}")
                backward(loss, tape)
            clip_global_norm(model.params, cfg.clip_norm)
            optimizer.step()
            optimizer.zero_grad()
            loss_sum += loss_value * len(index)

        val_loss, val_acc, val_f1 = _validation_metrics(model, val_ds, max(cfg.batch_size, 64))
        record = EpochRecord(epoch=epoch, train_loss=loss_sum / len(train_ds),
                             val_loss=val_loss, val_accuracy=val_acc,
                             val_macro_f1=val_f1, timestamp=time.time())
        history.epochs.append(record)
        if log is not None:
            log(f"epoch {epoch:3d}  train_loss {record.train_loss:.4f}  "
                f"val_acc {val_acc:.4f}  val_f1 {val_f1:.4f}")

        value = getattr(record, cfg.metric)
        improved = (best_value is None
                    or (mode == "max" and value > best_value)
                    or (mode == "min" and value < best_value))
        if improved:
            best_value = value
            best_snapshot = {name: p.values.copy() for name, p in model.params.items()}
        if early_stop_check(history.metric_values(), cfg.patience, mode) == "stop":
            history.stop_reason = "early_stopped"
            break

    history.best_epoch = best_epoch_index(history.metric_values(), mode)
    if cfg.restore_best and best_snapshot is not None:
        for name, values in best_snapshot.items():
            model.params[name].values[...] = values
    return history


def run_training(cfg: TrainConfig, train_examples: list[Example],
                 val_examples: list[Example], vocab: Vocab | None,
                 head_overrides: dict | None = None,
                 encoder_overrides: dict | None = None,
                 precomputed: tuple[PrecomputedEmbeddings, PrecomputedEmbeddings] | None = None,
                 log=None) -> tuple[Model, TrainHistory]:
    """Build a model from config presets, train it, and return it with history."""
    cfg.validate()
    streams = rng_streams(cfg.seed)
    head_overrides = dict(head_overrides or {})
    encoder_overrides = dict(encoder_overrides or {})
    if cfg.max_len is not None:
        encoder_overrides.setdefault("max_len", cfg.max_len)
    encoder_overrides.setdefault("dropout", cfg.dropout)

    if cfg.encoder_preset == "precomputed":
        if precomputed is None:
            raise ConfigurationError("encoder preset 'precomputed' needs embedding files")
        train_emb, val_emb = precomputed
        max_len = cfg.max_len if cfg.max_len is not None else 64
        head_cfg = HeadConfig(kind=cfg.head_kind, dim=train_emb.dim, **head_overrides)
        model = build_precomputed_model(vocab, train_emb.dim, max_len, head_cfg, streams.init)
        train_ds = prepare_dataset(model, train_examples, embeddings=train_emb)
        val_ds = prepare_dataset(model, val_examples, embeddings=val_emb)
    else:
        if vocab is None:
            raise ConfigurationError("training a trainable encoder needs a vocabulary")
        enc_cfg = preset(cfg.encoder_preset, **encoder_overrides)
        head_cfg = HeadConfig(kind=cfg.head_kind, dim=enc_cfg.hidden, **head_overrides)
        model = build_model(vocab, enc_cfg, head_cfg, streams.init,
                            encoder_preset=cfg.encoder_preset)
        train_ds = prepare_dataset(model, train_examples)
        val_ds = prepare_dataset(model, val_examples)

    if log is not None:
        from .heads import count_parameters

        log(f"parameters: encoder {count_parameters(model.params, 'enc/')}, "
            f"head {count_parameters(model.params, 'head/')}")
    history = train_model(model, cfg, train_ds, val_ds, streams, log=log)
    return model, history
