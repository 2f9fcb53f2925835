"""Accuracy and F1 metrics, multi-seed aggregation, and the experiment report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import cross_entropy
from .data import Example
from .encoder import PrecomputedEmbeddings
from .errors import AggregationError, ConfigurationError, ReportError
from .model import Model, forward_batch, prepare_dataset

N_CLASSES = 3


def confusion_matrix(gold, predicted, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts with rows = gold class, columns = predicted class."""
    g = np.asarray(gold, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if g.shape != p.shape:
        raise ConfigurationError(f"gold and predictions differ in length: {g.shape} vs {p.shape}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (g, p), 1)
    return cm


def accuracy(cm: np.ndarray) -> float:
    total = int(cm.sum())
    return float(np.trace(cm)) / total if total else 0.0


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    """Per-class F1 where a class with no gold and no predictions scores 0."""
    tp = np.diag(cm).astype(np.float64)
    gold = cm.sum(axis=1).astype(np.float64)
    pred = cm.sum(axis=0).astype(np.float64)
    denom = gold + pred
    out = np.zeros(cm.shape[0], dtype=np.float64)
    nz = denom > 0
    out[nz] = 2.0 * tp[nz] / denom[nz]
    return out


def macro_f1(cm: np.ndarray) -> float:
    return float(per_class_f1(cm).mean())


def micro_f1(cm: np.ndarray) -> float:
    # Single-label multiclass: micro-averaged F1 equals accuracy.
    return accuracy(cm)


def weighted_f1(cm: np.ndarray) -> float:
    support = cm.sum(axis=1).astype(np.float64)
    total = support.sum()
    if total == 0:
        return 0.0
    return float((per_class_f1(cm) * support).sum() / total)


@dataclass
class EvalResult:
    accuracy: float
    macro_f1: float
    micro_f1: float
    weighted_f1: float
    per_class_f1: list[float]
    confusion: list[list[int]]
    loss: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def evaluate_model(model: Model, examples: list[Example], batch_size: int = 64,
                   embeddings: PrecomputedEmbeddings | None = None) -> EvalResult:
    """Deterministic metrics of a model over a labeled set."""
    if not examples:
        raise ConfigurationError("evaluation needs a non-empty example set")
    ds = prepare_dataset(model, examples, embeddings=embeddings)
    n = len(ds)
    predictions = np.empty(n, dtype=np.int64)
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        index = np.arange(start, min(start + batch_size, n))
        logits = forward_batch(model, ds, index)
        predictions[index] = logits.values.argmax(axis=1)
        loss_sum += float(cross_entropy(logits, ds.labels[index]).values) * len(index)
    cm = confusion_matrix(ds.labels, predictions)
    return EvalResult(
        accuracy=accuracy(cm),
        macro_f1=macro_f1(cm),
        micro_f1=micro_f1(cm),
        weighted_f1=weighted_f1(cm),
        per_class_f1=[float(x) for x in per_class_f1(cm)],
        confusion=cm.tolist(),
        loss=loss_sum / n,
    )


# ---------------------------------------------------------------------------
# Multi-seed aggregation


@dataclass
class SeedAggregate:
    """Per-seed values, their mean, and the standard error of the mean.

    The standard error is the sample standard deviation divided by the square
    root of the number of seeds; displays read "mean ± standard error".
    """

    values: list[float]
    mean: float
    stderr: float


def aggregate_seeds(values: list[float]) -> SeedAggregate:
    if len(values) < 2:
        raise AggregationError(f"need at least 2 per-seed values, got {len(values)}")
    arr = np.asarray(values, dtype=np.float64)
    shifted = arr - arr[0]  # translation keeps identical inputs at exactly zero spread
    mean = float(arr[0] + shifted.mean())
    stderr = float(shifted.std(ddof=1) / math.sqrt(len(values)))
    return SeedAggregate(values=[float(v) for v in values], mean=mean, stderr=stderr)


def format_aggregate(agg: SeedAggregate, digits: int = 2) -> str:
    return f"{agg.mean:.{digits}f} ± {agg.stderr:.{digits}f}"


# ---------------------------------------------------------------------------
# Experiment report


@dataclass
class ReportRow:
    model: str     # head name, upper-cased in the rendered table
    encoder: str   # encoder preset name
    acc: SeedAggregate
    f1: SeedAggregate
    details: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    rows: list[ReportRow]
    protocol: dict = field(default_factory=dict)


def experiment_report(cells: dict[tuple[str, str], dict[str, SeedAggregate]],
                      heads: list[str], encoders: list[str],
                      details: dict[tuple[str, str], dict] | None = None,
                      protocol: dict | None = None) -> ExperimentReport:
    """Assemble the Model × Encoder table; every cell must provide acc and f1."""
    rows = []
    for encoder_name in encoders:
        for head in heads:
            cell = cells.get((head, encoder_name))
            if cell is None or "acc" not in cell or "f1" not in cell:
                raise ReportError(f"missing result cell for head={head} encoder={encoder_name}")
            rows.append(ReportRow(
                model=head, encoder=encoder_name, acc=cell["acc"], f1=cell["f1"],
                details=(details or {}).get((head, encoder_name), {})))
    return ExperimentReport(rows=rows, protocol=dict(protocol or {}))


def render_report(report: ExperimentReport) -> str:
    """Aligned text table with two-decimal "mean ± stderr" percentage cells."""
    header = ("Model", "Encoder", "ACC", "F1")
    body = [(row.model.upper(), row.encoder,
             format_aggregate(row.acc), format_aggregate(row.f1))
            for row in report.rows]
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(4)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for cells in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _aggregate_to_dict(agg: SeedAggregate) -> dict:
    return {"values": agg.values, "mean": agg.mean, "stderr": agg.stderr}


def _aggregate_from_dict(doc: dict) -> SeedAggregate:
    return SeedAggregate(values=[float(v) for v in doc["values"]],
                         mean=float(doc["mean"]), stderr=float(doc["stderr"]))


def report_to_json(report: ExperimentReport) -> str:
    doc = {
        "columns": ["Model", "Encoder", "ACC", "F1"],
        "protocol": report.protocol,
        "rows": [
            {
                "model": row.model,
                "encoder": row.encoder,
                "acc": _aggregate_to_dict(row.acc),
                "f1": _aggregate_to_dict(row.f1),
                "display": {"acc": format_aggregate(row.acc), "f1": format_aggregate(row.f1)},
                "details": row.details,
            }
            for row in report.rows
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> ExperimentReport:
    doc = json.loads(text)
    rows = [ReportRow(model=r["model"], encoder=r["encoder"],
                      acc=_aggregate_from_dict(r["acc"]), f1=_aggregate_from_dict(r["f1"]),
                      details=r.get("details", {}))
            for r in doc["rows"]]
    return ExperimentReport(rows=rows, protocol=doc.get("protocol", {}))
