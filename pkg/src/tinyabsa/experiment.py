"""Grid experiments: heads × encoder presets × seeds, resumable via a manifest.

Every completed cell (one seed of one grid point) is appended to
``manifest.json`` as it finishes, so an interrupted grid picks up where it
stopped. The final report aggregates each grid point over its seeds and is
written as an aligned text table and canonical JSON.
"""

from __future__ import annotations

import json
import os
from dataclasses import replace

from .data import Example
from .encoder import PrecomputedEmbeddings
from .errors import ConfigurationError
from .evaluation import (ExperimentReport, aggregate_seeds, evaluate_model,
                         experiment_report, render_report, report_to_json)
from .model import save_model
from .tokenizer import Vocab
from .training import TrainConfig, run_training

MANIFEST_NAME = "manifest.json"
REPORT_TEXT_NAME = "report.txt"
REPORT_JSON_NAME = "report.json"


def _cell_key(encoder_name: str, head: str, seed: int) -> str:
    return f"{encoder_name}|{head}|seed{seed}"


def _load_manifest(path: str) -> dict:
    if not os.path.exists(path):
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_manifest(path: str, manifest: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def run_experiment(base_cfg: TrainConfig, heads: list[str], encoders: list[str],
                   seeds: list[int], train_examples: list[Example],
                   val_examples: list[Example], test_examples: list[Example],
                   vocab: Vocab | None, out_dir: str,
                   head_overrides: dict | None = None,
                   encoder_overrides: dict | None = None,
                   precomputed: tuple[PrecomputedEmbeddings, PrecomputedEmbeddings,
                                      PrecomputedEmbeddings] | None = None,
                   save_checkpoints: bool = False,
                   log=None, epoch_log=None) -> ExperimentReport:
    """Run (or resume) the grid and write report.txt / report.json."""
    if not heads or not encoders or not seeds:
        raise ConfigurationError("experiment grid needs heads, encoders, and seeds")
    if len(set(seeds)) != len(seeds):
        raise ConfigurationError(f"duplicate seeds in {seeds}")
    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    manifest = _load_manifest(manifest_path)

    for encoder_name in encoders:
        for head in heads:
            for seed in seeds:
                key = _cell_key(encoder_name, head, seed)
                if key in manifest:
                    if log is not None:
                        log(f"[skip] {key} already in manifest")
                    continue
                cfg = replace(base_cfg, seed=seed, encoder_preset=encoder_name,
                              head_kind=head)
                model, history = run_training(
                    cfg, train_examples, val_examples, vocab,
                    head_overrides=head_overrides,
                    encoder_overrides=encoder_overrides,
                    precomputed=precomputed[:2] if precomputed else None,
                    log=epoch_log)
                result = evaluate_model(model, test_examples,
                                        embeddings=precomputed[2] if precomputed else None)
                if save_checkpoints:
                    save_model(model, os.path.join(out_dir, f"{encoder_name}.{head}.seed{seed}.ckpt"))
                manifest[key] = {
                    "encoder": encoder_name,
                    "head": head,
                    "seed": seed,
                    "test": result.to_dict(),
                    "best_epoch": history.best_epoch,
                    "stop_reason": history.stop_reason,
                    "epochs_run": len(history.epochs),
                }
                _write_manifest(manifest_path, manifest)
                if log is not None:
                    log(f"[done] {key}  acc {result.accuracy:.4f}  f1 {result.macro_f1:.4f}")

    cells: dict[tuple[str, str], dict] = {}
    details: dict[tuple[str, str], dict] = {}
    for encoder_name in encoders:
        for head in heads:
            per_seed = [manifest[_cell_key(encoder_name, head, seed)] for seed in seeds]
            # Reports show percentages, so aggregate percent values directly.
            acc = aggregate_seeds([100.0 * entry["test"]["accuracy"] for entry in per_seed])
            f1 = aggregate_seeds([100.0 * entry["test"]["macro_f1"] for entry in per_seed])
            micro = aggregate_seeds([100.0 * entry["test"]["micro_f1"] for entry in per_seed])
            weighted = aggregate_seeds([100.0 * entry["test"]["weighted_f1"] for entry in per_seed])
            cells[(head, encoder_name)] = {"acc": acc, "f1": f1}
            details[(head, encoder_name)] = {
                "micro_f1": {"mean": micro.mean, "stderr": micro.stderr},
                "weighted_f1": {"mean": weighted.mean, "stderr": weighted.stderr},
                "per_seed": [
                    {
                        "seed": entry["seed"],
                        "accuracy": entry["test"]["accuracy"],
                        "macro_f1": entry["test"]["macro_f1"],
                        "micro_f1": entry["test"]["micro_f1"],
                        "weighted_f1": entry["test"]["weighted_f1"],
                        "per_class_f1": entry["test"]["per_class_f1"],
                        "confusion": entry["test"]["confusion"],
                        "best_epoch": entry["best_epoch"],
                        "stop_reason": entry["stop_reason"],
                    }
                    for entry in per_seed
                ],
            }

    protocol = {
        "seeds": list(seeds),
        "heads": list(heads),
        "encoders": list(encoders),
        "epochs": base_cfg.epochs,
        "batch_size": base_cfg.batch_size,
        "lr": base_cfg.lr,
        "dropout": base_cfg.dropout,
        "patience": base_cfg.patience,
        "early_stop_metric": base_cfg.metric,
        "optimizer": (f"adam(beta1={base_cfg.adam_beta1}, beta2={base_cfg.adam_beta2}, "
                      f"eps={base_cfg.adam_eps})"),
        "error_bar": "standard error = sample std / sqrt(n_seeds)",
    }
    report = experiment_report(cells, heads, encoders, details=details, protocol=protocol)
    with open(os.path.join(out_dir, REPORT_TEXT_NAME), "w", encoding="utf-8") as fh:
        fh.write(render_report(report))
    with open(os.path.join(out_dir, REPORT_JSON_NAME), "w", encoding="utf-8") as fh:
        fh.write(report_to_json(report))
    return report
